"""Pseudo-arclength continuation of positive solution branches.

Two charts are used. Chart U has unknowns ``(u, lam)``; chart V has the
rescaled unknowns ``(v, mu)`` with ``v = lam^{-1/(1-q)} u`` and
``mu = lam^{(p-1)/(1-q)}``, which stays regular as a branch approaches
``(lam, u) = (0, 0)``: there ``v`` tends to a positive solution of the
limit problem while ``u`` collapses.

Arclength is measured in the product inner product ``<(a, s), (b, t)> =
a^T M b + s t`` of the active chart.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    AssembledForms,
    Field,
    ProblemParams,
    dresidual_dlambda,
    dresidual_dmu,
    jacobian,
    jacobian_rescaled,
    residual,
    residual_rescaled,
)
from .errors import (
    CorrectorDiverged,
    NonDifferentiableBoundary,
    PreconditionError,
    PreconditionLambdaOmega,
    SolverError,
)
from .solvers import newton_solve
from .spectra import gamma1_linearized, lambda_omega, sigma1, stability_label
from .variational import EnergyTriple, energies

__all__ = [
    "BranchPoint",
    "Branch",
    "ArcSegment",
    "FoldPoint",
    "continue_from_trivial_one",
    "continue_regularized",
    "trace_continuum_C0",
    "detect_fold",
    "locate_fold",
    "chart_switch",
    "detect_bifurcation_from_zero",
    "branch_distance",
    "project_onto_branch",
    "lambda_bound_sweep",
]

CHART_SWITCH_RATIO = 0.05
CHART_SWITCH_ABS = 0.05
CORRECTOR_MAX_ITER = 8
CORRECTOR_TOL = 1e-10


@dataclass
class BranchPoint:
    lam: float
    mu: float
    chart: str
    field: Field
    norms: dict
    energies: EnergyTriple
    J_value: float
    gamma1: float | None = None
    stability: str = "NotComputed"
    fold_flag: bool = False
    residual: float = 0.0
    arclength: float = 0.0
    tangent: tuple | None = field(default=None, repr=False)

    @property
    def u(self) -> np.ndarray:
        """Nodal values in chart U."""
        if self.chart == "U":
            return self.field.coeffs
        return self.field.coeffs * self.lam ** self._kappa

    _kappa: float = field(default=2.0, repr=False)

    def as_row(self) -> dict:
        n = self.norms
        return {
            "lambda": self.lam, "mu": self.mu, "chart": self.chart,
            "l2": n["L2"], "h1": n["H1"], "linf": n["Linf"], "min_bd": n["min_boundary"],
            "E": self.energies.E, "A": self.energies.A, "B": self.energies.B,
            "J": self.J_value, "gamma1": np.nan if self.gamma1 is None else self.gamma1,
            "stability": self.stability, "fold_flag": int(self.fold_flag),
        }


@dataclass
class Branch:
    points: list
    eps: float
    endpoints: list = field(default_factory=list)
    lambda_star: float | None = None
    folds: list = field(default_factory=list)
    status: str = "complete"
    meta: dict = field(default_factory=dict)

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def fold_count(self) -> int:
        return len(self.folds)

    def fields_u(self) -> np.ndarray:
        return np.array([p.u for p in self.points])

    def rows(self) -> list:
        return [p.as_row() for p in self.points]


@dataclass
class ArcSegment:
    """A piece of branch parametrized by arclength offset ``s`` from an anchor.

    ``slope(s)`` returns the parameter component of the unit tangent and
    ``point(s)`` the corrected point (any object) at offset ``s``.
    """

    s_lo: float
    s_hi: float
    slope: Callable[[float], float]
    point: Callable[[float], object] | None = None


@dataclass
class FoldPoint:
    s: float
    slope: float
    point: object


def locate_fold(slope: Callable[[float], float], s_lo: float, s_hi: float,
                tol: float = 1e-8, max_iter: int = 200) -> float:
    """Bisection on arclength for a sign change of ``slope`` until |slope| < tol."""
    f_lo, f_hi = slope(s_lo), slope(s_hi)
    if f_lo == 0:
        return s_lo
    if f_hi == 0:
        return s_hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError("no sign change of the slope on the segment")
    for _ in range(max_iter):
        mid = 0.5 * (s_lo + s_hi)
        f_mid = slope(mid)
        if abs(f_mid) < tol or s_hi - s_lo < 1e-15 * max(1.0, abs(mid)):
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            s_lo, f_lo = mid, f_mid
        else:
            s_hi = mid
    return 0.5 * (s_lo + s_hi)


def detect_fold(segment: ArcSegment, tol: float = 1e-8) -> FoldPoint | None:
    """Refine a fold inside a segment whose slope changes sign; None otherwise."""
    a, b = segment.slope(segment.s_lo), segment.slope(segment.s_hi)
    if np.sign(a) == np.sign(b) and a != 0 and b != 0:
        return None
    s = locate_fold(segment.slope, segment.s_lo, segment.s_hi, tol)
    pt = segment.point(s) if segment.point is not None else None
    return FoldPoint(s, float(segment.slope(s)), pt)


# --- chart machinery ----------------------------------------------------------

class _Chart:
    def __init__(self, forms: AssembledForms, params: ProblemParams, name: str):
        self.forms, self.params, self.name = forms, params, name
        self.W = forms.M

    def pars(self, par):
        if self.name == "U":
            return self.params.with_(lam=max(par, 0.0))
        return self.params.with_(mu=max(par, 0.0))

    def F(self, x, par):
        if self.name == "U":
            return residual(self.forms, x, self._signed(par))
        return residual_rescaled(self.forms, x, self._signed(par))

    def _signed(self, par):
        # Parameters are validated nonnegative; negative values are reached
        # only by predictors overshooting an endpoint, evaluated by linearity.
        return _SignedParams(self.params, self.name, par)

    def J(self, x, par):
        if self.name == "U":
            return jacobian(self.forms, x, self._signed(par))
        return jacobian_rescaled(self.forms, x, self._signed(par))

    def Fp(self, x, par):
        if self.name == "U":
            return dresidual_dlambda(self.forms, x, self.params)
        return dresidual_dmu(self.forms, x, self.params)

    def inner(self, a, sa, b, sb):
        return float(a @ (self.W @ b) + sa * sb)


class _SignedParams:
    """ProblemParams look-alike allowing a negative continuation parameter."""

    def __init__(self, base: ProblemParams, chart: str, par: float):
        self.p, self.q, self.eps = base.p, base.q, base.eps
        self.lam = par if chart == "U" else base.lam
        self.mu = par if chart == "V" else base.mu
        self.kappa = base.kappa


def _bordered_solve(J, col, row, corner, rhs, rhs_last):
    n = J.shape[0]
    A = sp.bmat([[J, sp.csr_matrix(col.reshape(-1, 1))],
                 [sp.csr_matrix(row.reshape(1, -1)), sp.csr_matrix([[corner]])]], format="csc")
    b = np.concatenate([rhs, [rhs_last]])
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            z = spla.spsolve(A, b)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise CorrectorDiverged(f"singular bordered system: {exc}") from exc
    if not np.all(np.isfinite(z)):
        raise CorrectorDiverged("non-finite bordered solve")
    return z[:n], float(z[n])


def _tangent(ch: _Chart, x, par, prev):
    J = ch.J(x, par)
    Fp = ch.Fp(x, par)
    px, pp = prev
    tx, tp = _bordered_solve(J, Fp, ch.W @ px, pp, np.zeros_like(x), 1.0)
    nrm = np.sqrt(ch.inner(tx, tp, tx, tp))
    tx, tp = tx / nrm, tp / nrm
    if ch.inner(tx, tp, px, pp) < 0:
        tx, tp = -tx, -tp
    return tx, tp


def _correct(ch: _Chart, x0, p0, tau, ds, tol=CORRECTOR_TOL, max_iter=CORRECTOR_MAX_ITER):
    """Newton on [R(x, par); <tau, (x, par) - (x0, p0)> - ds] from the secant predictor."""
    tx, tp = tau
    x = x0 + ds * tx
    par = p0 + ds * tp
    w = ch.W @ tx
    for it in range(1, max_iter + 1):
        try:
            r = ch.F(x, par)
            if np.linalg.norm(r) < tol and it > 1:
                return x, par, it - 1, float(np.linalg.norm(r))
            J = ch.J(x, par)
        except NonDifferentiableBoundary as exc:
            raise CorrectorDiverged(str(exc)) from exc
        Fp = ch.Fp(x, par)
        g = float(w @ (x - x0) + tp * (par - p0) - ds)
        dx, dp = _bordered_solve(J, Fp, w, tp, -r, -g)
        x, par = x + dx, par + dp
    r = ch.F(x, par)
    nr = float(np.linalg.norm(r))
    if nr < tol:
        return x, par, max_iter, nr
    raise CorrectorDiverged(f"corrector residual {nr:.3e} after {max_iter} iterations")


def _make_point(forms, params, chart, x, par, res, s, tau, with_gamma=True):
    kappa = params.kappa
    if chart == "U":
        lam = float(par)
        mu = lam ** ((params.p - 1) * kappa) if lam > 0 else 0.0
        u = x
    else:
        mu = float(par)
        lam = mu ** ((1 - params.q) / (params.p - 1)) if mu > 0 else 0.0
        u = x * lam ** kappa
    bnd = forms.mesh.boundary_nodes
    norms = {
        "L2": forms.l2_norm(u), "H1": forms.h1_norm(u),
        "Linf": float(np.abs(u).max()), "min_boundary": float(u[bnd].min()),
    }
    tr = energies(forms, u, params)
    Jv = tr.E / 2 + tr.A / (params.p + 1) + lam * tr.B / (params.q + 1)
    gamma = None
    if with_gamma:
        try:
            pp = params.with_(lam=lam, mu=mu)
            gamma = gamma1_linearized(forms, x, pp, chart=chart).value
        except (NonDifferentiableBoundary, SolverError):
            gamma = None
    pt = BranchPoint(lam, mu, chart, forms.field(np.array(x)), norms, tr, Jv, gamma,
                     stability_label(gamma), False, res, s, tau)
    pt._kappa = kappa
    return pt


def chart_switch(point: BranchPoint, direction: str, forms: AssembledForms, params: ProblemParams) -> BranchPoint:
    """Re-express a branch point in the other chart and re-verify its residual."""
    kappa = params.kappa
    if direction not in ("UV", "VU"):
        raise ValueError("direction must be 'UV' or 'VU'")
    if direction == "UV":
        if point.chart != "U":
            raise ValueError("point is not in chart U")
        if point.lam <= 0:
            raise PreconditionError("U -> V needs lam > 0")
        x = point.field.coeffs * point.lam ** (-kappa)
        mu = point.lam ** ((params.p - 1) * kappa)
        res = float(np.linalg.norm(residual_rescaled(forms, x, params.with_(mu=mu))))
        new = _make_point(forms, params, "V", x, mu, res, point.arclength, None, with_gamma=False)
    else:
        if point.chart != "V":
            raise ValueError("point is not in chart V")
        lam = point.mu ** ((1 - params.q) / (params.p - 1))
        x = point.field.coeffs * lam ** kappa
        res = float(np.linalg.norm(residual(forms, x, params.with_(lam=lam)))) if lam > 0 else 0.0
        new = _make_point(forms, params, "U", x, lam, res, point.arclength, None, with_gamma=False)
    new.gamma1, new.stability, new.fold_flag = point.gamma1, point.stability, point.fold_flag
    return new


# --- the continuation loop ----------------------------------------------------

def _run(forms, params, chart, x, par, tau, *, ds, ds_min, ds_max, max_points, stop,
         switch=None, max_folds=None, with_gamma=True, done_fold=None):
    """Generic predictor-corrector loop. Returns (points, folds, status, state)."""
    ch = _Chart(forms, params, chart)
    pts = []
    folds = []
    s_total = 0.0
    cur = (np.array(x, dtype=float), float(par), tau)
    res0 = float(np.linalg.norm(ch.F(cur[0], cur[1])))
    pts.append(_make_point(forms, params, chart, cur[0], cur[1], res0, 0.0, tau, with_gamma))
    status = "max_points"
    while len(pts) < max_points:
        x0, p0, t0 = cur
        try:
            x1, p1, iters, res = _correct(ch, x0, p0, t0, ds)
            t1 = _tangent(ch, x1, p1, t0)
        except (CorrectorDiverged, SolverError):
            ds *= 0.5
            if ds < ds_min:
                status = "corrector_failed"
                break
            continue
        # fold: sign change of the parameter component of the tangent
        if np.sign(t0[1]) != np.sign(t1[1]) and t0[1] != 0:
            seg_cache = {}

            def at(s, x0=x0, p0=p0, t0=t0):
                if s not in seg_cache:
                    xs, ps, _, rs = _correct(ch, x0, p0, t0, s, max_iter=20)
                    ts = _tangent(ch, xs, ps, t0)
                    seg_cache[s] = (xs, ps, ts, rs)
                return seg_cache[s]

            fp = detect_fold(ArcSegment(0.0, ds, lambda s: at(s)[2][1] if s > 0 else t0[1],
                                        lambda s: at(s)))
            if fp is not None and fp.point is not None:
                xs, ps, ts, rs = fp.point
                fpt = _make_point(forms, params, chart, xs, ps, rs, s_total + fp.s, ts, with_gamma)
                fpt.fold_flag = True
                folds.append(fpt)
                pts.append(fpt)
        reason = stop(p1)
        if reason == "reject":
            status = "endpoint"
            break
        s_total += ds
        pt = _make_point(forms, params, chart, x1, p1, res, s_total, t1, with_gamma)
        pts.append(pt)
        cur = (x1, p1, t1)
        if reason:
            status = reason
            break
        if max_folds is not None and len(folds) >= max_folds + 1:
            status = "fold_limit"
            break
        if switch is not None and switch(pt):
            status = "switch"
            break
        if iters <= 3:
            ds = min(ds * 1.3, ds_max * max(1.0, abs(p1)) if chart == "V" else ds_max)
    return pts, folds, status, cur, ds


def _needs_switch(pt: BranchPoint) -> bool:
    n = pt.norms
    if pt.chart != "U" or pt.lam <= 0:
        return False
    return n["min_boundary"] < CHART_SWITCH_RATIO * n["Linf"] or n["Linf"] < CHART_SWITCH_ABS


def _finish_at(forms, params, chart, x_guess, par_value, with_gamma=True):
    """Endpoint by Newton at a fixed parameter value."""
    pr = params.with_(lam=par_value) if chart == "U" else params.with_(mu=par_value, lam=0.0)
    rep = newton_solve(forms, x_guess, pr, tol=CORRECTOR_TOL, chart=chart, with_gamma=False)
    x = rep.chart_field.coeffs if chart == "V" else rep.u
    return _make_point(forms, params, chart, x, par_value, rep.residual_norm, np.nan, None, with_gamma)


def _follow(forms, params, x, par, tau, *, ds, ds_min, ds_max, max_points, max_lambda,
            switch_chart, max_folds, with_gamma, end_at_zero):
    """Follow a U-chart branch, possibly into chart V, until an endpoint."""
    kappa = params.kappa
    p_exp = (params.p - 1) * kappa

    def stop_u(p1):
        if p1 < 0:
            return "reject"
        if max_lambda is not None and p1 >= max_lambda:
            return "max_lambda"
        return None

    pts, folds, status, cur, ds = _run(
        forms, params, "U", x, par, tau, ds=ds, ds_min=ds_min, ds_max=ds_max, max_points=max_points,
        stop=stop_u, switch=_needs_switch if switch_chart else None, max_folds=max_folds,
        with_gamma=with_gamma)
    endpoints = []
    if status == "max_lambda" and pts[-1].lam > max_lambda:
        end = _finish_at(forms, params, "U", pts[-1].field.coeffs, max_lambda, with_gamma)
        end.arclength = pts[-1].arclength
        pts[-1] = end
        endpoints.append({"kind": "max_lambda", "lambda": max_lambda})
    elif status == "endpoint" and end_at_zero:
        end = _finish_at(forms, params, "U", pts[-1].field.coeffs, 0.0, with_gamma)
        end.arclength = pts[-1].arclength
        pts.append(end)
        endpoints.append({"kind": "lambda_zero", "lambda": 0.0, "linf": end.norms["Linf"]})
    elif status == "switch":
        last = pts[-1]
        vpt = chart_switch(last, "UV", forms, params)
        xv, mu = vpt.field.coeffs, vpt.mu
        tx, tl = cur[2]
        lam = last.lam
        # push the U tangent forward to the rescaled variables
        tvx = lam ** (-kappa) * tx - kappa * lam ** (-kappa - 1) * cur[0] * tl
        tvm = p_exp * lam ** (p_exp - 1) * tl
        ch = _Chart(forms, params, "V")
        nrm = np.sqrt(ch.inner(tvx, tvm, tvx, tvm))
        tau_v = _tangent(ch, xv, mu, (tvx / nrm, tvm / nrm))

        def stop_v(p1):
            if p1 < 0:
                return "reject"
            if max_lambda is not None and p1 ** ((1 - params.q) / (params.p - 1)) >= max_lambda:
                return "max_lambda"
            return None

        vpts, vfolds, vstatus, vcur, _ = _run(
            forms, params, "V", xv, mu, tau_v, ds=ds, ds_min=ds_min, ds_max=ds_max,
            max_points=max_points, stop=stop_v, max_folds=None, with_gamma=with_gamma)
        s0 = pts[-1].arclength
        for q in vpts[1:]:
            q.arclength += s0
        pts.extend(vpts[1:])
        folds.extend(vfolds)
        endpoints.append({"kind": "chart_switch", "lambda": lam})
        status = vstatus
        if vstatus == "endpoint":
            end = _finish_at(forms, params, "V", pts[-1].field.coeffs, 0.0, with_gamma)
            end.arclength = pts[-1].arclength
            pts.append(end)
            endpoints.append({"kind": "origin", "lambda": 0.0, "mu": 0.0})
        elif vstatus == "max_lambda":
            if pts[-1].lam > max_lambda:
                mu_end = max_lambda ** p_exp
                end = _finish_at(forms, params, "V", pts[-1].field.coeffs, mu_end, with_gamma)
                end.arclength = pts[-1].arclength
                pts[-1] = end
            endpoints.append({"kind": "max_lambda", "lambda": pts[-1].lam})
    return pts, folds, status, endpoints


def continue_from_trivial_one(forms: AssembledForms, params: ProblemParams, step: float = 0.02,
                              max_lambda: float | None = None, *, ds_min: float = 1e-7,
                              ds_max: float | None = None, max_points: int = 2000,
                              switch_chart: bool = True, max_folds: int | None = None,
                              with_gamma: bool = True) -> Branch:
    """Trace the branch through (0, 1) in the direction of increasing lam."""
    pr = params.with_(lam=0.0, mu=0.0)
    u1 = np.ones(forms.n)
    ch = _Chart(forms, pr, "U")
    if np.linalg.norm(ch.F(u1, 0.0)) > CORRECTOR_TOL:
        raise PreconditionError("u = 1 is not a solution at lam = 0")
    J = ch.J(u1, 0.0)
    tx = spla.spsolve(J.tocsc(), -ch.Fp(u1, 0.0))
    nrm = np.sqrt(ch.inner(tx, 1.0, tx, 1.0))
    tau = (tx / nrm, 1.0 / nrm)
    pts, folds, status, endpoints = _follow(
        forms, pr, u1, 0.0, tau, ds=step, ds_min=ds_min, ds_max=ds_max or 2 * step,
        max_points=max_points, max_lambda=max_lambda, switch_chart=switch_chart,
        max_folds=max_folds, with_gamma=with_gamma, end_at_zero=True)
    endpoints.insert(0, {"kind": "trivial_one", "lambda": 0.0, "linf": 1.0})
    lam_star = max(p.lam for p in folds) if folds else None
    return Branch(pts, params.eps, endpoints, lam_star, folds, status)


def detect_bifurcation_from_zero(forms: AssembledForms, params: ProblemParams, lam_max: float = 1.0,
                                 samples: int = 41, xtol: float = 1e-14) -> float:
    """Bifurcation value along the trivial branch: sign change of gamma1(lam, u = 0).

    The regularized linearization at u = 0 carries the boundary weight
    lam * eps^{q-1}; its principal eigenvalue decreases in lam and the first
    zero is the bifurcation point.
    """
    from scipy.optimize import brentq

    if params.eps <= 0:
        raise PreconditionError("bifurcation from zero needs eps > 0")
    zero = np.zeros(forms.n)

    def g(lam):
        return gamma1_linearized(forms, zero, params.with_(lam=lam)).value

    grid = np.linspace(0.0, lam_max, samples)
    vals = [g(l) for l in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa < 0 <= fb or fa <= 0 < fb:
            return float(brentq(g, a, b, xtol=xtol))
    raise SolverError("no sign change of gamma1 on the trivial branch")


def continue_regularized(forms: AssembledForms, params: ProblemParams, step: float = 0.01, *,
                         ds_min: float = 1e-8, ds_max: float | None = None, max_points: int = 3000,
                         with_gamma: bool = True, sigma=None) -> Branch:
    """Trace the regularized component from (lam_eps, 0) until it returns to (0, 1)."""
    eps, q = params.eps, params.q
    if not 0 < eps < 1:
        raise PreconditionError("continue_regularized needs eps in (0, 1)")
    if sigma is None:
        lo = lambda_omega(forms).value
        if lo <= 1:
            raise PreconditionLambdaOmega("needs lambda_Omega > 1")
        sigma = sigma1(forms, lam_omega=lo)
    lam_e = -sigma.value * eps ** (1 - q)
    phi = sigma.vector.coeffs.copy()
    ch = _Chart(forms, params, "U")
    phi /= np.sqrt(ch.inner(phi, 0.0, phi, 0.0))
    pr = params.with_(lam=lam_e)
    pts, folds, status, endpoints = _follow(
        forms, pr, np.zeros(forms.n), lam_e, (phi, 0.0), ds=step, ds_min=ds_min,
        ds_max=ds_max or 2 * step, max_points=max_points, max_lambda=None, switch_chart=False,
        max_folds=None, with_gamma=with_gamma, end_at_zero=True)
    endpoints.insert(0, {"kind": "bifurcation", "lambda": lam_e})
    lam_star = max(p.lam for p in folds) if folds else None
    return Branch(pts, eps, endpoints, lam_star, folds, status, {"lambda_eps": lam_e})


# --- distances between branches -------------------------------------------------

def _stack(branch: Branch):
    U = np.array([p.u for p in branch.points])
    L = np.array([p.lam for p in branch.points])
    return U, L


def branch_distance(a: Branch, b: Branch, forms: AssembledForms) -> np.ndarray:
    """Distance of every point of ``a`` to the polyline through ``b`` in (lam, L2)."""
    Ua, La = _stack(a)
    Ub, Lb = _stack(b)
    M = forms.M
    Gbb = Ub @ (M @ Ub.T)
    Gab = Ua @ (M @ Ub.T)
    aa = np.einsum("ij,ij->i", Ua, (M @ Ua.T).T)
    out = np.empty(len(La))
    j0, j1 = np.arange(len(Lb) - 1), np.arange(1, len(Lb))
    dd = Gbb[j1, j1] - 2 * Gbb[j0, j1] + Gbb[j0, j0] + (Lb[j1] - Lb[j0]) ** 2
    for i in range(len(La)):
        # |a - b0 - t (b1 - b0)|^2 = |a-b0|^2 - 2 t <a-b0, d> + t^2 |d|^2
        ab0 = aa[i] - 2 * Gab[i, j0] + Gbb[j0, j0] + (La[i] - Lb[j0]) ** 2
        dot = (Gab[i, j1] - Gab[i, j0] - Gbb[j0, j1] + Gbb[j0, j0]
               + (La[i] - Lb[j0]) * (Lb[j1] - Lb[j0]))
        t = np.clip(np.where(dd > 0, dot / np.where(dd > 0, dd, 1.0), 0.0), 0.0, 1.0)
        d2 = ab0 - 2 * t * dot + t * t * dd
        out[i] = np.sqrt(max(float(d2.min()), 0.0))
    return out


def project_onto_branch(point: BranchPoint, branch: Branch, forms: AssembledForms,
                        params: ProblemParams) -> float:
    """Distance from a U-chart point to the discrete solution curve of ``branch``.

    The nearest branch point in chart U is corrected onto the hyperplane
    through ``point`` orthogonal to its tangent; the result is an exact
    discrete solution, and the (lam, L2) distance to ``point`` is returned.
    """
    cands = [p for p in branch.points if p.chart == "U" and p.tangent is not None]
    ch = _Chart(forms, params.with_(eps=branch.eps), "U")
    x = point.field.coeffs
    d = [ch.inner(x - c.field.coeffs, point.lam - c.lam, x - c.field.coeffs, point.lam - c.lam)
         for c in cands]
    c = cands[int(np.argmin(d))]
    tx, tp = c.tangent
    ds = ch.inner(tx, tp, x - c.field.coeffs, point.lam - c.lam)
    xs, ps, _, _ = _correct(ch, c.field.coeffs, c.lam, (tx, tp), ds, max_iter=20)
    dx = x - xs
    return float(np.sqrt(ch.inner(dx, point.lam - ps, dx, point.lam - ps)))


def lambda_bound_sweep(forms: AssembledForms, params: ProblemParams, grid, guesses=None,
                       confirm: int = 3) -> float:
    """Smallest grid lam beyond which multistart Newton finds no positive solution.

    ``confirm`` consecutive grid values without a positive solution are
    required before the bound is accepted.
    """
    if guesses is None:
        guesses = [0.2, 0.4, 0.6, 0.8, 0.95]
    empty_run = 0
    first_empty = None
    for lam in grid:
        found = False
        for c in guesses:
            try:
                rep = newton_solve(forms, np.full(forms.n, c), params.with_(lam=float(lam)),
                                   tol=1e-10, with_gamma=False)
            except (SolverError, PreconditionError):
                continue
            if rep.flags["positive_interior"] and rep.u.max() > 1e-6:
                found = True
                break
        if found:
            empty_run, first_empty = 0, None
        else:
            empty_run += 1
            if first_empty is None:
                first_empty = float(lam)
            if empty_run >= confirm:
                return first_empty
    raise SolverError("no nonexistence region on the sweep grid")


def trace_continuum_C0(forms: AssembledForms, params: ProblemParams, eps_schedule=(1e-2, 1e-3, 1e-4),
                       step: float = 0.02, with_gamma: bool = True, polish_stride: int = 5) -> Branch:
    """Discrete skeleton of the continuum joining (0, 1) to (0, 0) at eps = 0.

    The regularized components are traced for every eps of the schedule and
    their distances to the eps = 0 skeleton recorded (``meta["distances"]``).
    Points of the smallest-eps component whose boundary values allow it are
    polished by eps = 0 Newton at fixed lam and their distance to the
    skeleton recorded (``meta["polish_distances"]``).
    """
    lo = lambda_omega(forms).value
    if lo <= 1:
        raise PreconditionLambdaOmega("the continuum from (0, 1) to (0, 0) needs lambda_Omega > 1")
    sig = sigma1(forms, lam_omega=lo)
    base = params.with_(eps=0.0, lam=0.0, mu=0.0)
    skeleton = continue_from_trivial_one(forms, base, step=step, with_gamma=with_gamma)
    regs, dists = [], []
    for eps in eps_schedule:
        br = continue_regularized(forms, base.with_(eps=eps), step=step, with_gamma=False, sigma=sig)
        regs.append(br)
        dists.append(float(branch_distance(br, skeleton, forms).max()))
    polished = []
    from .assembly import JACOBIAN_FLOOR
    if regs:
        last = regs[-1]
        for pt in last.points[1:-1:polish_stride]:
            if pt.norms["min_boundary"] <= 10 * JACOBIAN_FLOOR or pt.lam <= 0:
                continue
            try:
                rep = newton_solve(forms, pt.u, base.with_(lam=pt.lam), tol=CORRECTOR_TOL, with_gamma=False)
            except (SolverError, PreconditionError):
                continue
            q = _make_point(forms, base, "U", rep.u, pt.lam, rep.residual_norm, np.nan, None, False)
            try:
                polished.append(project_onto_branch(q, skeleton, forms, base))
            except (SolverError, NonDifferentiableBoundary):
                polished.append(float(branch_distance(Branch([q], 0.0), skeleton, forms)[0]))
    skeleton.meta.update({
        "eps_schedule": list(eps_schedule), "regularized": regs, "distances": dists,
        "polish_distances": polished, "sigma1": sig.value, "h": forms.mesh.h,
    })
    return skeleton
