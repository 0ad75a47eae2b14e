"""Positive solutions by Newton, monotone iteration and Nehari-set minimization."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    AssembledForms,
    Field,
    ProblemParams,
    jacobian,
    jacobian_rescaled,
    residual,
    residual_rescaled,
    unscale_chart,
)
from .errors import (
    MaxIterExceeded,
    NonDifferentiableBoundary,
    NotInCone,
    NoTwoRoots,
    OrderingViolation,
    PreconditionError,
    PreconditionLambdaOmega,
    SingularJacobian,
    SolverError,
)
from .spectra import gamma1_linearized, lambda_omega
from .variational import (
    EnergyTriple,
    c_minus,
    c_plus,
    energies,
    fibering,
)

__all__ = [
    "POSITIVITY_FLOOR",
    "SolveReport",
    "newton_solve",
    "build_subsolution",
    "is_subsolution",
    "is_supersolution",
    "monotone_iterate",
    "nehari_minimize",
    "dirichlet_logistic",
    "sweep_lambda",
    "lower_branch_rescaled",
    "solution_flags",
]

#: Boundary value above which a solution counts as positive on the boundary.
POSITIVITY_FLOOR = 1e-8


@dataclass
class SolveReport:
    field: Field
    residual_norm: float
    iterations: int
    route: str
    energies: EnergyTriple
    J_value: float
    gamma1: float | None = None
    flags: dict = field(default_factory=dict)
    params: ProblemParams | None = None
    chart_field: Field | None = None   # the rescaled field when solved in chart V
    history: list = field(default_factory=list)

    @property
    def u(self) -> np.ndarray:
        return self.field.coeffs

    @property
    def accepted_positive(self) -> bool:
        f = self.flags
        return bool(f.get("positive_interior") and f.get("below_one"))


def solution_flags(forms: AssembledForms, u: np.ndarray) -> dict:
    inner = forms.mesh.interior_nodes
    bnd = forms.mesh.boundary_nodes
    pos_in = bool(u[inner].min() > 0) if inner.size else True
    pos_bd = bool(u[bnd].max() > POSITIVITY_FLOOR)
    return {
        "positive_interior": pos_in,
        "positive_boundary": pos_bd,
        "below_one": bool(u.max() < 1.0),
        "degenerate_candidate": bool(pos_in and u[bnd].min() <= POSITIVITY_FLOOR),
        "trivial": bool(np.abs(u).max() < 1e-12),
    }


def _linear_solve(J, rhs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(J.tocsc(), rhs)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SingularJacobian(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularJacobian("non-finite Newton step")
    return x


def _chart_ops(chart):
    if chart == "U":
        return residual, jacobian
    if chart == "V":
        return residual_rescaled, jacobian_rescaled
    raise ValueError(f"unknown chart {chart!r}")


def _report(forms, w, params, chart, res_norm, iters, route, with_gamma=True, history=None):
    """Build a report with the field expressed in chart U."""
    lam = params.lam
    if chart == "V":
        u, lam = unscale_chart(w, params.mu, params)
        v = forms.field(w)
    else:
        u, v = w, None
    tr = energies(forms, u, params)
    gamma = None
    if with_gamma:
        try:
            gamma = gamma1_linearized(forms, w, params, chart=chart).value
        except NonDifferentiableBoundary:
            gamma = None
    Jv = tr.E / 2 + tr.A / (params.p + 1) + lam * tr.B / (params.q + 1)
    return SolveReport(forms.field(u), res_norm, iters, route, tr, Jv, gamma,
                       solution_flags(forms, np.asarray(u)), params, v, history or [])


def _boundary_step_limit(forms, u, d, params, keep=0.01):
    """Largest t <= 1 keeping boundary values above ``keep`` times their current value.

    Only active at eps = 0, where the boundary derivative does not exist at 0.
    """
    if params.eps > 0:
        return 1.0
    ub = forms.Qb @ u
    db = forms.Qb @ d
    shrink = db < 0
    if not np.any(shrink):
        return 1.0
    return float(min(1.0, np.min((1.0 - keep) * ub[shrink] / -db[shrink])))


def newton_solve(forms: AssembledForms, guess, params: ProblemParams, tol: float = 1e-10,
                 max_iter: int = 60, chart: str = "U", with_gamma: bool = True) -> SolveReport:
    """Damped Newton with Armijo backtracking on 0.5 ||R||^2.

    ``tol`` bounds the Euclidean norm of the dual residual vector. In chart
    ``"V"`` the guess and the iterates are rescaled fields (params.mu is
    used); the report's ``field`` is mapped back to chart U with params.lam.
    """
    res_fn, jac_fn = _chart_ops(chart)
    u = np.array(forms.coeffs(guess), dtype=float)
    r = res_fn(forms, u, params)
    nr = float(np.linalg.norm(r))
    hist = [nr]
    for it in range(1, max_iter + 1):
        if nr < tol:
            return _report(forms, u, params, chart, nr, it - 1, "Newton", with_gamma, hist)
        J = jac_fn(forms, u, params)
        d = _linear_solve(J, -r)
        t = _boundary_step_limit(forms, u, d, params)
        while True:
            trial = u + t * d
            try:
                rt = res_fn(forms, trial, params)
                nt = float(np.linalg.norm(rt))
            except FloatingPointError:
                nt = np.inf
            if nt <= np.sqrt(1.0 - 1e-4 * t) * nr or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10:
            raise MaxIterExceeded(f"line search stalled at ||R|| = {nr:.3e}")
        u, r, nr = trial, rt, nt
        hist.append(nr)
    if nr < tol:
        return _report(forms, u, params, chart, nr, max_iter, "Newton", with_gamma, hist)
    raise MaxIterExceeded(f"no convergence in {max_iter} iterations, ||R|| = {nr:.3e}")


# --- sub- and supersolutions --------------------------------------------------

def _rounding_scale(forms, w):
    w = np.abs(forms.coeffs(w))
    return abs(forms.K) @ w + forms.M @ (w + w ** 2) + forms.M_bd @ (1.0 + w)


def is_subsolution(forms: AssembledForms, w, params: ProblemParams) -> bool:
    """Tested against every nonnegative hat function: R(w)_i <= 0 up to rounding."""
    r = residual(forms, w, params)
    return bool(np.all(r <= 1e-13 * _rounding_scale(forms, w)))


def is_supersolution(forms: AssembledForms, w, params: ProblemParams) -> bool:
    r = residual(forms, w, params)
    return bool(np.all(r >= -1e-13 * _rounding_scale(forms, w)))


def build_subsolution(forms: AssembledForms, params: ProblemParams, epsilon_sub: float = 0.5,
                      max_halvings: int = 80, phi=None, return_eps: bool = False):
    """w = eps (phi_Omega + eps^tau) with tau = 2(1-q)/q, halving eps until R(w) <= 0."""
    if phi is None:
        eig = lambda_omega(forms)
        if eig.value >= 1.0:
            raise PreconditionLambdaOmega(
                f"subsolution needs lambda_Omega < 1, got {eig.value:.6g}")
        phi = eig.vector.coeffs
    phi = np.asarray(phi, dtype=float)
    tau = 2.0 * (1.0 - params.q) / params.q
    eps = float(epsilon_sub)
    for _ in range(max_halvings):
        w = eps * (phi + eps ** tau)
        if is_subsolution(forms, w, params):
            out = forms.field(w)
            return (out, eps) if return_eps else out
        eps *= 0.5
    raise SolverError("no valid subsolution after the halving budget")


def monotone_iterate(forms: AssembledForms, lower, upper, params: ProblemParams, tol: float = 1e-9,
                     max_iter: int = 200000, sigma: float | None = None,
                     check_brackets: bool = True, max_restarts: int = 8) -> SolveReport:
    """Monotone iteration from a subsolution below a supersolution.

    Iterates (K + sigma M + beta M_bd) u_{k+1} = sigma M u_k + N(u_k) + beta M_bd u_k - lam G(u_k)
    with N(t) = t - |t|^{p-1} t and G the lagged boundary flux. sigma makes
    sigma t + N(t) nondecreasing on [0, max upper] and beta >= lam q t^{q-1}
    on the boundary range of the lower field, so the right side is order
    preserving; the iterates are asserted to be nodally nondecreasing.
    """
    lo = np.array(forms.coeffs(lower), dtype=float)
    up = np.array(forms.coeffs(upper), dtype=float)
    if np.any(lo > up):
        raise PreconditionError("lower field exceeds upper field")
    if check_brackets:
        if not is_subsolution(forms, lo, params):
            raise PreconditionError("lower field is not a discrete subsolution")
        if not is_supersolution(forms, up, params):
            raise PreconditionError("upper field is not a discrete supersolution")
    p, q, lam, eps = params.p, params.q, params.lam, params.eps
    umax = float(up.max())
    if sigma is None:
        sigma = max(p * umax ** (p - 1.0) - 1.0, 0.0) + 1.0
    bmin = float((forms.Qb @ lo).min())
    if lam > 0 and bmin <= 0 and eps == 0:
        raise PreconditionError("lower field must be positive on the boundary")
    if lam > 0:
        if eps > 0:
            beta = lam * float(np.max((bmin + eps) ** (q - 2.0) * (q * bmin + eps)))
        else:
            beta = lam * q * bmin ** (q - 1.0)
    else:
        beta = 0.0
    from .assembly import boundary_flux

    if np.array_equal(lo, up):
        # A degenerate bracket pins the limit: one step, projected onto it.
        nr = float(np.linalg.norm(residual(forms, lo, params)))
        rep = _report(forms, lo.copy(), params, "U", nr, 1, "MonotoneIteration", True, [nr])
        rep.flags.update(sigma=sigma, beta=beta, min_increment=0.0)
        return rep

    for restart in range(max_restarts):
        A = (forms.K + sigma * forms.M + beta * forms.M_bd).tocsc()
        lu = spla.splu(A)
        u = lo.copy()
        hist = []
        violated = False
        min_inc = np.inf
        for k in range(1, max_iter + 1):
            uq = forms.Q @ u
            ub = forms.Qb @ u
            rhs = (forms.load(sigma * uq + uq - np.abs(uq) ** (p - 1.0) * uq)
                   + forms.bd_load(beta * ub - lam * boundary_flux(ub, q, eps)))
            un = lu.solve(rhs)
            if np.any(un < u - 1e-13 * max(1.0, np.abs(u).max())):
                violated = True
                break
            if np.any(un > up + 1e-12):
                violated = True
                break
            min_inc = min(min_inc, float((un - u).min()))
            step = float(np.abs(un - u).max())
            u = un
            if k % 10 == 0 or step < 1e-15:
                nr = float(np.linalg.norm(residual(forms, u, params)))
                hist.append(nr)
                if nr < tol:
                    rep = _report(forms, u, params, "U", nr, k, "MonotoneIteration", True, hist)
                    rep.flags.update(sigma=sigma, beta=beta, min_increment=min_inc)
                    return rep
                if step < 1e-15:
                    break
        if violated:
            sigma *= 2.0
            continue
        raise MaxIterExceeded(f"monotone iteration stalled at ||R|| = {hist[-1] if hist else np.nan:.3e}")
    raise OrderingViolation(f"monotonicity still violated with sigma = {sigma:g}")


# --- Nehari minimization ------------------------------------------------------

def _projected_descent(forms, seed, params, branch, chart, max_iter, gtol):
    """Preconditioned descent on u -> F(t(u) u) with t the fibering root of the branch.

    F is J_lam (chart U) or I_mu (chart V); its gradient along the projected
    field is t * R(t u) because the derivative of t multiplies j'(t) = 0.
    """
    res_fn = residual if chart == "U" else residual_rescaled
    react = 1.0 if chart == "U" else params.mu
    bd = params.lam if chart == "U" else 1.0
    p, q = params.p, params.q
    P = spla.splu(forms.H1.tocsc())

    def project(u):
        rep = fibering(forms, u, params, chart)
        if len(rep.roots) < 2:
            raise NotInCone("ray lost its two Nehari points")
        t = rep.roots[1] if branch == "plus" else rep.roots[0]
        return t * u

    def value(w):
        tr = energies(forms, w, params)
        return tr.E / 2 + react * tr.A / (p + 1) + bd * tr.B / (q + 1)

    w = project(np.asarray(seed, dtype=float))
    fw = value(w)
    step = 1.0
    for it in range(1, max_iter + 1):
        g = res_fn(forms, w, params)
        d = P.solve(g)
        gnorm = float(np.sqrt(max(g @ d, 0.0)))
        if gnorm < gtol * max(1.0, forms.h1_norm(w)):
            return w, fw, it
        accepted = False
        while step > 1e-12:
            try:
                trial = project(w - step * d)
                ft = value(trial)
            except NotInCone:
                ft = np.inf
            if ft <= fw - 1e-4 * step * gnorm ** 2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return w, fw, it
        w, fw = trial, ft
        step = min(step * 2.0, 1.0)
    return w, fw, max_iter


def _seeds(forms, c, restarts, seed):
    rng = np.random.default_rng(seed)
    x = forms.mesh.nodes
    lo = x.min(axis=0)
    xi = (x - lo) / (x.max(axis=0) - lo)
    out = [np.full(forms.n, c)]
    for k in range(1, restarts):
        pert = np.ones(forms.n)
        for _ in range(2):
            modes = rng.integers(1, 4, size=xi.shape[1])
            pert = pert + rng.uniform(-0.2, 0.2) * np.prod(np.cos(np.pi * modes * xi), axis=1)
        out.append(c * np.maximum(pert, 0.1))
    return out


def nehari_minimize(forms: AssembledForms, params: ProblemParams, sign: str = "Plus", restarts: int = 4,
                    seed: int = 0, tol: float = 1e-10, max_iter: int = 2000, gtol: float = 1e-7,
                    workers: int = 1, lam_omega: float | None = None) -> SolveReport:
    """Minimize J_lam on N_lam^+ (``"Plus"``) or on N_lam^- (``"Minus"``).

    The Minus branch is minimized in the rescaled chart, I_mu on M_mu^- with
    mu = lam^{(p-1)/(1-q)}, where the minimizer is O(1); the result is mapped
    back by u = lam^{1/(1-q)} v. Each restart is finished by a Newton polish
    and the best (lowest energy) polished solution on the requested piece is
    returned.
    """
    sign = sign.capitalize()
    if sign not in ("Plus", "Minus"):
        raise ValueError("sign must be Plus or Minus")
    if lam_omega is None:
        lam_omega = lambda_omega(forms).value
    if lam_omega <= 1:
        raise PreconditionLambdaOmega("Nehari minimization needs lambda_Omega > 1")
    lam = params.lam
    if lam <= 0:
        raise PreconditionError("Nehari minimization needs lam > 0")
    vol, surf = forms.mesh.spec.volume, forms.mesh.spec.surface
    c0 = c_plus(params, vol, surf)  # raises NoConstantSolution past the constant bound
    if sign == "Plus":
        chart, branch, c = "U", "plus", c0
        pr = params
    else:
        mu = lam ** ((params.p - 1) * params.kappa)
        pr = params.with_(mu=mu)
        chart, branch = "V", "minus"
        c = c_minus(pr, vol, surf)
    seeds = _seeds(forms, c, restarts, seed)
    usable = []
    for s in seeds:
        try:
            if len(fibering(forms, s, pr, chart).roots) == 2:
                usable.append(s)
        except NotInCone:
            pass
    if not usable:
        raise NoTwoRoots("no seed has two Nehari points at this lambda")

    def run(s):
        w, fw, iters = _projected_descent(forms, s, pr, branch, chart, max_iter, gtol)
        try:
            rep = newton_solve(forms, w, pr, tol=tol, chart=chart)
        except SolverError:
            return None
        rep.iterations += iters
        rep.route = "Nehari" + sign
        rep.flags["polish_shift"] = float(np.abs(rep.chart_field.coeffs - w).max()
                                          if chart == "V" else np.abs(rep.u - w).max())
        rep.flags["descent_value"] = fw
        return rep

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            reports = list(ex.map(run, usable))
    else:
        reports = [run(s) for s in usable]

    good = []
    for rep in reports:
        if rep is None or not rep.flags["positive_interior"]:
            continue
        w = rep.chart_field if chart == "V" else rep.field
        cls = fibering(forms, w, pr, chart).classification
        rep.flags["classification"] = cls
        if cls == ("NehariPlus" if sign == "Plus" else "NehariMinus"):
            good.append(rep)
    if not good:
        raise SolverError(f"no restart converged to a point of N_{sign}")
    return min(good, key=lambda r: r.J_value)


# --- Dirichlet logistic state -------------------------------------------------

def dirichlet_logistic(forms: AssembledForms, p: float = 2.0, tol: float = 1e-10,
                       max_iter: int = 60) -> SolveReport:
    """Positive solution of -Lap u = u(1 - u^{p-1}) with u = 0 on the boundary."""
    eig = lambda_omega(forms)
    if eig.value >= 1.0:
        raise PreconditionLambdaOmega(
            f"no positive Dirichlet state: lambda_Omega = {eig.value:.6g} >= 1")
    params = ProblemParams(p=p, q=0.5, lam=0.0)
    inner = forms.mesh.interior_nodes
    phi = eig.vector.coeffs
    last = None
    for amp in (1.0, 0.5, 0.9, 0.2):
        u = amp * phi
        try:
            for it in range(max_iter):
                r = residual(forms, u, params)[inner]
                nr = float(np.linalg.norm(r))
                if nr < tol:
                    break
                J = jacobian(forms, u, params)[inner][:, inner]
                d = np.zeros(forms.n)
                d[inner] = _linear_solve(J, -r)
                t = 1.0
                while t > 1e-10:
                    trial = u + t * d
                    if np.linalg.norm(residual(forms, trial, params)[inner]) <= np.sqrt(1 - 1e-4 * t) * nr:
                        break
                    t *= 0.5
                u = trial
            else:
                continue
        except SolverError as exc:
            last = exc
            continue
        if u[inner].min() > 0:
            return _report(forms, u, params, "U", nr, it, "Dirichlet", with_gamma=False)
    raise MaxIterExceeded(f"Dirichlet Newton failed to find a positive state ({last})")


# --- natural-parameter sweep --------------------------------------------------

def sweep_lambda(forms: AssembledForms, params: ProblemParams, lams, guess, tol: float = 1e-10,
                 max_substeps: int = 40, chart: str = "U") -> list:
    """Solve along an increasing lam grid, inserting geometric substeps when Newton fails."""
    lams = [float(l) for l in lams]
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("lambda grid must be strictly increasing")
    u = np.array(forms.coeffs(guess), dtype=float)
    expo = (params.p - 1.0) * params.kappa

    def at(lam):
        if chart == "V":
            return params.with_(lam=lam, mu=lam ** expo)
        return params.with_(lam=lam)

    def chart_coeffs(rep):
        return rep.chart_field.coeffs if chart == "V" else rep.u

    out = []
    current = None
    for target in lams:
        if current is None:
            rep = newton_solve(forms, u, at(target), tol=tol, chart=chart)
        else:
            lam_c, rep = current, None
            ratio = target / lam_c if lam_c > 0 else None
            n_sub = 1
            while rep is None:
                try:
                    steps = (np.geomspace(lam_c, target, n_sub + 1)[1:] if ratio
                             else np.linspace(lam_c, target, n_sub + 1)[1:])
                    w = u
                    for lam in steps:
                        rep = newton_solve(forms, w, at(float(lam)), tol=tol,
                                           chart=chart, with_gamma=lam == steps[-1])
                        w = chart_coeffs(rep)
                except SolverError:
                    rep = None
                    n_sub *= 2
                    if n_sub > max_substeps:
                        raise
        out.append(rep)
        u = chart_coeffs(rep)
        current = target
    return out


def lower_branch_rescaled(forms: AssembledForms, params: ProblemParams, lams, guess=None,
                          tol: float = 1e-10) -> tuple:
    """Small solutions along an increasing lam grid, solved in chart V.

    The limit problem (mu = 0) is solved first, from ``guess`` (default the
    constant 1), and the grid is then swept from it. Returns the limit
    report and the list of reports on the grid.
    """
    if guess is None:
        guess = np.ones(forms.n)
    limit = newton_solve(forms, guess, params.with_(lam=0.0, mu=0.0), tol=tol, chart="V")
    reps = sweep_lambda(forms, params, lams, limit.chart_field.coeffs, tol=tol, chart="V")
    return limit, reps
