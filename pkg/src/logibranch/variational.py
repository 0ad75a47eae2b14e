"""Energies, fibering maps and Nehari-set machinery.

For a field ``u`` write ``E = int |grad u|^2 - u^2``, ``A = int |u|^{p+1}`` and
``B = int_bd |u|^{q+1}``. Along the ray ``t -> t u`` the energy

    j(t) = t^2 E / 2 + t^{p+1} A / (p+1) + lam t^{q+1} B / (q+1)

has critical points where ``jt(t) = t^{1-q} E + t^{p-q} A + lam B`` vanishes.
``jt`` is convex-like with a single minimum at ``t0``; it has two positive
roots when ``jt(t0) < 0`` and none when ``jt(t0) > 0``. The rescaled
functional ``I_mu`` is handled by the same code after the substitution
``A -> mu A`` and ``lam -> 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .assembly import AssembledForms, ProblemParams
from .errors import NoConstantSolution, NotInCone, PreconditionLambdaOmega

__all__ = [
    "EnergyTriple",
    "FiberingReport",
    "energies",
    "J_lambda",
    "I_mu",
    "fibering",
    "fibering_from_triple",
    "two_root_threshold",
    "mu_threshold",
    "nehari_scale",
    "c_plus",
    "c_minus",
    "jb_bound",
    "lambda_star_estimate",
    "mu_star_estimate",
    "sample_fields",
]

NEHARI_TOL = 1e-8
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class EnergyTriple:
    E: float
    A: float
    B: float

    def scaled(self, s: float, p: float, q: float) -> "EnergyTriple":
        """Triple of ``s * u``."""
        return EnergyTriple(s * s * self.E, abs(s) ** (p + 1) * self.A, abs(s) ** (q + 1) * self.B)


@dataclass(frozen=True)
class FiberingReport:
    triple: EnergyTriple
    lam: float
    t0: float
    roots: tuple[float, ...]
    threshold: float
    classification: str           # NehariPlus | NehariMinus | NotOnNehari | Degenerate
    jt_at_t0: float
    root_residuals: tuple[float, ...] = ()
    second_derivatives: tuple[float, ...] = ()

    @property
    def two_roots(self) -> bool:
        return len(self.roots) == 2

    def to_dict(self) -> dict:
        return {
            "E": self.triple.E, "A": self.triple.A, "B": self.triple.B,
            "lambda": self.lam, "t0": self.t0, "roots": list(self.roots),
            "threshold": self.threshold, "classification": self.classification,
            "jt_at_t0": self.jt_at_t0, "root_residuals": list(self.root_residuals),
            "second_derivatives": list(self.second_derivatives),
        }


def energies(forms: AssembledForms, u, params: ProblemParams | None = None) -> EnergyTriple:
    p = 2.0 if params is None else params.p
    q = 0.5 if params is None else params.q
    u = forms.coeffs(u)
    E = forms.stiffness_form(u) - forms.mass_form(u)
    A = forms.integrate(np.abs(forms.Q @ u) ** (p + 1.0))
    B = forms.bd_integrate(np.abs(forms.Qb @ u) ** (q + 1.0))
    return EnergyTriple(E, A, B)


def _functional(t: EnergyTriple, p: float, q: float, react: float, bd: float) -> float:
    return t.E / 2.0 + react * t.A / (p + 1.0) + bd * t.B / (q + 1.0)


def J_lambda(forms: AssembledForms, u, params: ProblemParams) -> float:
    return _functional(energies(forms, u, params), params.p, params.q, 1.0, params.lam)


def I_mu(forms: AssembledForms, v, params: ProblemParams) -> float:
    return _functional(energies(forms, v, params), params.p, params.q, params.mu, 1.0)


# --- scalar fibering analysis -------------------------------------------------

def two_root_threshold(tr: EnergyTriple, p: float, q: float) -> float:
    """Largest lam for which the ray through u meets the Nehari set twice.

    Equal to ((p-1)/(p-q)) (-E) t0^{1-q} / B, which is the closed form
    ((p-1)/(p-q)) ((1-q)/(p-q))^{(1-q)/(p-1)}
        * (-E / (A^{(1-q)/(p-q)} B^{(p-1)/(p-q)}))^{(p-q)/(p-1)}.
    """
    if not (tr.A > 0 and tr.B > 0 and tr.E < 0):
        raise NotInCone("threshold needs E < 0, A > 0, B > 0")
    a = (1.0 - q) / (p - q)
    base = -tr.E / (tr.A ** ((1 - q) / (p - q)) * tr.B ** ((p - 1) / (p - q)))
    return (p - 1.0) / (p - q) * a ** ((1 - q) / (p - 1)) * base ** ((p - q) / (p - 1))


def mu_threshold(tr: EnergyTriple, p: float, q: float) -> float:
    """Largest mu for which the rescaled ray meets M_mu twice."""
    if not (tr.A > 0 and tr.B > 0 and tr.E < 0):
        raise NotInCone("threshold needs E < 0, A > 0, B > 0")
    base = -tr.E / (tr.A ** ((1 - q) / (p - q)) * tr.B ** ((p - 1) / (p - q)))
    return ((1 - q) / (p - q) * ((p - 1) / (p - q)) ** ((p - 1) / (1 - q))
            * base ** ((p - q) / (1 - q)))


def fibering_from_triple(tr: EnergyTriple, p: float, q: float, lam: float) -> FiberingReport:
    """Roots of jt and the Nehari classification of t = 1."""
    E, A, B = tr.E, tr.A, tr.B
    if not A > 0:
        raise NotInCone("A(u) = 0: the ray is trivial")
    if not E < 0:
        raise NotInCone("E(u) >= 0: no positive critical point")

    def jt(t):
        return t ** (1 - q) * E + t ** (p - q) * A + lam * B

    def jpp(t):
        return E + p * t ** (p - 1) * A + lam * q * t ** (q - 1) * B

    def scale(t):
        return max(abs(E) * t ** (1 - q), A * t ** (p - q), lam * B, np.finfo(float).tiny)

    t0 = ((1 - q) / (p - q)) ** (1 / (p - 1)) * (-E / A) ** (1 / (p - 1))
    j0 = jt(t0)
    threshold = two_root_threshold(tr, p, q) if B > 0 else np.inf

    if lam * B == 0.0:
        roots = ((-E / A) ** (1 / (p - 1)),)
    elif j0 > 0:
        roots = ()
    else:
        t_max = ((-E + lam * B) / A) ** (1 / (p - 1)) + 1.0
        # jt > 0 below (lam B / -E)^{1/(1-q)}, which brackets the small root
        # from below at its own scale (it can be far below t0 when q is near 1).
        t_lo = max(min(0.5 * (lam * B / -E) ** (1 / (1 - q)), 0.5 * t0), np.finfo(float).tiny)
        r1 = brentq(jt, t_lo, t0, xtol=1e-15 * t_lo, rtol=1e-15, maxiter=500) if j0 < 0 else t0
        r2 = brentq(jt, t0, t_max, xtol=1e-15 * t0, rtol=1e-15, maxiter=500) if j0 < 0 else t0
        roots = (r1, r2)
    residuals = tuple(abs(jt(t)) / scale(t) for t in roots)
    seconds = tuple(jpp(t) for t in roots)

    jp1 = E + A + lam * B
    norm_scale = abs(E) + A + lam * B
    if lam * B > 0 and -DEGENERATE_TOL * lam * B < j0 <= 0:
        cls = "Degenerate"
    elif abs(jp1) <= NEHARI_TOL * norm_scale:
        # On the Nehari set j''(1) = (1-q) E + (p-q) A.
        s2 = jpp(1.0)
        if abs(s2) <= NEHARI_TOL * norm_scale:
            cls = "Degenerate"
        else:
            cls = "NehariPlus" if s2 > 0 else "NehariMinus"
    else:
        cls = "NotOnNehari"
    return FiberingReport(tr, lam, t0, tuple(float(r) for r in roots), float(threshold),
                          cls, float(j0), residuals, seconds)


def fibering(forms: AssembledForms, u, params: ProblemParams, chart: str = "U") -> FiberingReport:
    """Fibering report of ``u`` for J_lam (chart U) or I_mu (chart V)."""
    tr = energies(forms, u, params)
    if chart == "U":
        return fibering_from_triple(tr, params.p, params.q, params.lam)
    if chart == "V":
        rep = fibering_from_triple(EnergyTriple(tr.E, params.mu * tr.A, tr.B), params.p, params.q, 1.0)
        thr = mu_threshold(tr, params.p, params.q) if tr.B > 0 else np.inf
        return FiberingReport(tr, params.mu, rep.t0, rep.roots, thr, rep.classification,
                              rep.jt_at_t0, rep.root_residuals, rep.second_derivatives)
    raise ValueError(f"unknown chart {chart!r}")


def nehari_scale(forms: AssembledForms, u, params: ProblemParams, branch: str, chart: str = "U") -> float:
    """Scaling factor t with t*u on the requested Nehari piece ("plus" or "minus")."""
    rep = fibering(forms, u, params, chart)
    if len(rep.roots) == 2:
        return rep.roots[1] if branch == "plus" else rep.roots[0]
    if len(rep.roots) == 1 and branch == "plus":
        return rep.roots[0]
    raise NotInCone(f"no {branch} Nehari point on this ray")


# --- constant solutions on the Nehari pieces ----------------------------------

def c_plus(params: ProblemParams, volume: float, surface: float) -> float:
    """Constant c with c^{1-q} - c^{p-q} = lam |bd| / |Omega| on the N+ side."""
    p, q, lam = params.p, params.q, params.lam
    rhs = lam * surface / volume
    c_lo = params.stability_floor

    def h(c):
        return c ** (1 - q) - c ** (p - q) - rhs

    if lam == 0:
        return 1.0
    hmax = h(c_lo)
    if hmax < 0:
        raise NoConstantSolution(
            f"lam |bd|/|Omega| = {rhs:.6g} exceeds {hmax + rhs:.6g}: no constant on N+")
    if hmax == 0:
        return c_lo
    return float(brentq(h, c_lo, 1.0, xtol=1e-15, rtol=1e-15))


def c_minus(params: ProblemParams, volume: float, surface: float) -> float:
    """Constant c with mu = c^{-(p-1)} - c^{-(p-q)} |bd| / |Omega| on the M- side."""
    p, q, mu = params.p, params.q, params.mu
    r = surface / volume
    kappa = 1.0 / (1.0 - q)
    c_lo = r ** kappa
    c_hi = ((p - q) / (p - 1)) ** kappa * r ** kappa

    def h(c):
        return c ** (-(p - 1)) - r * c ** (-(p - q)) - mu

    if mu == 0:
        return float(c_lo)
    hmax = h(c_hi)
    if hmax < 0:
        raise NoConstantSolution(f"mu = {mu:.6g} exceeds {hmax + mu:.6g}: no constant on M-")
    if hmax == 0:
        return float(c_hi)
    return float(brentq(h, c_lo, c_hi, xtol=1e-15 * c_hi, rtol=1e-15))


def jb_bound(tr: EnergyTriple, p: float, q: float) -> float:
    """Lower bound (p-q)(1-q) / (2(p+1)(q+1)) * B for I_mu on M_mu^-."""
    return (p - q) * (1 - q) / (2 * (p + 1) * (q + 1)) * tr.B


# --- sampled infima -----------------------------------------------------------

def sample_fields(forms: AssembledForms, rng: np.random.Generator, count: int):
    """Positive test fields: perturbed constants and smooth bump modulations."""
    x = forms.mesh.nodes
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    xi = (x - lo) / span
    for k in range(count):
        kind = k % 3
        if kind == 0:
            u = 1.0 + 0.3 * rng.uniform(-1, 1) + 0.2 * rng.standard_normal(forms.n) * rng.uniform()
        elif kind == 1:
            u = np.ones(forms.n)
            for _ in range(rng.integers(1, 4)):
                modes = rng.integers(1, 5, size=xi.shape[1])
                phase = rng.uniform(0, 2 * np.pi, size=xi.shape[1])
                u = u + rng.uniform(-0.6, 0.6) * np.prod(np.cos(np.pi * modes * xi + phase), axis=1)
        else:
            centre = rng.uniform(0, 1, size=xi.shape[1])
            width = rng.uniform(0.1, 0.6)
            bump = np.exp(-np.sum((xi - centre) ** 2, axis=1) / (2 * width ** 2))
            u = rng.uniform(0.05, 1.0) + rng.uniform(0.2, 3.0) * bump
        yield np.maximum(u, 1e-3)


def _running_infimum(values):
    return np.minimum.accumulate(np.asarray(values, dtype=float))


def lambda_star_estimate(forms: AssembledForms, delta: float, params: ProblemParams,
                         samples: int = 200, seed: int = 0, history: bool = False):
    """Sampled upper bound on the infimum of the two-root threshold over F_delta.

    F_delta = {E + A <= 0, ||u||_{H1} >= delta, A > 0, B > 0}. Each sample is
    scaled into F_delta when possible (the threshold is scale invariant, so
    the scaling only decides admissibility). The constant 1/2 is always the
    first sample.
    """
    vol = forms.mesh.spec.volume
    if not 0 < delta <= np.sqrt(vol) / 2 * (1 + 1e-12):
        raise ValueError("need 0 < delta <= |Omega|^(1/2) / 2")
    p, q = params.p, params.q
    rng = np.random.default_rng(seed)
    values = []

    def consider(u):
        tr = energies(forms, u, params)
        if not (tr.E < 0 and tr.A > 0 and tr.B > 0):
            return
        norm = forms.h1_norm(u)
        s_lo, s_hi = delta / norm, (-tr.E / tr.A) ** (1 / (p - 1))
        if s_lo > s_hi * (1 + 1e-12):
            return
        values.append(two_root_threshold(tr, p, q))

    consider(np.full(forms.n, 0.5))
    for u in sample_fields(forms, rng, samples - 1):
        consider(u)
    running = _running_infimum(values)
    return (float(running[-1]), running) if history else float(running[-1])


def mu_star_estimate(forms: AssembledForms, delta: float, params: ProblemParams,
                     samples: int = 200, seed: int = 0, lam_omega: float | None = None,
                     history: bool = False):
    """Sampled upper bound on the infimum of the mu-threshold over G_delta.

    G_delta = {E + B <= 0, ||v||_{H1} <= delta, A > 0, B > 0}; the constant
    (|bd|/|Omega|)^{1/(1-q)} is always the first sample.
    """
    from .spectra import lambda_omega

    if lam_omega is None:
        lam_omega = lambda_omega(forms).value
    if lam_omega <= 1:
        raise PreconditionLambdaOmega("mu_* needs lambda_Omega > 1")
    vol, surf = forms.mesh.spec.volume, forms.mesh.spec.surface
    p, q = params.p, params.q
    kappa = 1 / (1 - q)
    if delta < surf ** kappa / vol ** ((1 + q) / (2 * (1 - q))) * (1 - 1e-12):
        raise ValueError("delta below |bd|^(1/(1-q)) / |Omega|^((1+q)/(2(1-q)))")
    rng = np.random.default_rng(seed)
    values = []

    def consider(v):
        tr = energies(forms, v, params)
        if not (tr.E < 0 and tr.A > 0 and tr.B > 0):
            return
        norm = forms.h1_norm(v)
        s_lo, s_hi = (tr.B / -tr.E) ** kappa, delta / norm
        if s_lo > s_hi * (1 + 1e-12):
            return
        values.append(mu_threshold(tr, p, q))

    consider(np.full(forms.n, (surf / vol) ** kappa))
    for v in sample_fields(forms, rng, samples - 1):
        consider(v)
    running = _running_infimum(values)
    return (float(running[-1]), running) if history else float(running[-1])
