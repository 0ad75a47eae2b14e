"""Independent 1D ground truth: shooting, the sine-ansatz limit profile, analytic eigenvalues.

Nothing here touches the finite-element code. On an interval ``(a, b)`` the
steady states solve

    u'' = -u (1 - c |u|^{p-1}) ,   u'(a) = k u(a)^q ,   u'(b) = -k u(b)^q

with ``(c, k) = (1, lam)`` in the original chart and ``(mu, 1)`` in the
rescaled one. Shooting from ``x = a`` with ``u(a) = s`` leaves the single
mismatch ``u'(b) + k max(u(b), 0)^q``, whose sign changes in ``s`` locate
solutions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import LambdaOmegaNotGreaterThanOne, NoSolution
from .mesh import DomainSpec

__all__ = [
    "ShootingMatch",
    "ShootingResult",
    "LimitProfile",
    "shoot_count",
    "shoot_limit_problem",
    "shoot_dirichlet",
    "oracle_fold",
    "fold_by_profile",
    "analytic_eigen",
]

RTOL = 1e-12
ATOL = 1e-14
MATCH_TOL = 1e-9


@dataclass
class ShootingMatch:
    s: float
    x: np.ndarray
    u: np.ndarray
    mismatch: float
    constant: bool = False
    _sol: object = field(default=None, repr=False)

    def __call__(self, x) -> np.ndarray:
        """Profile values at arbitrary points of the interval."""
        if self._sol is None:
            return np.full_like(np.asarray(x, dtype=float), self.s)
        return self._sol.sol(np.asarray(x, dtype=float))[0]

    @property
    def boundary_values(self) -> tuple[float, float]:
        return float(self.u[0]), float(self.u[-1])


@dataclass
class ShootingResult:
    matches: list
    scan_resolution: int
    lam: float

    @property
    def count(self) -> int:
        return len(self.matches)

    @property
    def nonconstant_count(self) -> int:
        return sum(not m.constant for m in self.matches)


def _interval(interval) -> tuple[float, float]:
    if isinstance(interval, DomainSpec):
        if interval.kind != "interval":
            raise ValueError("shooting needs an interval domain")
        return interval.bounds
    a, b = interval
    return float(a), float(b)


def _rhs_vec(p, react, cap=np.inf):
    """Right side for interleaved (u, u') pairs.

    The reaction is evaluated on u clipped to [-cap, cap], so trajectories
    that escape (and can never be solutions) grow at most exponentially and
    do not stall the batch.
    """
    def f(x, y):
        u = y[0::2]
        uc = np.clip(u, -cap, cap)
        du = -u * (1.0 - react * np.abs(uc) ** (p - 1.0))
        out = np.empty_like(y)
        out[0::2] = y[1::2]
        out[1::2] = du
        return out
    return f


#: Multiple of the largest initial value beyond which a trajectory is discarded.
ESCAPE_FACTOR = 10.0


def _terminal(a, b, s, p, q, react, flux):
    """Terminal (u(b), u'(b)) for every s in one vectorized integration.

    Trajectories leaving [-cap, cap] are reported as nan.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    cap = ESCAPE_FACTOR * max(1.0, float(np.abs(s).max()))
    y0 = np.empty(2 * s.size)
    y0[0::2] = s
    y0[1::2] = flux * np.maximum(s, 0.0) ** q
    sol = solve_ivp(_rhs_vec(p, react, cap), (a, b), y0, method="DOP853", rtol=RTOL, atol=ATOL)
    if not sol.success:
        raise NoSolution(f"integration failed: {sol.message}")
    yb = sol.y[:, -1].copy()
    escaped = np.abs(sol.y[0::2]).max(axis=1) > cap
    yb[0::2][escaped] = np.nan
    yb[1::2][escaped] = np.nan
    return yb[0::2], yb[1::2]


def _mismatch(a, b, s, p, q, react, flux):
    ub, dub = _terminal(a, b, s, p, q, react, flux)
    return dub + flux * np.maximum(ub, 0.0) ** q


def _trajectory(a, b, s, p, q, react, flux, grid_points):
    y0 = [s, flux * max(s, 0.0) ** q]
    sol = solve_ivp(_rhs_vec(p, react), (a, b), y0, method="DOP853",
                    rtol=RTOL, atol=ATOL, dense_output=True)
    x = np.linspace(a, b, grid_points)
    return sol, x, sol.sol(x)[0]


def _default_scan(n, s_min, s_max):
    """Geometric scan near zero joined to a uniform scan up to s_max."""
    split = min(0.1, s_max)
    nlog = n // 2
    g = np.geomspace(s_min, split, nlog, endpoint=False)
    l = np.linspace(split, s_max, n - nlog)
    return np.concatenate([g, l])


def _scan_roots(a, b, p, q, react, flux, scan, grid_points, lam_label):
    m = _mismatch(a, b, scan, p, q, react, flux)
    matches = []
    idx = np.flatnonzero(np.sign(m[:-1]) * np.sign(m[1:]) < 0)
    exact = np.flatnonzero(m == 0.0)

    def g(s):
        return float(_mismatch(a, b, s, p, q, react, flux)[0])

    roots = [float(scan[i]) for i in exact]
    for i in idx:
        roots.append(brentq(g, scan[i], scan[i + 1], xtol=1e-16, rtol=1e-15, maxiter=200))
    for s in sorted(roots):
        mis = g(s)
        if abs(mis) > MATCH_TOL:
            continue
        sol, x, u = _trajectory(a, b, s, p, q, react, flux, grid_points)
        fine = sol.sol(np.linspace(a, b, 8 * grid_points))[0]
        if fine.min() <= 0.0:
            continue
        matches.append(ShootingMatch(s, x, u, mis, False, sol))
    return ShootingResult(matches, len(scan), lam_label)


def shoot_count(interval, p: float = 2.0, q: float = 0.5, lam: float = 0.0, *,
                scan_points: int = 400, s_min: float = 1e-6, s_max: float = 1 - 1e-6,
                grid_points: int = 1025, chart: str = "U", mu: float | None = None) -> ShootingResult:
    """All positive solutions found by scanning the initial value u(a) = s.

    In chart ``"V"`` the problem with reaction v - mu v^p and unit boundary
    coefficient is shot instead (``mu`` required, ``s_max`` should then bound v).
    At ``lam = 0`` in chart U the constant solution 1 is reported as a match
    flagged ``constant``.
    """
    a, b = _interval(interval)
    if chart == "U":
        react, flux, label = 1.0, float(lam), float(lam)
    elif chart == "V":
        if mu is None:
            raise ValueError("chart V needs mu")
        react, flux, label = float(mu), 1.0, float(mu)
    else:
        raise ValueError(f"unknown chart {chart!r}")
    scan = _default_scan(scan_points, s_min, s_max)
    res = _scan_roots(a, b, p, q, react, flux, scan, grid_points, label)
    if chart == "U" and flux == 0.0:
        x = np.linspace(a, b, grid_points)
        res.matches.append(ShootingMatch(1.0, x, np.ones_like(x), 0.0, True))
    return res


def oracle_fold(interval, p: float = 2.0, q: float = 0.5, *, scan_points: int = 400,
                lam_lo: float = 0.0, lam_hi: float | None = None, rtol: float = 1e-4) -> float:
    """Largest lam with at least two positive solutions, by bisection in lam."""
    def two(lam):
        return shoot_count(interval, p, q, lam, scan_points=scan_points, grid_points=3).count >= 2

    lo = lam_lo if lam_lo > 0 else 1e-3
    if not two(lo):
        raise NoSolution("fewer than two solutions at the lower bracket")
    hi = lam_hi if lam_hi is not None else 2 * lo
    while two(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            raise NoSolution("no fold found")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if two(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fold_by_profile(interval, p: float = 2.0, q: float = 0.5, *, s_points: int = 60) -> tuple[float, float]:
    """Fold from the solution curve lam(s): returns (max lam, s at the max).

    For each s the mismatch is linear-plus-sublinear in lam; the positive
    root lam(s) is found by bracketing, then the maximum of s -> lam(s) is
    refined by golden-section on the bracket around the sampled maximum.
    """
    a, b = _interval(interval)

    def lam_of_s(s):
        def g(lam):
            return float(_mismatch(a, b, s, p, q, 1.0, lam)[0])
        hi = 1e-3
        g0 = g(0.0)
        while np.sign(g(hi)) == np.sign(g0):
            hi *= 2
            if hi > 1e4:
                return np.nan
        return brentq(g, 0.0 if g0 != 0 else 1e-300, hi, xtol=1e-15, rtol=1e-14)

    ss = np.linspace(1e-3, 1 - 1e-3, s_points)
    lams = np.array([lam_of_s(s) for s in ss])
    k = int(np.nanargmax(lams))
    lo, hi = ss[max(k - 1, 0)], ss[min(k + 1, ss.size - 1)]
    phi = (np.sqrt(5) - 1) / 2
    c, d = hi - phi * (hi - lo), lo + phi * (hi - lo)
    fc, fd = lam_of_s(c), lam_of_s(d)
    while hi - lo > 1e-10:
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - phi * (hi - lo)
            fc = lam_of_s(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + phi * (hi - lo)
            fd = lam_of_s(d)
    s_star = 0.5 * (lo + hi)
    return float(lam_of_s(s_star)), float(s_star)


@dataclass(frozen=True)
class LimitProfile:
    """v0(x) = C1 sin(x + C2), a positive solution of the rescaled problem at mu = 0."""

    C1: float
    C2: float
    a: float
    b: float
    q: float

    def __call__(self, x):
        return self.C1 * np.sin(np.asarray(x, dtype=float) + self.C2)

    def derivative(self, x):
        return self.C1 * np.cos(np.asarray(x, dtype=float) + self.C2)

    def bc_residuals(self) -> tuple[float, float]:
        ra = self.derivative(self.a) - self(self.a) ** self.q
        rb = self.derivative(self.b) + self(self.b) ** self.q
        return float(ra), float(rb)


def shoot_limit_problem(interval, q: float = 0.5, *, tol: float = 1e-13, max_iter: int = 100) -> LimitProfile:
    """Solve the two boundary conditions for (C1, C2) of the sine ansatz by 2D Newton."""
    a, b = _interval(interval)
    L = b - a
    if not L < np.pi:
        raise NoSolution("the sine ansatz is positive on [a, b] only for b - a < pi")

    def F(c):
        C1, C2 = c
        va, vb = C1 * np.sin(a + C2), C1 * np.sin(b + C2)
        if va <= 0 or vb <= 0:
            return None
        return np.array([C1 * np.cos(a + C2) - va ** q, C1 * np.cos(b + C2) + vb ** q])

    def Jac(c):
        C1, C2 = c
        sa, ca = np.sin(a + C2), np.cos(a + C2)
        sb, cb = np.sin(b + C2), np.cos(b + C2)
        va, vb = C1 * sa, C1 * sb
        return np.array([
            [ca - q * va ** (q - 1) * sa, -C1 * sa - q * va ** (q - 1) * C1 * ca],
            [cb + q * vb ** (q - 1) * sb, -C1 * sb + q * vb ** (q - 1) * C1 * cb],
        ])

    mid = 0.5 * (a + b)
    # Start from a skewed guess so the symmetric answer is found, not assumed.
    c = np.array([1.0, np.pi / 2 - mid + 0.1 * L])
    for _ in range(max_iter):
        r = F(c)
        if r is None:
            raise NoSolution("Newton left the positivity region of the ansatz")
        if np.max(np.abs(r)) < tol:
            break
        step = np.linalg.solve(Jac(c), -r)
        t = 1.0
        while t > 1e-8:
            trial = c + t * step
            rt = F(trial)
            if rt is not None and np.linalg.norm(rt) < (1 - 1e-4 * t) * np.linalg.norm(r):
                break
            t *= 0.5
        c = c + t * step
    else:
        raise NoSolution("Newton on the sine ansatz did not converge")
    prof = LimitProfile(float(c[0]), float(c[1]), a, b, q)
    xs = np.linspace(a, b, 4097)
    if prof(xs).min() <= 0:
        raise NoSolution("limit profile is not positive on [a, b]")
    if max(abs(v) for v in prof.bc_residuals()) > 1e-12:
        raise NoSolution("boundary conditions not met to 1e-12")
    return prof


def shoot_dirichlet(interval, p: float = 2.0, *, grid_points: int = 1025) -> ShootingMatch:
    """Positive solution of -u'' = u(1 - u^{p-1}), u(a) = u(b) = 0, by shooting on u'(a).

    The first zero z(s) of the trajectory with u(a) = 0, u'(a) = s grows from
    a + pi (small s) to infinity as s approaches the separatrix slope
    sqrt(1 - 2/(p+1)), so z(s) = b is solved by bisection in s.
    """
    a, b = _interval(interval)
    L = b - a
    if L <= np.pi:
        raise NoSolution("no positive Dirichlet solution when lambda_Omega >= 1")
    f = _rhs_vec(p, 1.0)

    def crossing(x, y):
        return y[0]
    crossing.terminal = True
    crossing.direction = -1

    def first_zero(s):
        sol = solve_ivp(f, (a, a + 4 * L), [0.0, s], method="DOP853", rtol=RTOL, atol=ATOL,
                        events=crossing)
        hits = sol.t_events[0]
        return hits[0] - a if hits.size else np.inf

    s_sep = np.sqrt(1.0 - 2.0 / (p + 1.0))
    lo, hi = 0.0, s_sep
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if first_zero(mid) < L:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    s = 0.5 * (lo + hi)
    sol = solve_ivp(f, (a, b), [0.0, s], method="DOP853", rtol=RTOL, atol=ATOL, dense_output=True)
    x = np.linspace(a, b, grid_points)
    u = sol.sol(x)[0]
    u[0] = u[-1] = 0.0
    return ShootingMatch(float(s), x, u, float(sol.y[0, -1]), False, sol)


def analytic_eigen(spec: DomainSpec) -> dict:
    """lambda_Omega = sum (pi/L_i)^2; on intervals with lambda_Omega > 1, sigma1 = -tan(L/2)."""
    lam = sum((np.pi / L) ** 2 for L in spec.lengths)
    out = {"lambda_omega": lam, "sigma1": None}
    if spec.kind == "interval" and lam > 1:
        out["sigma1"] = -np.tan(spec.lengths[0] / 2)
    return out


def sigma1_exact(spec: DomainSpec) -> float:
    """Raise unless the analytic boundary eigenvalue exists."""
    res = analytic_eigen(spec)
    if res["sigma1"] is None:
        raise LambdaOmegaNotGreaterThanOne("sigma1 undefined")
    return res["sigma1"]
