"""Principal eigenvalues: Dirichlet, boundary (Steklov-type), and linearized stability.

All problems are symmetric pencils ``A x = value * B x`` with ``B`` positive
definite (on the relevant subspace). Small systems go through a dense
generalized ``eigh``; larger ones through shift-invert Lanczos with the
shift placed below an a priori lower bound of the spectrum, so the
factorized operator is positive definite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .assembly import AssembledForms, Field, ProblemParams, jacobian, jacobian_rescaled
from .errors import LambdaOmegaNotGreaterThanOne, SolverError

__all__ = [
    "DENSE_MAX",
    "STABILITY_TOL",
    "EigenResult",
    "lambda_omega",
    "sigma1",
    "gamma1_of_sigma",
    "gamma1_linearized",
    "lambda_eps",
    "stability_label",
]

#: Largest system size solved by dense reduction.
DENSE_MAX = 400
STABILITY_TOL = 1e-8


@dataclass
class EigenResult:
    value: float
    vector: Field
    residual_norm: float
    iterations: int
    gap: float = np.inf          # relative distance to the next eigenvalue
    normalization: str = "B"     # "B" (pencil norm), "sup", or "boundary"

    @property
    def simple(self) -> bool:
        return self.gap > 1e-8

    @property
    def principal(self) -> bool:
        """Single-signed eigenvector (after sign normalization)."""
        v = self.vector.coeffs
        return bool(v.min() >= -1e-10 * max(1.0, np.abs(v).max()))


def stability_label(gamma: float | None) -> str:
    if gamma is None or not np.isfinite(gamma):
        return "NotComputed"
    if gamma > STABILITY_TOL:
        return "Stable"
    if gamma < -STABILITY_TOL:
        return "Unstable"
    return "Marginal"


def _smallest_pair(A, B, lower_bound: float, dense_max: int = DENSE_MAX):
    """Two smallest eigenpairs of the symmetric pencil (A, B).

    Returns (values[2], vectors[:, :2], iterations).
    """
    n = A.shape[0]
    k = min(2, n)
    if n <= dense_max:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
        vals, vecs = la.eigh(Ad, Bd, subset_by_index=[0, k - 1])
        return vals, vecs, 1

    shift = lower_bound - 1.0
    lu = spla.splu((A - shift * B).tocsc())
    count = [0]

    def apply(x):
        count[0] += 1
        return lu.solve(np.asarray(x, dtype=float).ravel())

    op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    try:
        vals, vecs = spla.eigsh(A, k=k, M=B, sigma=shift, which="LM", OPinv=op, tol=1e-13)
    except spla.ArpackNoConvergence as exc:
        raise SolverError("shift-invert Lanczos did not converge") from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order], count[0]


def _orient(x: np.ndarray) -> np.ndarray:
    """Flip sign so the dominant part is positive."""
    return -x if x.sum() < 0 else x


def _result(forms, A, B, vals, vecs, iters, normalization="B") -> EigenResult:
    x = _orient(vecs[:, 0].copy())
    if normalization == "B":
        x /= np.sqrt(x @ (B @ x))
    value = float(vals[0])
    res = float(np.linalg.norm(A @ x - value * (B @ x)))
    gap = np.inf
    if len(vals) > 1:
        gap = float((vals[1] - vals[0]) / max(1.0, abs(vals[0])))
    return EigenResult(value, forms.field(x), res, iters, gap, normalization)


def lambda_omega(forms: AssembledForms, dense_max: int = DENSE_MAX) -> EigenResult:
    """Principal Dirichlet eigenpair; eigenvector extended by zero, sup-norm 1."""
    inner = forms.mesh.interior_nodes
    if inner.size == 0:
        raise SolverError("mesh has no interior nodes")
    K0 = forms.K[inner][:, inner]
    M0 = forms.M[inner][:, inner]
    vals, vecs, iters = _smallest_pair(K0, M0, 0.0, dense_max)
    x0 = _orient(vecs[:, 0].copy())
    x0 /= np.abs(x0).max()
    value = float(vals[0])
    res = float(np.linalg.norm(K0 @ x0 - value * (M0 @ x0)))
    x = np.zeros(forms.n)
    x[inner] = x0
    gap = float((vals[1] - vals[0]) / max(1.0, abs(vals[0]))) if len(vals) > 1 else np.inf
    return EigenResult(value, forms.field(x), res, iters, gap, "sup")


def _gamma_pencil(forms: AssembledForms, sigma: float):
    A = (forms.K - forms.M - sigma * forms.M_bd).tocsr()
    B = (forms.M + forms.M_bd).tocsr()
    # Rayleigh quotient of A over B is at least -max(1, sigma).
    return A, B, -max(1.0, sigma)


def gamma1_of_sigma(forms: AssembledForms, sigma: float, dense_max: int = DENSE_MAX) -> EigenResult:
    """Smallest gamma of (K - M - sigma M_bd) psi = gamma (M + M_bd) psi."""
    A, B, lb = _gamma_pencil(forms, sigma)
    vals, vecs, iters = _smallest_pair(A, B, lb, dense_max)
    return _result(forms, A, B, vals, vecs, iters)


def sigma1(forms: AssembledForms, lam_omega: float | None = None,
           dense_max: int = DENSE_MAX, xtol: float = 1e-13) -> EigenResult:
    """Principal boundary eigenvalue: the root of gamma1(sigma) = 0.

    The eigenvector is normalized by its boundary mass.
    """
    if lam_omega is None:
        lam_omega = lambda_omega(forms, dense_max).value
    if lam_omega <= 1.0:
        raise LambdaOmegaNotGreaterThanOne(
            f"lambda_Omega = {lam_omega:.6g} <= 1: no principal boundary eigenvalue")

    def g(s):
        return gamma1_of_sigma(forms, s, dense_max).value

    hi = 0.0
    g_hi = g(hi)
    if g_hi >= 0:
        raise SolverError("gamma1(0) >= 0 although lambda_Omega > 1")
    lo = -1.0
    evals = 1
    while g(lo) <= 0:
        hi, lo = lo, 2.0 * lo
        evals += 1
        if lo < -1e8:
            raise SolverError("could not bracket the principal boundary eigenvalue")
    root, info = brentq(g, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, full_output=True)
    A, B, lb = _gamma_pencil(forms, root)
    vals, vecs, _ = _smallest_pair(A, B, lb, dense_max)
    x = _orient(vecs[:, 0].copy())
    x /= np.sqrt(x @ (forms.M_bd @ x))
    res = float(np.linalg.norm(A @ x - vals[0] * (B @ x)))
    # residual of the boundary pencil (K - M) x = sigma M_bd x
    res = max(res, float(np.linalg.norm((forms.K - forms.M) @ x - root * (forms.M_bd @ x))))
    return EigenResult(float(root), forms.field(x), res, evals + info.function_calls,
                       normalization="boundary")


def gamma1_linearized(forms: AssembledForms, u, params: ProblemParams, chart: str = "U",
                      dense_max: int = DENSE_MAX) -> EigenResult:
    """Principal eigenpair of the linearization at ``u`` against M + M_bd.

    In chart ``"V"`` the rescaled Jacobian is used; the two Jacobians agree on
    corresponding points, so the eigenvalue does not depend on the chart.
    """
    if chart == "U":
        A = jacobian(forms, u, params)
    elif chart == "V":
        A = jacobian_rescaled(forms, u, params)
    else:
        raise ValueError(f"unknown chart {chart!r}")
    B = (forms.M + forms.M_bd).tocsr()
    # f' <= 1 and g' > 0 give A >= K - M >= -B.
    vals, vecs, iters = _smallest_pair(A, B, -1.0, dense_max)
    return _result(forms, A, B, vals, vecs, iters)


def lambda_eps(forms: AssembledForms, eps: float, q: float, sigma: float | None = None) -> float:
    """Bifurcation value -sigma1 * eps^(1-q) of the regularized problem."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if sigma is None:
        sigma = sigma1(forms).value
    return float(-sigma * eps ** (1.0 - q))
