"""Discrete weak forms: stiffness, masses, nonlinear residuals and Jacobians.

Nonlinear integrals go through sparse interpolation operators onto
quadrature points, so every integral of a nodal function ``f(u_h)`` against
the basis is ``Q.T @ (w * f(Q @ u))`` and every weighted mass matrix is
``Q.T @ diag(w * c) @ Q``. Interior rules are 3-point Gauss per axis;
boundary rules are exact endpoint evaluation in 1D and 2-point Gauss per
edge in 2D.

Two charts share the same machinery. In the original chart the unknown is
``u`` with reaction ``u - |u|^{p-1} u`` and boundary flux ``lam * g(u)``; in
the rescaled chart ``v = lam**(-1/(1-q)) u`` the reaction is
``v - mu |v|^{p-1} v`` and the boundary coefficient is one.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ConfigError, MeshMismatchError, NonDifferentiableBoundary, PreconditionError
from .mesh import Mesh

__all__ = [
    "JACOBIAN_FLOOR",
    "AssembledForms",
    "Field",
    "ProblemParams",
    "assemble",
    "residual",
    "residual_rescaled",
    "jacobian",
    "jacobian_rescaled",
    "dresidual_dlambda",
    "dresidual_dmu",
    "rescale_chart",
    "unscale_chart",
    "export_coo",
]

#: Boundary values below this floor never enter the derivative of t**q.
JACOBIAN_FLOOR = 1e-8

_GAUSS3_X = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
_GAUSS3_W = np.array([5.0, 8.0, 5.0]) / 18.0
_GAUSS2_X = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS2_W = np.array([0.5, 0.5])


@dataclass(frozen=True)
class ProblemParams:
    """Exponents and parameters; ``lam``/``mu`` are not kept consistent here."""

    p: float = 2.0
    q: float = 0.5
    lam: float = 0.0
    mu: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.q < 1.0 < self.p:
            raise ConfigError(f"need 0 < q < 1 < p, got p={self.p}, q={self.q}")
        if self.lam < 0 or self.mu < 0:
            raise ConfigError("lam and mu must be nonnegative")
        if not 0.0 <= self.eps < 1.0:
            raise ConfigError("eps must lie in [0, 1)")

    def with_(self, **changes) -> "ProblemParams":
        return replace(self, **changes)

    @property
    def kappa(self) -> float:
        """Exponent 1/(1-q) of the chart change v = lam**(-kappa) u."""
        return 1.0 / (1.0 - self.q)

    @property
    def stability_floor(self) -> float:
        """((1-q)/(p-q))**(1/(p-1)); solutions above it everywhere are stable."""
        return ((1.0 - self.q) / (self.p - self.q)) ** (1.0 / (self.p - 1.0))


@dataclass(eq=False)
class Field:
    """Nodal coefficients tied to the mesh they were computed on."""

    coeffs: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mesh.n,):
            raise MeshMismatchError(
                f"field has shape {self.coeffs.shape}, mesh has {self.mesh.n} nodes")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("field has non-finite entries")

    def __array__(self, dtype=None, copy=None):
        return self.coeffs if dtype is None else self.coeffs.astype(dtype)


@dataclass(frozen=True, eq=False)
class AssembledForms:
    mesh: Mesh
    K: sp.csr_matrix
    M: sp.csr_matrix
    M_bd: sp.csr_matrix
    Q: sp.csr_matrix   # nodal values -> interior quadrature points
    w: np.ndarray      # interior quadrature weights
    Qb: sp.csr_matrix  # nodal values -> boundary quadrature points
    wb: np.ndarray     # boundary quadrature weights
    G: sp.csr_matrix | None = None   # nodal values -> gradient components at quadrature points
    wg: np.ndarray | None = None     # weights for G, so K = G^T diag(wg) G

    @property
    def n(self) -> int:
        return self.mesh.n

    @property
    def H1(self) -> sp.csr_matrix:
        """Gram matrix of the H^1 inner product."""
        return (self.K + self.M).tocsr()

    def coeffs(self, u) -> np.ndarray:
        """Validate ``u`` against this mesh and return its nodal vector."""
        if isinstance(u, Field):
            if u.mesh is not self.mesh:
                raise MeshMismatchError("field belongs to a different mesh")
            return u.coeffs
        arr = np.asarray(u, dtype=float)
        if arr.shape != (self.n,):
            raise MeshMismatchError(f"expected {self.n} nodal values, got shape {arr.shape}")
        return arr

    def field(self, coeffs) -> Field:
        return Field(np.array(coeffs, dtype=float), self.mesh)

    def constant(self, c: float) -> np.ndarray:
        return np.full(self.n, float(c))

    def load(self, values: np.ndarray) -> np.ndarray:
        """Vector of integrals of ``values`` (at interior quad points) times basis."""
        return self.Q.T @ (self.w * values)

    def bd_load(self, values: np.ndarray) -> np.ndarray:
        return self.Qb.T @ (self.wb * values)

    def weighted_mass(self, values: np.ndarray) -> sp.csr_matrix:
        return (self.Q.T @ sp.diags(self.w * values) @ self.Q).tocsr()

    def bd_weighted_mass(self, values: np.ndarray) -> sp.csr_matrix:
        return (self.Qb.T @ sp.diags(self.wb * values) @ self.Qb).tocsr()

    def integrate(self, values: np.ndarray) -> float:
        return float(self.w @ values)

    def bd_integrate(self, values: np.ndarray) -> float:
        return float(self.wb @ values)

    # Sums of squares at quadrature points avoid the cancellation of u^T K u,
    # whose nodal terms are O(1/h) while the total is O(1).
    def mass_form(self, u) -> float:
        u = self.coeffs(u)
        return float(self.w @ (self.Q @ u) ** 2)

    def stiffness_form(self, u) -> float:
        u = self.coeffs(u)
        if self.G is None:
            return float(u @ (self.K @ u))
        return float(self.wg @ (self.G @ u) ** 2)

    def l2_norm(self, u) -> float:
        return float(np.sqrt(self.mass_form(u)))

    def h1_norm(self, u) -> float:
        return float(np.sqrt(self.stiffness_form(u) + self.mass_form(u)))


def _interval_operators(mesh: Mesh):
    n = mesh.n
    nel = mesh.elements.shape[0]
    he = mesh.element_measures()
    left, right = mesh.elements[:, 0], mesh.elements[:, 1]

    rows = np.arange(3 * nel)
    el = np.repeat(np.arange(nel), 3)
    xi = np.tile(_GAUSS3_X, nel)
    Q = sp.csr_matrix(
        (np.concatenate([1.0 - xi, xi]),
         (np.concatenate([rows, rows]), np.concatenate([left[el], right[el]]))),
        shape=(3 * nel, n))
    w = np.tile(_GAUSS3_W, nel) * he[el]

    # Element-constant derivative operator.
    G = sp.csr_matrix(
        (np.concatenate([-1.0 / he, 1.0 / he]),
         (np.concatenate([np.arange(nel)] * 2), np.concatenate([left, right]))),
        shape=(nel, n))
    K = (G.T @ sp.diags(he) @ G).tocsr()

    bnd = mesh.boundary_nodes
    Qb = sp.csr_matrix((np.ones(bnd.size), (np.arange(bnd.size), bnd)), shape=(bnd.size, n))
    wb = np.ones(bnd.size)
    return Q, w, K, Qb, wb, G.tocsr(), he.astype(float)


def _rectangle_operators(mesh: Mesh):
    n = mesh.n
    quads = mesh.elements
    nel = quads.shape[0]
    hx, hy = mesh.spacing
    gx, gy = np.meshgrid(_GAUSS3_X, _GAUSS3_X)
    gw = np.outer(_GAUSS3_W, _GAUSS3_W).ravel()
    xi, eta = gx.ravel(), gy.ravel()
    nq = xi.size

    # Bilinear shape functions on corners (0,0), (1,0), (1,1), (0,1).
    shape = np.column_stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta])
    dx = np.column_stack([-(1 - eta), (1 - eta), eta, -eta]) / hx
    dy = np.column_stack([-(1 - xi), -xi, xi, (1 - xi)]) / hy

    rows = np.repeat(np.arange(nel * nq), 4)
    cols = np.repeat(quads, nq, axis=0).ravel()

    def op(table):
        return sp.csr_matrix((np.tile(table.ravel(), nel), (rows, cols)), shape=(nel * nq, n))

    Q, Gx, Gy = op(shape), op(dx), op(dy)
    w = np.tile(gw, nel) * hx * hy
    W = sp.diags(w)
    K = (Gx.T @ W @ Gx + Gy.T @ W @ Gy).tocsr()

    edges = mesh.boundary_edges
    ne = edges.shape[0]
    p0, p1 = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
    elen = np.linalg.norm(p1 - p0, axis=1)
    brow = np.repeat(np.arange(2 * ne), 2)
    t = np.tile(_GAUSS2_X, ne)
    bvals = np.column_stack([1.0 - t, t]).ravel()
    bcols = np.repeat(edges, 2, axis=0).ravel()
    Qb = sp.csr_matrix((bvals, (brow, bcols)), shape=(2 * ne, n))
    wb = np.tile(_GAUSS2_W, ne) * np.repeat(elen, 2)
    return Q, w, K, Qb, wb, sp.vstack([Gx, Gy]).tocsr(), np.concatenate([w, w])


def assemble(mesh: Mesh) -> AssembledForms:
    """P1 forms on intervals, Q1 forms on rectangles."""
    if mesh.dim == 1:
        Q, w, K, Qb, wb, G, wg = _interval_operators(mesh)
    else:
        Q, w, K, Qb, wb, G, wg = _rectangle_operators(mesh)
    M = (Q.T @ sp.diags(w) @ Q).tocsr()
    M_bd = (Qb.T @ sp.diags(wb) @ Qb).tocsr()
    for A in (K, M, M_bd):
        A.eliminate_zeros()
    return AssembledForms(mesh=mesh, K=K, M=M, M_bd=M_bd, Q=Q.tocsr(), w=w, Qb=Qb.tocsr(), wb=wb,
                          G=G, wg=wg)


# --- pointwise nonlinearities -------------------------------------------------

def _odd_power(t: np.ndarray, p: float) -> np.ndarray:
    return np.abs(t) ** (p - 1.0) * t


def boundary_flux(t: np.ndarray, q: float, eps: float) -> np.ndarray:
    """g_eps(t) = (|t| + eps)^(q-1) t for eps > 0, max(t, 0)^q for eps = 0."""
    if eps > 0:
        return (np.abs(t) + eps) ** (q - 1.0) * t
    return np.maximum(t, 0.0) ** q


def boundary_flux_derivative(t: np.ndarray, q: float, eps: float) -> np.ndarray:
    if eps > 0:
        s = np.abs(t) + eps
        return s ** (q - 2.0) * (q * np.abs(t) + eps)
    tmin = float(np.min(t)) if t.size else np.inf
    if tmin < JACOBIAN_FLOOR:
        raise NonDifferentiableBoundary(
            f"boundary value {tmin:.3e} below the floor {JACOBIAN_FLOOR:g} at eps = 0")
    return q * t ** (q - 1.0)


# --- chart-generic kernels ----------------------------------------------------

def _residual(forms: AssembledForms, u: np.ndarray, react: float, bd: float,
              p: float, q: float, eps: float) -> np.ndarray:
    uq = forms.Q @ u
    r = forms.K @ u - forms.load(uq - react * _odd_power(uq, p))
    if bd != 0.0:
        r = r + bd * forms.bd_load(boundary_flux(forms.Qb @ u, q, eps))
    return r


def _jacobian(forms: AssembledForms, u: np.ndarray, react: float, bd: float,
              p: float, q: float, eps: float) -> sp.csr_matrix:
    uq = forms.Q @ u
    J = forms.K - forms.weighted_mass(1.0 - react * p * np.abs(uq) ** (p - 1.0))
    if bd != 0.0:
        J = J + bd * forms.bd_weighted_mass(boundary_flux_derivative(forms.Qb @ u, q, eps))
    return J.tocsr()


# --- original chart -------------------------------------------------------------

def residual(forms: AssembledForms, u, params: ProblemParams) -> np.ndarray:
    """Dual residual of the weak problem in the (lam, u) chart."""
    u = forms.coeffs(u)
    return _residual(forms, u, 1.0, params.lam, params.p, params.q, params.eps)


def jacobian(forms: AssembledForms, u, params: ProblemParams) -> sp.csr_matrix:
    u = forms.coeffs(u)
    return _jacobian(forms, u, 1.0, params.lam, params.p, params.q, params.eps)


def dresidual_dlambda(forms: AssembledForms, u, params: ProblemParams) -> np.ndarray:
    u = forms.coeffs(u)
    return forms.bd_load(boundary_flux(forms.Qb @ u, params.q, params.eps))


# --- rescaled chart -------------------------------------------------------------

def residual_rescaled(forms: AssembledForms, v, params: ProblemParams) -> np.ndarray:
    """Dual residual of the rescaled problem with reaction v - mu v^p."""
    v = forms.coeffs(v)
    return _residual(forms, v, params.mu, 1.0, params.p, params.q, params.eps)


def jacobian_rescaled(forms: AssembledForms, v, params: ProblemParams) -> sp.csr_matrix:
    v = forms.coeffs(v)
    return _jacobian(forms, v, params.mu, 1.0, params.p, params.q, params.eps)


def dresidual_dmu(forms: AssembledForms, v, params: ProblemParams) -> np.ndarray:
    v = forms.coeffs(v)
    return forms.load(_odd_power(forms.Q @ v, params.p))


def rescale_chart(u, lam: float, params: ProblemParams):
    """(u, lam) -> (v, mu) with v = lam^(-1/(1-q)) u and mu = lam^((p-1)/(1-q))."""
    if lam <= 0:
        raise PreconditionError("chart change needs lam > 0")
    k = params.kappa
    coeffs = np.asarray(u, dtype=float) * lam ** (-k)
    v = Field(coeffs, u.mesh) if isinstance(u, Field) else coeffs
    return v, lam ** ((params.p - 1.0) * k)


def unscale_chart(v, mu: float, params: ProblemParams):
    """Inverse of :func:`rescale_chart`; mu = 0 maps to (0, 0)."""
    if mu < 0:
        raise PreconditionError("mu must be nonnegative")
    lam = mu ** ((1.0 - params.q) / (params.p - 1.0))
    coeffs = np.asarray(v, dtype=float) * lam ** params.kappa
    u = Field(coeffs, v.mesh) if isinstance(v, Field) else coeffs
    return u, lam


def export_coo(matrix, path) -> None:
    """Write a sparse matrix as Matrix Market coordinate text."""
    scipy.io.mmwrite(str(Path(path)), sp.coo_matrix(matrix))
