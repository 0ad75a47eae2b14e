"""Product domains (intervals, axis-aligned rectangles) and uniform meshes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateDomainError

__all__ = ["DomainSpec", "Mesh", "build_mesh", "measures", "parse_domain"]


@dataclass(frozen=True)
class DomainSpec:
    """An interval ``(a, b)`` or a rectangle ``(ax, bx) x (ay, by)``."""

    kind: str
    bounds: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("interval", "rectangle"):
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        expected = 2 if self.kind == "interval" else 4
        bounds = tuple(float(b) for b in self.bounds)
        if len(bounds) != expected:
            raise ConfigError(f"{self.kind} needs {expected} bounds, got {len(bounds)}")
        if not all(math.isfinite(b) for b in bounds):
            raise DegenerateDomainError("domain bounds must be finite")
        for lo, hi in zip(bounds[::2], bounds[1::2]):
            if not lo < hi:
                raise DegenerateDomainError(f"degenerate domain: {lo} >= {hi}")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def interval(cls, a: float, b: float) -> "DomainSpec":
        return cls("interval", (a, b))

    @classmethod
    def rectangle(cls, ax: float, bx: float, ay: float, by: float) -> "DomainSpec":
        return cls("rectangle", (ax, bx, ay, by))

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def lengths(self) -> tuple[float, ...]:
        b = self.bounds
        return tuple(hi - lo for lo, hi in zip(b[::2], b[1::2]))

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)

    @property
    def surface(self) -> float:
        # Two-point counting measure on the boundary of an interval.
        if self.kind == "interval":
            return 2.0
        lx, ly = self.lengths
        return 2.0 * (lx + ly)

    def to_string(self) -> str:
        tag = "interval" if self.kind == "interval" else "rect"
        return tag + ":" + ",".join(repr(b) for b in self.bounds)


def parse_domain(text: str) -> DomainSpec:
    """Parse ``"interval:0,3.14159"`` or ``"rect:0,1,0,1"``."""
    try:
        tag, rest = text.strip().split(":", 1)
        values = [float(v) for v in rest.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse domain {text!r}") from exc
    tag = tag.strip().lower()
    if tag == "interval":
        return DomainSpec("interval", tuple(values))
    if tag in ("rect", "rectangle"):
        return DomainSpec("rectangle", tuple(values))
    raise ConfigError(f"unknown domain kind {tag!r}")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform tensor-product mesh.

    Nodes are numbered lexicographically, x fastest. ``elements`` holds
    segments (1D) or counter-clockwise quads (2D); ``boundary_edges`` holds
    the boundary segments in 2D and is empty in 1D, where the boundary is
    the two endpoint nodes.
    """

    spec: DomainSpec
    shape: tuple[int, ...]
    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    boundary_edges: np.ndarray
    h: float
    spacing: tuple[float, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def element_measures(self) -> np.ndarray:
        x = self.nodes
        if self.dim == 1:
            seg = self.elements
            return x[seg[:, 1], 0] - x[seg[:, 0], 0]
        q = self.elements
        return (x[q[:, 1], 0] - x[q[:, 0], 0]) * (x[q[:, 3], 1] - x[q[:, 0], 1])

    @property
    def coords(self) -> np.ndarray:
        """x-coordinates in 1D, the (n, 2) node array in 2D."""
        return self.nodes[:, 0] if self.dim == 1 else self.nodes


def build_mesh(spec: DomainSpec, resolution: int | Sequence[int]) -> Mesh:
    """Uniform mesh with ``resolution`` cells per axis (an int or one per axis)."""
    if np.isscalar(resolution):
        res = (int(resolution),) * spec.dim
    else:
        res = tuple(int(r) for r in resolution)
    if len(res) != spec.dim:
        raise ConfigError(f"need {spec.dim} resolutions, got {len(res)}")
    if min(res) < 2:
        raise ConfigError("resolution must be >= 2 per axis")

    if spec.dim == 1:
        (nx,) = res
        a, b = spec.bounds
        x = np.linspace(a, b, nx + 1)
        elements = np.column_stack([np.arange(nx), np.arange(1, nx + 1)])
        return Mesh(
            spec=spec,
            shape=res,
            nodes=x[:, None],
            elements=elements,
            boundary_nodes=np.array([0, nx]),
            boundary_edges=np.empty((0, 2), dtype=int),
            h=(b - a) / nx,
            spacing=((b - a) / nx,),
        )

    nx, ny = res
    ax, bx, ay, by = spec.bounds
    xs = np.linspace(ax, bx, nx + 1)
    ys = np.linspace(ay, by, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # shape (ny+1, nx+1), x fastest when raveled
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    elements = np.column_stack([
        idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(),
        idx[1:, 1:].ravel(), idx[1:, :-1].ravel(),
    ])
    bottom = np.column_stack([idx[0, :-1], idx[0, 1:]])
    right = np.column_stack([idx[:-1, -1], idx[1:, -1]])
    top = np.column_stack([idx[-1, 1:], idx[-1, :-1]])
    left = np.column_stack([idx[1:, 0], idx[:-1, 0]])
    edges = np.vstack([bottom, right, top, left])
    hx, hy = (bx - ax) / nx, (by - ay) / ny
    return Mesh(
        spec=spec,
        shape=res,
        nodes=nodes,
        elements=elements,
        boundary_nodes=np.unique(edges),
        boundary_edges=edges,
        h=math.hypot(hx, hy),
        spacing=(hx, hy),
    )


def measures(mesh: Mesh) -> tuple[float, float]:
    """(|Omega|, |dOmega|) with the two-point convention in 1D."""
    return mesh.spec.volume, mesh.spec.surface
