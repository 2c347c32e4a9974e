"""Truncated computational domains, tensor grids and L1/Linf machinery.

The state space is a product of ``m`` half-lines (each truncated to
``[0, L]``, with the genuine inflow boundary at coordinate 0) and ``n``
full lines (truncated to ``[-L, L]``).  Axes are ordered half-line axes
first.  Truncation faces are artificial: characteristics crossing them
are treated as carrying value 0 inward, so runs must keep the
interesting mass away from them.

Grids are uniform and cell-centered; quadrature is the midpoint rule,
i.e. every node carries the weight ``prod(dx)``.  That is second order
on smooth integrands and first order on indicators, which matches the
L1 setting where data may be discontinuous.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class CorruptStateError(RuntimeError):
    """Raised when a grid function contains non-finite values."""


class BlowupError(RuntimeError):
    """Raised when coefficients or solution values become non-finite."""


@dataclass(frozen=True)
class Domain:
    """Truncated box ``prod_i [0, half[i]] x prod_j [-full[j], full[j]]``.

    A full-line axis may instead be truncated to an explicit interval
    via ``full_bounds`` (e.g. to pad a one-sided support); the inflow
    boundary semantics of the half-line axes are unaffected.
    """

    half_lengths: tuple[float, ...] = ()
    full_lengths: tuple[float, ...] = ()
    full_bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "half_lengths", tuple(float(L) for L in self.half_lengths))
        if self.full_bounds is not None:
            fb = tuple((float(lo), float(hi)) for lo, hi in self.full_bounds)
            object.__setattr__(self, "full_bounds", fb)
            object.__setattr__(self, "full_lengths",
                               tuple(max(abs(lo), abs(hi)) for lo, hi in fb))
        else:
            object.__setattr__(self, "full_lengths", tuple(float(L) for L in self.full_lengths))
        if self.m + self.n < 1:
            raise ValueError("domain needs at least one axis")
        if any(L <= 0 for L in self.half_lengths):
            raise ValueError("truncation lengths must be positive")
        if any(hi <= lo for lo, hi in self.bounds()):
            raise ValueError("empty axis interval")

    @property
    def m(self) -> int:
        return len(self.half_lengths)

    @property
    def n(self) -> int:
        return len(self.full_lengths)

    @property
    def dim(self) -> int:
        return self.m + self.n

    def bounds(self) -> list[tuple[float, float]]:
        """Per-axis (lo, hi) of the truncated box."""
        half = [(0.0, L) for L in self.half_lengths]
        if self.full_bounds is not None:
            full = list(self.full_bounds)
        else:
            full = [(-L, L) for L in self.full_lengths]
        return half + full

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the truncated box (closed)."""
        pts = np.atleast_2d(pts)
        ok = np.ones(pts.shape[0], dtype=bool)
        for ax, (lo, hi) in enumerate(self.bounds()):
            ok &= (pts[:, ax] >= lo) & (pts[:, ax] <= hi)
        return ok


@dataclass(frozen=True)
class Grid:
    """Cell-centered uniform tensor grid on a :class:`Domain`.

    ``shape[i]`` is the number of cells along axis ``i``; node
    coordinates are the cell midpoints, strictly inside the box.
    """

    domain: Domain
    shape: tuple[int, ...]
    axes: tuple[np.ndarray, ...] = field(init=False, repr=False)
    dx: tuple[float, ...] = field(init=False)
    points: np.ndarray = field(init=False, repr=False)
    n_nodes: int = field(init=False)
    cell_volume: float = field(init=False)

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) != self.domain.dim:
            raise ValueError("grid shape must match domain dimension")
        if any(s < 1 for s in shape):
            raise ValueError("need at least one cell per axis")
        axes, dx = [], []
        for (lo, hi), s in zip(self.domain.bounds(), shape):
            h = (hi - lo) / s
            axes.append(lo + h * (np.arange(s) + 0.5))
            dx.append(h)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        object.__setattr__(self, "axes", tuple(axes))
        object.__setattr__(self, "dx", tuple(dx))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "n_nodes", pts.shape[0])
        object.__setattr__(self, "cell_volume", float(np.prod(dx)))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def min_dx(self) -> float:
        return min(self.dx)

    def face_grid(self, axis: int) -> "FaceGrid":
        """Quadrature lattice on the inflow face ``x[axis] = 0``."""
        if axis >= self.domain.m:
            raise ValueError("only half-line axes carry an inflow face")
        return FaceGrid(self, axis)


class FaceGrid:
    """Nodes and weights on an inflow face of the box.

    The face of a d-dimensional box is (d-1)-dimensional; for a pure
    age axis (d=1) it degenerates to the single point 0 with measure 1.
    Face points are returned as full d-dimensional coordinates with the
    face coordinate pinned to 0, which is what every boundary callback
    expects.
    """

    def __init__(self, grid: Grid, axis: int):
        self.grid = grid
        self.axis = axis
        other = [grid.axes[i] for i in range(grid.dim) if i != axis]
        if other:
            mesh = np.meshgrid(*other, indexing="ij")
            flat = [m.ravel() for m in mesh]
            npts = flat[0].size
            pts = np.zeros((npts, grid.dim))
            j = 0
            for i in range(grid.dim):
                if i == axis:
                    continue
                pts[:, i] = flat[j]
                j += 1
            self.points = pts
            self.weight = float(np.prod([grid.dx[i] for i in range(grid.dim) if i != axis]))
        else:
            self.points = np.zeros((1, grid.dim))
            self.weight = 1.0

    @property
    def measure(self) -> float:
        return self.weight * self.points.shape[0]


@dataclass(frozen=True)
class GridFn:
    """Vector-valued grid function: one R^k value per node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n_nodes:
            raise ValueError("value count does not match grid")
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def component(self, h: int) -> np.ndarray:
        return self.values[:, h]

    def __add__(self, other: "GridFn") -> "GridFn":
        return GridFn(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFn") -> "GridFn":
        return GridFn(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFn":
        return GridFn(self.grid, self.values * c)

    __rmul__ = __mul__

    @staticmethod
    def zeros(grid: Grid, k: int = 1) -> "GridFn":
        return GridFn(grid, np.zeros((grid.n_nodes, k)))

    @staticmethod
    def from_callback(grid: Grid, fn: Callable[[np.ndarray], np.ndarray], k: int = 1) -> "GridFn":
        """Sample ``fn(points) -> (N,) or (N, k)`` at the grid nodes."""
        vals = np.asarray(fn(grid.points), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (grid.n_nodes, k):
            raise ValueError(f"callback returned shape {vals.shape}, expected ({grid.n_nodes}, {k})")
        return GridFn(grid, vals)


def _ensure_finite(a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise CorruptStateError("corrupt state: non-finite value in grid function")


def l1_norm(f: GridFn) -> float:
    """Discrete L1(X; R^k) norm: sum over components and nodes of |f| dx."""
    _ensure_finite(f.values)
    return float(np.sum(np.abs(f.values)) * f.grid.cell_volume)


def linf_norm(f: GridFn) -> float:
    """Discrete system sup norm: max over nodes of sum_h |f^h|."""
    _ensure_finite(f.values)
    return float(np.max(np.sum(np.abs(f.values), axis=1)))


def integrate_kernel(kernel, f: GridFn, at: np.ndarray, t: float = 0.0):
    """Midpoint quadrature of ``int K(t, at, x') f(x') dx'``.

    ``kernel(t, x, xs)`` receives the evaluation point ``x`` of shape
    (d,) and all grid nodes ``xs`` of shape (N, d).  It may return

    * shape ``(N,)`` - a scalar kernel; requires ``f.k == 1``;
    * shape ``(N, k)`` - one row, contracted against f's components;
    * shape ``(N, k_out, k)`` - the general matrix kernel.

    Returns a float when the output dimension is 1, else an array.
    """
    at = np.asarray(at, dtype=float).reshape(-1)
    w = np.asarray(kernel(t, at, f.grid.points), dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("kernel returned non-finite values")
    vol = f.grid.cell_volume
    if w.ndim == 1:
        if f.k != 1:
            raise ValueError("scalar kernel needs a scalar grid function")
        out = np.array([np.sum(w * f.values[:, 0]) * vol])
    elif w.ndim == 2:
        if w.shape != (f.grid.n_nodes, f.k):
            raise ValueError("kernel dimension mismatch")
        out = np.array([np.sum(w * f.values) * vol])
    elif w.ndim == 3:
        if w.shape[0] != f.grid.n_nodes or w.shape[2] != f.k:
            raise ValueError("kernel dimension mismatch")
        out = np.einsum("noh,nh->o", w, f.values) * vol
    else:
        raise ValueError("kernel dimension mismatch")
    return float(out[0]) if out.size == 1 else out


def interp_values(grid: Grid, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of node values at arbitrary points.

    Inside the box the coordinates are clamped to the node hull, which
    extends the outermost cells as constants over the half-cell margin.
    Points outside the truncated box return 0 (truncation carries no
    data in).  ``values`` is (N,) or (N, k); the result matches.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    vals = np.asarray(values, dtype=float)
    scalar = vals.ndim == 1
    if scalar:
        vals = vals[:, None]
    d = grid.dim
    inside = grid.domain.contains(pts)

    idx0 = []
    frac = []
    for ax in range(d):
        centers = grid.axes[ax]
        nc = len(centers)
        if nc == 1:
            idx0.append(np.zeros(pts.shape[0], dtype=int))
            frac.append(np.zeros(pts.shape[0]))
            continue
        u = (pts[:, ax] - centers[0]) / grid.dx[ax]
        u = np.clip(u, 0.0, nc - 1.0)
        i0 = np.minimum(u.astype(int), nc - 2)
        idx0.append(i0)
        frac.append(u - i0)

    strides = np.array([int(np.prod(grid.shape[ax + 1:], dtype=np.int64)) for ax in range(d)])
    out = np.zeros((pts.shape[0], vals.shape[1]))
    for corner in itertools.product((0, 1), repeat=d):
        w = np.ones(pts.shape[0])
        flat = np.zeros(pts.shape[0], dtype=np.int64)
        for ax, c in enumerate(corner):
            w = w * (frac[ax] if c else 1.0 - frac[ax])
            flat = flat + (idx0[ax] + c) * strides[ax]
        out += w[:, None] * vals[flat]
    out[~inside] = 0.0
    return out[:, 0] if scalar else out


def interp_gridfn(f: GridFn, pts: np.ndarray) -> np.ndarray:
    return interp_values(f.grid, f.values, pts)


def truncation_mass_report(f: GridFn, cells: int = 5) -> dict[str, float]:
    """Fraction of |f| mass within a few cells of each truncation face.

    Large values mean the box is too small for the run: characteristics
    crossing an artificial face silently carry value 0 back in, so mass
    parked next to one is about to be lost.  Inflow faces (coordinate 0
    of half-line axes) are genuine boundaries and are not reported.
    """
    grid = f.grid
    total = float(np.sum(np.abs(f.values))) + 1e-300
    report = {}
    bounds = grid.domain.bounds()
    for ax in range(grid.dim):
        lo, hi = bounds[ax]
        margin = cells * grid.dx[ax]
        x = grid.points[:, ax]
        near_hi = x >= hi - margin
        report[f"axis{ax}-upper"] = float(np.sum(np.abs(f.values[near_hi]))) / total
        if ax >= grid.domain.m:
            near_lo = x <= lo + margin
            report[f"axis{ax}-lower"] = float(np.sum(np.abs(f.values[near_lo]))) / total
    return report
