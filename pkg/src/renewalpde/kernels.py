"""Nonlocal kernels: quadrature-backed evaluation of ``int K(t,x,x') w(x') dx'``.

Every coefficient map in kernel form reads the unknown through such an
integral.  Two concrete layouts cover all shipped models:

* :class:`WeightedMassKernel` - ``K(t, x, x') = g(x') e_c``: the integral
  is a weighted mass of one component and does not depend on the
  evaluation point.  This is the fast path (O(N) per state).
* :class:`ScalarComponentKernel` - ``K(t, x, x') = g(t, x, x') e_c``:
  dense (P x N) evaluation, chunked to bound memory.

Both expose ``integrate(t, pts, f) -> (P, k_out)`` plus a declared sup
bound used by the quantitative estimates.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .domain import BlowupError, GridFn


class WeightedMassKernel:
    """Kernel ``g(x')`` applied to a single component; x-independent integral."""

    x_independent = True

    def __init__(self, weight: Callable[[np.ndarray], np.ndarray] | float, comp: int = 0,
                 bound: float | None = None):
        self.weight = weight
        self.comp = comp
        if bound is None:
            if not np.isscalar(weight):
                raise ValueError("non-constant weight needs an explicit sup bound")
            bound = abs(float(weight))
        self.bound = float(bound)
        self.k_out = 1

    def _node_weights(self, grid) -> np.ndarray:
        if np.isscalar(self.weight):
            return np.full(grid.n_nodes, float(self.weight))
        return np.asarray(self.weight(grid.points), dtype=float)

    def mass(self, f: GridFn) -> float:
        w = self._node_weights(f.grid)
        return float(np.sum(w * f.values[:, self.comp]) * f.grid.cell_volume)

    def integrate(self, t: float, pts: np.ndarray, f: GridFn) -> np.ndarray:
        val = self.mass(f)
        return np.full((np.atleast_2d(pts).shape[0], 1), val)


class ScalarComponentKernel:
    """Scalar kernel ``g(t, x, x')`` applied to one component of w.

    ``fn`` must broadcast: it is called with x of shape (P, 1, d) and
    x' of shape (1, N, d) and must return (P, N).
    """

    x_independent = False

    def __init__(self, fn: Callable, comp: int = 0, bound: float = 1.0, chunk: int = 512):
        self.fn = fn
        self.comp = comp
        self.bound = float(bound)
        self.chunk = chunk
        self.k_out = 1

    def integrate(self, t: float, pts: np.ndarray, f: GridFn) -> np.ndarray:
        pts = np.atleast_2d(pts)
        nodes = f.grid.points
        fw = f.values[:, self.comp] * f.grid.cell_volume
        out = np.empty((pts.shape[0], 1))
        for lo in range(0, pts.shape[0], self.chunk):
            hi = min(lo + self.chunk, pts.shape[0])
            g = np.asarray(self.fn(t, pts[lo:hi, None, :], nodes[None, :, :]), dtype=float)
            out[lo:hi, 0] = g @ fw
        return out


Kernel = WeightedMassKernel | ScalarComponentKernel


def kernel_eta(kernel: Kernel | None, t: float, pts: np.ndarray, f: GridFn) -> np.ndarray:
    """Nonlocal argument at the given points; zeros when there is no kernel."""
    pts = np.atleast_2d(pts)
    if kernel is None:
        return np.zeros((pts.shape[0], 1))
    eta = kernel.integrate(t, pts, f)
    if not np.all(np.isfinite(eta)):
        raise BlowupError("kernel integral is non-finite")
    return eta
