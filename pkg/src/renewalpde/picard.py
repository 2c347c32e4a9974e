"""Freeze-and-solve fixed-point iteration with time-slab continuation.

One application of the operator freezes the nonlocal and pointwise
state arguments of every coefficient at the previous iterate w and
solves the resulting k independent linear problems along
characteristics.  On a short enough slab the operator contracts on a
ball of radius M in the sup-in-time L1-in-space norm, so the iteration
converges; the solver measures the contraction factor instead of
trusting an a-priori slab length, and halves the slab whenever the
measured factor exceeds the configured target, the ball is violated or
the iteration refuses to settle.  Chaining slabs, each restarted from
the previous terminal state with a fresh ball, extends the solution
until either the horizon or a genuine blow-up, which surfaces as a slab
cascade shrinking below the minimum length.

Within a slab the iterate is stored at uniform time knots and
interpolated linearly in t between them; the per-knot linear solves
use trace substeps aligned with the knots, so time quadrature of
coefficients that are linear in the frozen state is exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .characteristics import trace_backward
from .domain import BlowupError, Grid, GridFn, interp_values, l1_norm
from .problem import SystemDef
from .transport import LinearProblem, evaluate


class LocalExistenceError(RuntimeError):
    """Slab halving cascade hit the minimum length: no local solution.

    Carries the bracket (last solved time, last attempted end time);
    for a model that genuinely blows up the singular time lies in it.
    """

    def __init__(self, t_lo: float, t_hi: float, msg: str = "local existence failure"):
        super().__init__(f"{msg}: blow-up bracket [{t_lo:.6g}, {t_hi:.6g}]")
        self.bracket = (t_lo, t_hi)


@dataclass
class PicardConfig:
    slab_length: float = 0.25
    eps_fix: float = 1e-7
    max_iters: int = 40
    theta_max: float = 0.5
    ball_mass: float | None = None
    ball_margin: float = 2.0
    ball_rel_margin: float = 0.5
    dt_target: float = 1.0 / 16.0
    min_knots: int = 8
    substeps_per_interval: int = 4
    min_slab_factor: float = 1e-6
    max_slabs: int = 2000
    threads: int = 1

    def __post_init__(self):
        if self.eps_fix <= 0:
            raise ValueError("contraction tolerance must be positive")
        if not 0.0 < self.theta_max < 1.0:
            raise ValueError("target contraction factor must lie in (0, 1)")
        if self.slab_length <= 0:
            raise ValueError("slab length must be positive")


@dataclass
class SlabDiagnostics:
    t0: float
    t1: float
    iterations: int
    distances: list[float]
    ratios: list[float]
    theta: float
    ball: float
    halvings: int
    norm_X: float


@dataclass
class Trajectory:
    """Knot times with one grid state per knot, plus per-slab diagnostics."""

    times: np.ndarray
    states: list[GridFn]
    diagnostics: list[SlabDiagnostics] = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.states) != len(self.times):
            raise ValueError("one state per time knot required")

    @property
    def grid(self) -> Grid:
        return self.states[0].grid

    @property
    def k(self) -> int:
        return self.states[0].k

    def state_at(self, t: float) -> GridFn:
        ts = self.times
        if t <= ts[0]:
            return self.states[0]
        if t >= ts[-1]:
            return self.states[-1]
        j = int(np.searchsorted(ts, t, side="right")) - 1
        j = min(j, len(ts) - 2)
        lam = (t - ts[j]) / (ts[j + 1] - ts[j])
        return GridFn(self.grid, (1 - lam) * self.states[j].values + lam * self.states[j + 1].values)

    def component_masses(self) -> np.ndarray:
        """Per-knot, per-component L1 masses, shape (n_knots, k)."""
        vol = self.grid.cell_volume
        return np.array([np.sum(np.abs(s.values), axis=0) * vol for s in self.states])

    def component_sups(self) -> np.ndarray:
        return np.array([np.max(np.abs(s.values), axis=0) for s in self.states])


def norm_X(states: Sequence[GridFn]) -> float:
    """sum_h sup_t ||component h||_L1 - the contraction norm."""
    vol = states[0].grid.cell_volume
    per = np.array([np.sum(np.abs(s.values), axis=0) * vol for s in states])
    return float(np.sum(np.max(per, axis=0)))


def dist_X(a: Sequence[GridFn], b: Sequence[GridFn]) -> float:
    vol = a[0].grid.cell_volume
    per = np.array([np.sum(np.abs(x.values - y.values), axis=0) * vol for x, y in zip(a, b)])
    return float(np.sum(np.max(per, axis=0)))


class FrozenCoefficients:
    """Coefficient fields of one component with the state frozen at w.

    Nonlocal integrals are sampled once per knot (on the grid when they
    depend on the evaluation point) and interpolated linearly in time
    and multilinearly in space; the outer maps P/Q/Ub are then applied
    at the exact query points.  Time arguments may be per-point vectors.
    """

    def __init__(self, sys: SystemDef, h: int, times: np.ndarray, states: Sequence[GridFn]):
        self.sys = sys
        self.h = h
        self.times = np.asarray(times, dtype=float)
        self.states = list(states)
        self.grid = states[0].grid
        self.K = len(times) - 1
        self.t0 = float(times[0])
        self._eta_p = self._freeze(sys.Kp[h], boundary=False)
        self._eta_q = self._freeze(sys.Kq[h], boundary=False)
        self._eta_u = self._freeze(sys.Ku[h], boundary=True)

    def _freeze(self, kernel, boundary: bool):
        if kernel is None:
            return ("zero", None, None)
        knots = range(self.K + 1)
        if kernel.x_independent:
            vals = np.array([kernel.integrate(self.times[j], np.zeros((1, self.grid.dim)),
                                              self.states[j])[0, 0] for j in knots])
            return ("const", vals, None)
        if boundary:
            if self.sys.domain.m == 0:
                return ("zero", None, None)
            if self.sys.domain.m > 1:
                # exits can land on any face; integrate on demand
                return ("direct", kernel, None)
            fg = self.grid.face_grid(0)
            if fg.points.shape[0] == 1:
                vals = np.array([kernel.integrate(self.times[j], fg.points,
                                                  self.states[j])[0, 0] for j in knots])
                return ("const", vals, None)
            vals = np.stack([kernel.integrate(self.times[j], fg.points, self.states[j])[:, 0]
                             for j in knots])
            return ("face", vals, fg)
        vals = np.stack([kernel.integrate(self.times[j], self.grid.points, self.states[j])[:, 0]
                         for j in knots])
        return ("grid", vals, None)

    def _bracket(self, t):
        """Knot interval and interpolation weight; knots may be non-uniform."""
        t_arr = np.asarray(t, dtype=float)
        if self.K == 0:
            z = np.zeros_like(t_arr, dtype=int)
            return z, np.zeros_like(t_arr)
        j = np.clip(np.searchsorted(self.times, t_arr, side="right") - 1, 0, self.K - 1)
        span = self.times[j + 1] - self.times[j]
        lam = np.clip((t_arr - self.times[j]) / span, 0.0, 1.0)
        return j, lam

    def _eval_knot_field(self, store, j: int, pts: np.ndarray) -> np.ndarray:
        kind, vals, fg = store
        if kind == "const":
            return np.full(pts.shape[0], vals[j])
        if kind == "grid":
            return interp_values(self.grid, vals[j], pts)
        return _face_interp(fg, vals[j], pts)

    def _combine(self, store, t, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        kind = store[0]
        if kind == "zero":
            return np.zeros((pts.shape[0], 1))
        if kind == "direct":
            # blend per-knot integrals: the integral is linear in the
            # state, so this equals integrating the blended state
            kernel = store[1]
            j, lam = self._bracket(t)
            j = np.broadcast_to(np.atleast_1d(j), (pts.shape[0],))
            lam = np.broadcast_to(np.atleast_1d(lam), (pts.shape[0],))
            out = np.empty((pts.shape[0], 1))
            for jv in np.unique(j):
                mask = j == jv
                j1 = min(int(jv) + 1, self.K)
                a = kernel.integrate(float(self.times[int(jv)]), pts[mask], self.states[int(jv)])
                b = kernel.integrate(float(self.times[j1]), pts[mask], self.states[j1])
                out[mask] = (1.0 - lam[mask])[:, None] * a + lam[mask][:, None] * b
            return out
        j, lam = self._bracket(t)
        if np.ndim(j) == 0:
            j = int(j)
            a = self._eval_knot_field(store, j, pts)
            b = self._eval_knot_field(store, min(j + 1, self.K), pts)
            out = (1.0 - lam) * a + lam * b
            return out[:, None]
        out = np.empty(pts.shape[0])
        for jv in np.unique(j):
            mask = j == jv
            a = self._eval_knot_field(store, int(jv), pts[mask])
            b = self._eval_knot_field(store, min(int(jv) + 1, self.K), pts[mask])
            out[mask] = (1.0 - lam[mask]) * a + lam[mask] * b
        return out[:, None]

    def w_at(self, t, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        j, lam = self._bracket(t)
        if np.ndim(j) == 0:
            j = int(j)
            a = interp_values(self.grid, self.states[j].values, pts)
            b = interp_values(self.grid, self.states[min(j + 1, self.K)].values, pts)
            return (1.0 - lam) * a + lam * b
        out = np.empty((pts.shape[0], self.states[0].k))
        for jv in np.unique(j):
            mask = j == jv
            a = interp_values(self.grid, self.states[int(jv)].values, pts[mask])
            b = interp_values(self.grid, self.states[min(int(jv) + 1, self.K)].values, pts[mask])
            out[mask] = (1.0 - lam[mask])[:, None] * a + lam[mask][:, None] * b
        return out

    def p(self, t, pts):
        pts = np.atleast_2d(pts)
        eta = self._combine(self._eta_p, t, pts)
        return np.asarray(self.sys.P[self.h](t, pts, eta), dtype=float)

    def q(self, t, pts):
        pts = np.atleast_2d(pts)
        eta = self._combine(self._eta_q, t, pts)
        w_pt = self.w_at(t, pts)
        return np.asarray(self.sys.Q[self.h](t, pts, w_pt, eta), dtype=float)

    def ub(self, t, pts):
        pts = np.atleast_2d(pts)
        eta = self._combine(self._eta_u, t, pts)
        return np.asarray(self.sys.Ub[self.h](t, pts, eta), dtype=float)

    def linear_problem(self) -> LinearProblem:
        u0h = GridFn(self.grid, self.states[0].values[:, self.h])
        return LinearProblem(self.sys.velocities[self.h], self.p, self.q, self.ub, u0h)


def _face_interp(fg, vals: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Nearest/multilinear interpolation of face-sampled data.

    The face lattice is the tensor grid of all non-face axes; queries
    drop the face coordinate.  Kept simple: multilinear via the parent
    grid machinery on a synthetic 1-row embedding is not worth it, so
    this interpolates per axis with np.interp for the (single-axis)
    shapes shipped models use, and falls back to nearest neighbour.
    """
    rest = pts[:, 1:]
    if rest.shape[1] == 1:
        # face is one-dimensional: plain linear interpolation
        face_coords = fg.points[:, 1]
        return np.interp(rest[:, 0], face_coords, vals)
    d2 = ((fg.points[None, :, 1:] - rest[:, None, :]) ** 2).sum(axis=2)
    return vals[np.argmin(d2, axis=1)]


def apply_T(sys: SystemDef, w: Trajectory, cfg: PicardConfig) -> Trajectory:
    """One freeze-and-solve sweep: returns the slab trajectory u = T w."""
    grid = w.grid
    times = w.times
    K = len(times) - 1
    t0 = float(times[0])
    frozen = [FrozenCoefficients(sys, h, times, w.states) for h in range(sys.k)]
    lps = [fr.linear_problem() for fr in frozen]
    out_states = [w.states[0]]
    for j in range(1, K + 1):
        tj = float(times[j])
        substeps = j * cfg.substeps_per_interval
        batches = {}
        for h in range(sys.k):
            key = id(sys.velocities[h])
            if key not in batches:
                batches[key] = trace_backward(sys.velocities[h], tj, grid.points,
                                              substeps, grid.domain, t_floor=t0)

        def solve_component(h: int) -> np.ndarray:
            return evaluate(lps[h], tj, grid, t0=t0,
                            batch=batches[id(sys.velocities[h])]).values[:, 0]

        cols = np.empty((grid.n_nodes, sys.k))
        if cfg.threads > 1 and sys.k > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                for h, col in enumerate(pool.map(solve_component, range(sys.k))):
                    cols[:, h] = col
        else:
            for h in range(sys.k):
                cols[:, h] = solve_component(h)
        out_states.append(GridFn(grid, cols))
    return Trajectory(times.copy(), out_states)


def _effective_ball(cfg: PicardConfig, base_mass: float) -> float:
    if cfg.ball_mass is not None:
        return cfg.ball_mass
    return base_mass + max(cfg.ball_margin, cfg.ball_rel_margin * base_mass)


def solve_slab(sys: SystemDef, u_init: GridFn, t0: float, cfg: PicardConfig,
               h_init: float | None = None) -> Trajectory:
    """Picard iteration on one slab, halving its length until it converges."""
    base_mass = l1_norm(u_init)
    M = _effective_ball(cfg, base_mass)
    if base_mass + 1.0 >= M:
        raise ValueError("ball radius must exceed the slab's initial mass + 1")
    h = h_init if h_init is not None else cfg.slab_length
    halvings = 0
    while True:
        if h < cfg.min_slab_factor * cfg.slab_length:
            raise LocalExistenceError(t0, t0 + 2 * h)
        K = max(cfg.min_knots, int(math.ceil(h / cfg.dt_target)))
        times = t0 + np.linspace(0.0, h, K + 1)
        w = Trajectory(times, [u_init] * (K + 1))
        distances: list[float] = []
        ratios: list[float] = []
        for _ in range(cfg.max_iters):
            try:
                u = apply_T(sys, w, cfg)
            except BlowupError:
                break
            d = dist_X(u.states, w.states)
            if not np.isfinite(d) or norm_X(u.states) > M:
                break
            distances.append(d)
            if len(distances) >= 2:
                r = d / max(distances[-2], 1e-300)
                ratios.append(r)
                if r > cfg.theta_max:
                    break
            w = u
            if d <= cfg.eps_fix:
                diag = SlabDiagnostics(t0=t0, t1=t0 + h, iterations=len(distances),
                                       distances=distances, ratios=ratios,
                                       theta=max(ratios) if ratios else 0.0,
                                       ball=M, halvings=halvings, norm_X=norm_X(u.states))
                u.diagnostics = [diag]
                return u
        h *= 0.5
        halvings += 1


def solve(sys: SystemDef, grid: Grid, horizon: float, cfg: PicardConfig,
          u_init: GridFn | None = None) -> Trajectory:
    """Chain converged slabs from 0 to the horizon.

    Each slab restarts from the previous terminal state with a fresh
    ball sized off the current mass; a genuine blow-up surfaces as a
    :class:`LocalExistenceError` whose bracket localizes the singular
    time.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    u = u_init if u_init is not None else sys.initial_state(grid)
    if u.k != sys.k:
        raise ValueError("initial state has wrong component count")
    times = [0.0]
    states = [u]
    diags: list[SlabDiagnostics] = []
    t = 0.0
    h_next = cfg.slab_length
    while t < horizon - 1e-12:
        if len(diags) >= cfg.max_slabs:
            raise LocalExistenceError(t, horizon, "slab budget exhausted before horizon")
        h_try = min(h_next, horizon - t)
        slab = solve_slab(sys, u, t, cfg, h_init=h_try)
        times.extend(slab.times[1:].tolist())
        states.extend(slab.states[1:])
        diags.extend(slab.diagnostics)
        u = slab.states[-1]
        t = float(slab.times[-1])
        h_used = diags[-1].t1 - diags[-1].t0
        h_next = min(cfg.slab_length, 2.0 * h_used)
    return Trajectory(np.array(times), states, diags)


@dataclass
class LipschitzProbe:
    ratio: float
    times: np.ndarray
    distances: np.ndarray


def lipschitz_probe(sys: SystemDef, grid: Grid, u0_a: GridFn, u0_b: GridFn,
                    horizon: float, cfg: PicardConfig, n_curve: int = 17) -> LipschitzProbe:
    """Measured L1 amplification of an initial-datum perturbation."""
    tr_a = solve(sys, grid, horizon, cfg, u_init=u0_a)
    tr_b = solve(sys, grid, horizon, cfg, u_init=u0_b)
    ts = np.linspace(0.0, horizon, n_curve)
    curve = np.array([l1_norm(tr_a.state_at(s) - tr_b.state_at(s)) for s in ts])
    d0 = l1_norm(u0_a - u0_b)
    ratio = float(curve[-1] / d0) if d0 > 0 else 0.0
    return LipschitzProbe(ratio, ts, curve)
