"""Quantitative certificates for computed solutions.

Each certificate evaluates one side of a proved estimate from data the
user already has (coefficients, data norms, hypothesis constants) and
compares the solution against it: L1 and Linf a-priori bounds of the
frozen linear problem, the five-term linear stability estimate, the
Gronwall mass bound behind global existence, the predicted contraction
factor of the fixed-point operator, and the one-sided entropy
inequality that characterizes the solution class.

Boundary flux terms integrate |ub| v_i over the whole (face x time)
rectangle rather than the exact exit-map image, which can only enlarge
the bound: certificates stay valid, merely conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import Grid, GridFn, l1_norm
from .picard import FrozenCoefficients, Trajectory
from .problem import HypothesisConstants, SystemDef
from .transport import LinearProblem, evaluate


@dataclass
class Certificate:
    name: str
    bound: float
    measured: float
    passed: bool
    margin: float
    params: dict = field(default_factory=dict)

    def format(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: measured {self.measured:.6g}  bound {self.bound:.6g}  "
                f"margin {self.margin:+.3%}  {status}")


def _certificate(name: str, bound: float, measured: float, tol: float, **params) -> Certificate:
    ok = measured <= bound * (1.0 + tol) + 1e-14
    margin = (bound - measured) / max(abs(bound), 1e-300)
    return Certificate(name, float(bound), float(measured), bool(ok), float(margin), params)


def _time_grid(t: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    ts = np.linspace(0.0, t, n)
    w = np.full(n, t / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return ts, w


def _space_l1(grid: Grid, vals: np.ndarray) -> float:
    return float(np.sum(np.abs(vals)) * grid.cell_volume)


def _boundary_flux(lp: LinearProblem, grid: Grid, t: float, n_time: int) -> float:
    """Quadrature of |ub| v_i over every inflow face times [0, t]."""
    ts, wts = _time_grid(t, n_time)
    total = 0.0
    for ax in range(grid.domain.m):
        fg = grid.face_grid(ax)
        for tau, wt in zip(ts, wts):
            ub = np.abs(np.asarray(lp.ub(tau, fg.points)))
            vi = np.atleast_2d(lp.velocity(tau, fg.points))[:, ax]
            total += wt * float(np.sum(ub * vi)) * fg.weight
    return total


def apriori_l1_certificate(lp: LinearProblem, grid: Grid, t: float,
                           u_t: GridFn | None = None, substeps: int | None = None,
                           n_time: int = 33, tol: float = 0.05) -> Certificate:
    """L1 bound: (||q||_L1 + ||u0||_L1 + boundary flux) * exp(||p||_inf t)."""
    ts, wts = _time_grid(t, n_time)
    qnorm = 0.0
    pinf = 0.0
    for tau, wt in zip(ts, wts):
        qnorm += wt * _space_l1(grid, lp.q(tau, grid.points))
        pinf = max(pinf, float(np.max(np.abs(lp.p(tau, grid.points)))))
    flux = _boundary_flux(lp, grid, t, n_time)
    bound = (qnorm + l1_norm(lp.u0) + flux) * math.exp(pinf * t)
    if u_t is None:
        u_t = evaluate(lp, t, grid, substeps=substeps)
    measured = l1_norm(u_t)
    return _certificate("apriori-l1", bound, measured, tol,
                        q_l1=qnorm, u0_l1=l1_norm(lp.u0), flux=flux, p_sup=pinf, t=t)


def apriori_linf_certificate(lp: LinearProblem, grid: Grid, t: float,
                             u_t: GridFn | None = None, substeps: int | None = None,
                             n_time: int = 33, tol: float = 0.05) -> Certificate:
    """Sup bound: (||u0||_inf + ||ub||_inf + ||q||_L1(sup)) * exp(int ||p|| + ||div v||)."""
    ts, wts = _time_grid(t, n_time)
    expo = 0.0
    q_l1_sup = 0.0
    ub_sup = 0.0
    for tau, wt in zip(ts, wts):
        psup = float(np.max(np.abs(lp.p(tau, grid.points))))
        dsup = float(np.max(np.abs(lp.velocity.div(tau, grid.points))))
        expo += wt * (psup + dsup)
        q_l1_sup += wt * float(np.max(np.abs(lp.q(tau, grid.points))))
        for ax in range(grid.domain.m):
            fg = grid.face_grid(ax)
            ub_sup = max(ub_sup, float(np.max(np.abs(lp.ub(tau, fg.points)), initial=0.0)))
    u0_sup = float(np.max(np.abs(lp.u0.values)))
    bound = (u0_sup + ub_sup + q_l1_sup) * math.exp(expo)
    if u_t is None:
        u_t = evaluate(lp, t, grid, substeps=substeps)
    measured = float(np.max(np.abs(u_t.values)))
    return _certificate("apriori-linf", bound, measured, tol, t=t)


def linear_stability_certificate(lp1: LinearProblem, lp2: LinearProblem, grid: Grid,
                                 t: float, substeps: int | None = None,
                                 n_time: int = 33, tol: float = 0.05) -> Certificate:
    """Five-term L1 stability bound for two problems sharing a velocity."""
    if lp1.velocity is not lp2.velocity:
        raise ValueError("stability estimate requires a common velocity")
    ts, wts = _time_grid(t, n_time)
    pinf1 = pinf2 = 0.0
    dq = q2n = dp = 0.0
    for tau, wt in zip(ts, wts):
        p1v = lp1.p(tau, grid.points)
        p2v = lp2.p(tau, grid.points)
        pinf1 = max(pinf1, float(np.max(np.abs(p1v))))
        pinf2 = max(pinf2, float(np.max(np.abs(p2v))))
        dp += wt * float(np.max(np.abs(p1v - p2v)))
        q1v = lp1.q(tau, grid.points)
        q2v = lp2.q(tau, grid.points)
        dq += wt * _space_l1(grid, q1v - q2v)
        q2n += wt * _space_l1(grid, q2v)
    dub = 0.0
    ub2 = 0.0
    for ax in range(grid.domain.m):
        fg = grid.face_grid(ax)
        for tau, wt in zip(ts, wts):
            b1 = np.asarray(lp1.ub(tau, fg.points))
            b2 = np.asarray(lp2.ub(tau, fg.points))
            dub += wt * float(np.sum(np.abs(b1 - b2))) * fg.weight
            ub2 += wt * float(np.sum(np.abs(b2))) * fg.weight
    grow = math.exp(t * max(pinf1, pinf2))
    vsup = lp1.velocity.sup
    bound = grow * (l1_norm(lp1.u0 - lp2.u0)
                    + vsup * dub
                    + dq
                    + (l1_norm(lp1.u0) + vsup * ub2) * dp
                    + q2n * dp)
    u1 = evaluate(lp1, t, grid, substeps=substeps)
    u2 = evaluate(lp2, t, grid, substeps=substeps)
    measured = l1_norm(u1 - u2)
    return _certificate("linear-stability", bound, measured, tol,
                        du0=l1_norm(lp1.u0 - lp2.u0), dq=dq, dub=dub, dp=dp, t=t)


def gronwall_certificate(sys: SystemDef, hc: HypothesisConstants, traj: Trajectory,
                         tol: float = 0.05, n_fine: int = 2000) -> Certificate:
    """Mass inequality m' <= (||C1|| + k ||B||_1) + (||C2|| + ||B||_1) m.

    Integrates the scalar comparison ODE from the initial mass and
    requires the trajectory's total mass to stay below it at every knot.
    """
    grid = traj.grid
    b1 = hc.b_l1(grid)
    t_end = float(traj.times[-1])
    masses = traj.component_masses().sum(axis=1)
    if t_end <= 0:
        return _certificate("gronwall-mass", masses[0], masses[0], tol)
    ts = np.linspace(0.0, t_end, n_fine + 1)
    dt = t_end / n_fine
    bound_vals = np.empty(n_fine + 1)
    m = masses[0]
    bound_vals[0] = m
    a_sup = hc.c1_l1(0.0, grid) + sys.k * b1
    b_sup = hc.c2_at(0.0) + b1
    for i in range(n_fine):
        a_sup = max(a_sup, hc.c1_l1(ts[i], grid) + sys.k * b1)
        b_sup = max(b_sup, hc.c2_at(ts[i]) + b1)

        def rhs(y):
            return a_sup + b_sup * y

        k1 = rhs(m)
        k2 = rhs(m + dt / 2 * k1)
        k3 = rhs(m + dt / 2 * k2)
        k4 = rhs(m + dt * k3)
        m = m + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        bound_vals[i + 1] = m
    bounds_at_knots = np.interp(traj.times, ts, bound_vals)
    ratios = masses / np.maximum(bounds_at_knots, 1e-300)
    worst = int(np.argmax(ratios))
    return _certificate("gronwall-mass", float(bounds_at_knots[worst]),
                        float(masses[worst]), tol, t_worst=float(traj.times[worst]))


def contraction_prediction(sys: SystemDef, hc: HypothesisConstants, M: float,
                           T: float, grid: Grid) -> float:
    """Lipschitz constant of the freeze-and-solve operator on the ball.

    Groups the three coefficient-difference estimates (boundary, source,
    multiplicative), each linear in T, under the common growth factor
    exp((P1 + P2 M) T); the factor k accounts for summing the
    per-component estimates in the sum-of-sups norm.
    """
    b1 = hc.b_l1(grid)
    q2_1 = hc.q2_l1(grid)
    vsup = max(v.sup for v in sys.velocities)
    ub_l1_bound = b1 * (M + 1.0) * T
    q_l1_bound = (hc.Q1 + q2_1 + hc.Q3 * M) * T * M
    inner = (vsup * b1
             + (hc.Q1 + 2.0 * M * hc.Q3)
             + (M + vsup * ub_l1_bound + q_l1_bound) * hc.P2)
    return float(sys.k * math.exp((hc.P1 + hc.P2 * M) * T) * inner * T)


# ---------------------------------------------------------------------------
# Semi-entropy inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Nonnegative C1 tensor bump ``prod (1 - s^2)^2`` in time and space."""

    __test__ = False  # not a pytest item

    t_center: float
    t_radius: float
    x_center: np.ndarray
    x_radius: np.ndarray

    def _axis(self, s):
        out = np.zeros_like(s)
        mask = np.abs(s) < 1.0
        out[mask] = (1.0 - s[mask] ** 2) ** 2
        return out

    def _axis_d(self, s):
        out = np.zeros_like(s)
        mask = np.abs(s) < 1.0
        out[mask] = -4.0 * s[mask] * (1.0 - s[mask] ** 2)
        return out

    def _parts(self, t: float, pts: np.ndarray):
        pts = np.atleast_2d(pts)
        st = (t - self.t_center) / self.t_radius
        bt = self._axis(np.array([st]))[0]
        dbt = self._axis_d(np.array([st]))[0] / self.t_radius
        sx = (pts - self.x_center) / self.x_radius
        bx = self._axis(sx)
        dbx = self._axis_d(sx) / self.x_radius
        return bt, dbt, bx, dbx

    def value(self, t: float, pts: np.ndarray) -> np.ndarray:
        bt, _, bx, _ = self._parts(t, pts)
        return bt * np.prod(bx, axis=1)

    def dt(self, t: float, pts: np.ndarray) -> np.ndarray:
        bt, dbt, bx, _ = self._parts(t, pts)
        return dbt * np.prod(bx, axis=1)

    def grad(self, t: float, pts: np.ndarray) -> np.ndarray:
        bt, _, bx, dbx = self._parts(t, pts)
        d = bx.shape[1]
        out = np.empty_like(bx)
        for ax in range(d):
            others = [j for j in range(d) if j != ax]
            prod_others = np.prod(bx[:, others], axis=1) if others else 1.0
            out[:, ax] = bt * dbx[:, ax] * prod_others
        return out

    def support_measure(self) -> float:
        return float(2.0 * self.t_radius * np.prod(2.0 * self.x_radius))


_BUMP_D_MAX = 8.0 / (3.0 * math.sqrt(3.0))  # max of |4 s (1-s^2)| on [-1,1]


def entropy_residual(lp: LinearProblem, times: np.ndarray, states: Sequence[GridFn],
                     phi: TestFunction, kappa: float, sign: int) -> float:
    """Left-hand side of the one-sided entropy inequality; >= -tol for solutions.

    ``sign=+1`` tests the (u - kappa)^+ family, ``sign=-1`` the negative
    one; the flux is affine (v u), so its Lipschitz constant is ||v||_inf
    and div f(t,x,kappa) = kappa div v.
    """
    grid = states[0].grid
    times = np.asarray(times, dtype=float)
    nt = len(times)
    wts = np.zeros(nt)
    if nt > 1:
        dt = np.diff(times)
        wts[:-1] += 0.5 * dt
        wts[1:] += 0.5 * dt
    vol = grid.cell_volume
    pts = grid.points
    total = 0.0
    for j in range(nt):
        t = float(times[j])
        u = states[j].values[:, 0]
        diff = u - kappa
        if sign > 0:
            up = np.maximum(diff, 0.0)
            sg = (diff > 0).astype(float)
        else:
            up = np.maximum(-diff, 0.0)
            sg = -(diff < 0).astype(float)
        phi_v = phi.value(t, pts)
        if not np.any(phi_v):
            continue
        term_t = np.sum(up * phi.dt(t, pts)) * vol
        vel = np.atleast_2d(lp.velocity(t, pts))
        grad = phi.grad(t, pts)
        term_x = np.sum(up * np.sum(vel * grad, axis=1)) * vol
        gval = lp.p(t, pts) * u + lp.q(t, pts)
        divv = lp.velocity.div(t, pts)
        term_g = np.sum(sg * (gval - kappa * divv) * phi_v) * vol
        total += wts[j] * (term_t + term_x + term_g)
    # initial layer
    u0 = lp.u0.values[:, 0]
    d0 = u0 - kappa
    up0 = np.maximum(d0, 0.0) if sign > 0 else np.maximum(-d0, 0.0)
    total += float(np.sum(up0 * phi.value(0.0, pts)) * vol)
    # boundary layer with the flux Lipschitz constant
    lip = lp.velocity.sup
    for ax in range(grid.domain.m):
        fg = grid.face_grid(ax)
        for j in range(nt):
            t = float(times[j])
            ub = np.asarray(lp.ub(t, fg.points))
            db = ub - kappa
            upb = np.maximum(db, 0.0) if sign > 0 else np.maximum(-db, 0.0)
            total += wts[j] * lip * float(np.sum(upb * phi.value(t, fg.points))) * fg.weight
    return float(total)


def entropy_tolerance(lp: LinearProblem, grid: Grid, times: np.ndarray,
                      states: Sequence[GridFn], phi: TestFunction, kappa: float) -> float:
    """Resolution-scaled residual tolerance: 10 (dx + dt) x problem scale.

    The inequality is exact only in the continuum.  Quadrature error
    concentrates where the solution jumps, so it scales with the mesh,
    the solution/level magnitude and the flux Lipschitz constant plus
    the source size; the test function's steepness cancels against its
    shrinking support and is deliberately left out.
    """
    umax = max(float(np.max(np.abs(s.values))) for s in states)
    pinf = qsup = divsup = 0.0
    for tq in (float(times[0]), float(times[len(times) // 2]), float(times[-1])):
        pinf = max(pinf, float(np.max(np.abs(lp.p(tq, grid.points)))))
        qsup = max(qsup, float(np.max(np.abs(lp.q(tq, grid.points)))))
        divsup = max(divsup, float(np.max(np.abs(lp.velocity.div(tq, grid.points)))))
    amp = umax + abs(kappa)
    scale = amp * (1.0 + lp.velocity.sup) + pinf * umax + qsup + abs(kappa) * divsup
    dx = float(np.mean(grid.dx))
    dt = float(np.mean(np.diff(times))) if len(times) > 1 else dx
    return 10.0 * (dx + dt) * scale


def frozen_component(sys: SystemDef, traj: Trajectory, h: int) -> tuple[LinearProblem, list[GridFn]]:
    """Scalar frozen problem and states of component h along a solution."""
    frozen = FrozenCoefficients(sys, h, traj.times, traj.states)
    lp = frozen.linear_problem()
    states = [GridFn(traj.grid, s.values[:, h]) for s in traj.states]
    return lp, states


def entropy_sweep(sys: SystemDef, traj: Trajectory, n_samples: int = 50,
                  seed: int = 0) -> list[dict]:
    """Randomized entropy audit over components, levels, bumps and signs."""
    rng = np.random.default_rng(seed)
    grid = traj.grid
    t_end = float(traj.times[-1])
    bounds = grid.domain.bounds()
    results = []
    frozen = [frozen_component(sys, traj, h) for h in range(sys.k)]
    for _ in range(n_samples):
        h = int(rng.integers(0, sys.k))
        lp, states = frozen[h]
        lo = min(float(np.min(s.values)) for s in states)
        hi = max(float(np.max(s.values)) for s in states)
        kappa = float(rng.uniform(lo - 0.1 * (hi - lo + 1e-6), hi + 0.1 * (hi - lo + 1e-6)))
        t_rad = float(rng.uniform(0.1, 0.45)) * max(t_end, 1e-6)
        t_c = float(rng.uniform(0.0, max(t_end - t_rad, 1e-9)))
        x_c = np.array([rng.uniform(lo_ax, hi_ax) for lo_ax, hi_ax in bounds])
        x_r = np.array([rng.uniform(0.1, 0.5) * (hi_ax - lo_ax) for lo_ax, hi_ax in bounds])
        sign = 1 if rng.uniform() < 0.5 else -1
        phi = TestFunction(t_c, t_rad, x_c, x_r)
        res = entropy_residual(lp, traj.times, states, phi, kappa, sign)
        tol = entropy_tolerance(lp, grid, traj.times, states, phi, kappa)
        results.append({"component": h, "kappa": kappa, "sign": sign,
                        "residual": res, "tol": tol, "ok": res >= -tol})
    return results
