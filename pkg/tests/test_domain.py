import numpy as np
import pytest

from renewalpde.domain import (
    CorruptStateError,
    Domain,
    Grid,
    GridFn,
    integrate_kernel,
    interp_gridfn,
    l1_norm,
    linf_norm,
)


def grid_1d(length=2.0, cells=400, half=True):
    dom = Domain(half_lengths=(length,)) if half else Domain(full_lengths=(length,))
    return Grid(dom, (cells,))


def indicator(lo, hi):
    return lambda pts: ((pts[:, 0] >= lo) & (pts[:, 0] <= hi)).astype(float)


def test_grid_geometry():
    g = grid_1d(2.0, 400)
    assert g.n_nodes == 400
    assert g.dx == (0.005,)
    assert np.isclose(g.points[0, 0], 0.0025)
    assert np.isclose(g.points[-1, 0], 1.9975)
    # quadrature weights sum to the box volume
    assert np.isclose(g.cell_volume * g.n_nodes, 2.0)


def test_l1_norm_zero():
    g = grid_1d()
    assert l1_norm(GridFn.zeros(g)) == 0.0


def test_l1_norm_constant_volume():
    g = Grid(Domain(half_lengths=(1.0,)), (128,))
    f = GridFn(g, np.ones(128))
    assert abs(l1_norm(f) - 1.0) <= 1e-12


def test_l1_norm_indicator():
    g = grid_1d(2.0, 400)
    f = GridFn.from_callback(g, indicator(0.0, 1.0))
    assert abs(l1_norm(f) - 1.0) <= 0.005


def test_linf_norm_zero_and_vector():
    g = grid_1d(1.0, 32)
    assert linf_norm(GridFn.zeros(g, k=2)) == 0.0
    f = GridFn(g, np.tile([1.0, 2.0], (32, 1)))
    assert linf_norm(f) == 3.0


def test_linf_norm_blowup_profile():
    # 1/(1-t) * 1_[0,1] at t = 0.5 has sup 2
    g = Grid(Domain(full_lengths=(1.5,)), (400,))
    vals = 2.0 * ((g.points[:, 0] >= 0) & (g.points[:, 0] <= 1))
    assert abs(linf_norm(GridFn(g, vals)) - 2.0) <= 0.01


def test_norm_errors_on_nan():
    g = grid_1d(1.0, 8)
    vals = np.ones(8)
    vals[3] = np.nan
    with pytest.raises(CorruptStateError):
        l1_norm(GridFn(g, vals))
    with pytest.raises(CorruptStateError):
        linf_norm(GridFn(g, vals))


def test_integrate_kernel_zero():
    g = grid_1d(2.0, 100)
    f = GridFn.from_callback(g, indicator(0.0, 1.0))
    val = integrate_kernel(lambda t, x, xs: np.zeros(xs.shape[0]), f, np.array([1.0]))
    assert val == 0.0


def test_integrate_kernel_constant():
    g = grid_1d(2.0, 400)
    f = GridFn.from_callback(g, indicator(0.0, 1.0))
    val = integrate_kernel(lambda t, x, xs: np.ones(xs.shape[0]), f, np.array([0.3]))
    assert abs(val - 1.0) <= 0.005


def test_integrate_kernel_window():
    g = grid_1d(2.0, 400)
    f = GridFn(g, np.ones(400))
    ker = lambda t, x, xs: (np.abs(xs[:, 0] - x[0]) < 0.5).astype(float)
    val = integrate_kernel(ker, f, np.array([1.0]))
    assert abs(val - 1.0) <= 0.01


def test_integrate_kernel_nonfinite_errors():
    g = grid_1d(1.0, 16)
    f = GridFn(g, np.ones(16))
    with pytest.raises(ValueError):
        integrate_kernel(lambda t, x, xs: np.full(xs.shape[0], np.inf), f, np.array([0.5]))


def test_triangle_inequality_and_scaling():
    rng = np.random.default_rng(7)
    g = grid_1d(2.0, 64)
    for _ in range(20):
        a = GridFn(g, rng.normal(size=(64, 3)))
        b = GridFn(g, rng.normal(size=(64, 3)))
        assert l1_norm(a + b) <= l1_norm(a) + l1_norm(b) + 1e-12
        c = float(rng.normal())
        assert abs(l1_norm(c * a) - abs(c) * l1_norm(a)) <= 1e-12 * (1 + l1_norm(a))


def test_kernel_linearity():
    rng = np.random.default_rng(11)
    g = grid_1d(2.0, 64)
    ker = lambda t, x, xs: np.cos(xs[:, 0] - x[0])
    a = GridFn(g, rng.normal(size=64))
    b = GridFn(g, rng.normal(size=64))
    at = np.array([0.7])
    lhs = integrate_kernel(ker, GridFn(g, 2.0 * a.values + 3.0 * b.values), at)
    rhs = 2.0 * integrate_kernel(ker, a, at) + 3.0 * integrate_kernel(ker, b, at)
    assert abs(lhs - rhs) <= 1e-12


def test_refinement_stability():
    # refining the grid changes the L1 norm of an indicator by O(dx)
    coarse = Grid(Domain(half_lengths=(2.0,)), (100,))
    fine = Grid(Domain(half_lengths=(2.0,)), (200,))
    f_c = GridFn.from_callback(coarse, indicator(0.0, 1.3))
    f_f = GridFn.from_callback(fine, indicator(0.0, 1.3))
    assert abs(l1_norm(f_c) - l1_norm(f_f)) <= 2 * coarse.dx[0]


def test_interp_exact_at_nodes_and_outside_zero():
    g = Grid(Domain(half_lengths=(1.0,), full_lengths=(1.0,)), (8, 6))
    rng = np.random.default_rng(3)
    f = GridFn(g, rng.normal(size=(48, 2)))
    got = interp_gridfn(f, g.points)
    assert np.allclose(got, f.values)
    outside = np.array([[2.0, 0.0], [0.5, 5.0], [-0.1, 0.0]])
    assert np.all(interp_gridfn(f, outside) == 0.0)


def test_interp_linear_in_between():
    g = Grid(Domain(half_lengths=(1.0,)), (10,))
    f = GridFn(g, 3.0 * g.points[:, 0] + 1.0)
    pts = np.array([[0.5], [0.22], [0.91]])
    assert np.allclose(interp_gridfn(f, pts)[:, 0], 3.0 * pts[:, 0] + 1.0)
