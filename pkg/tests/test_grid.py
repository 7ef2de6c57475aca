import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmtlab.grid import (
    Grid,
    MetricField,
    ScalarField,
    extrapolate_ghosts,
    fsum,
    integrate,
    inverse6,
    lp_norm,
    sample,
    sample_at,
    sphere_average,
)


@pytest.fixture(scope="module")
def grid():
    return Grid(4.0, 33, 1.0)


def test_spacing_and_shapes(grid):
    assert grid.h == pytest.approx(0.25)
    assert grid.shape == (37, 37, 37)
    assert grid.axis(0)[0] == -4.0 and grid.axis(0)[-1] == pytest.approx(4.0)


@pytest.mark.parametrize("kw", [
    dict(extent=4.0, nodes_per_axis=8, compact_radius=1.0),
    dict(extent=4.0, nodes_per_axis=33, compact_radius=2.5),
    dict(extent=-1.0, nodes_per_axis=33, compact_radius=0.1),
    dict(extent=4.0, nodes_per_axis=33, compact_radius=1.0, dim=2),
])
def test_grid_rejections(kw):
    with pytest.raises(ValueError):
        Grid(**kw)


def test_refined_nests(grid):
    fine = grid.refined()
    assert fine.nodes_per_axis == 65
    np.testing.assert_allclose(fine.axis(0)[::2], grid.axis(0))


def test_volume_of_box_and_ball(grid):
    one = np.ones(grid.interior_shape)
    assert integrate(one, grid) == pytest.approx(8.0 ** 3, rel=1e-12)
    # staircase ball, first order in h but unbiased on average
    assert integrate(one, grid, region="K") == pytest.approx(4 * np.pi / 3, rel=0.05)
    fine = grid.refined(4)
    assert integrate(np.ones(fine.interior_shape), fine, region="K") == pytest.approx(4 * np.pi / 3, rel=0.01)


def test_polynomial_quadrature_trapezoid(grid):
    # trapezoid rule in each axis: x^2 error is h^2/6 * (b - a) * f'' stuff
    x = grid.coords(0)
    val = integrate(x[0] ** 2, grid)
    exact = 2 * 4.0 ** 3 / 3 * 64.0
    h = grid.h
    assert val - exact == pytest.approx(h * h / 6 * (2 * 4.0) * 64.0, rel=1e-10)


def test_lp_norm_conformal_volume(grid):
    g = MetricField.flat(grid).scaled(4.0)  # sqrt(det) = 8
    f = np.ones(grid.interior_shape)
    assert lp_norm(f, 2.0, g) == pytest.approx(np.sqrt(8 * 512.0))
    with pytest.raises(ValueError):
        lp_norm(f, 0.5, g)


def test_metric_rejects_indefinite(grid):
    t = MetricField.flat(grid).tensor().copy()
    t[0, 0, 5, 5, 5] = -1.0
    with pytest.raises(ValueError):
        MetricField.from_tensor(grid, t)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=6, max_size=6))
def test_inverse6_matches_numpy(off):
    a = np.array(off).reshape(2, 3)
    m = np.eye(3) + 0.5 * (a.T @ a)  # SPD
    c = np.array([m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2], m[2, 2]]).reshape(6, 1)
    inv = inverse6(c)[..., 0]
    np.testing.assert_allclose(inv, np.linalg.inv(m), rtol=1e-12, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_fsum_is_accurate(vals):
    a = np.array(vals)
    assert fsum(a) == pytest.approx(float(np.sum(a.astype(np.longdouble))), abs=1e-6)


def test_fsum_order_independent_of_layout():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(9, 9, 9))
    assert fsum(a) == fsum(a.copy(order="F"))


def test_trilinear_sampling_exact_on_linear(grid):
    f = sample(lambda x: 1.0 + 2 * x[0] - x[1] + 0.5 * x[2], grid)
    pts = np.random.default_rng(0).uniform(-3.5, 3.5, size=(3, 50))
    exact = 1.0 + 2 * pts[0] - pts[1] + 0.5 * pts[2]
    np.testing.assert_allclose(sample_at(f.values, grid, f.ghost, pts), exact, atol=1e-12)
    with pytest.raises(ValueError):
        sample_at(f.values, grid, f.ghost, np.full((3, 1), 9.0))


def test_sphere_average_of_linear_and_quadratic():
    grid = Grid(4.0, 65, 1.0)
    x = grid.coords()
    assert sphere_average(x[0], grid, grid.ghost, 2.0) == pytest.approx(0.0, abs=1e-12)
    # <x1^2> over the sphere is r^2/3; trilinear error O(h^2)
    assert sphere_average(x[0] ** 2, grid, grid.ghost, 2.0) == pytest.approx(4.0 / 3, rel=5e-3)


def test_ghost_extrapolation_exact_for_falloff():
    grid = Grid(4.0, 32, 1.0)  # even node count: no node at the origin
    r = grid.radius(0)
    f = extrapolate_ghosts(0.3 + 2.0 / r, grid)
    rg = grid.radius()
    edge = np.ones(grid.shape, bool)
    edge[2:-2, 2:-2, 2:-2] = False
    # faces are exact; corner fills extrapolate along already extrapolated lines
    err = np.abs(f.values - (0.3 + 2.0 / rg))[edge]
    assert err.max() < 2e-3
    np.testing.assert_array_equal(f.interior, 0.3 + 2.0 / r)


def test_sample_rejects_bad_shape(grid):
    with pytest.raises(ValueError):
        ScalarField(grid, np.zeros((3, 3, 3)))
