import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from carbon_hjb.errors import GridMismatch, LeftBoundaryNotVanishing
from carbon_hjb.grid import GridSpec, ValueSurface
from carbon_hjb.model import lemma22_bound
from carbon_hjb.obstacle_solver import (
    cross_validate,
    gradient_project,
    integrate_v_to_u,
    phi_from_u,
    solve_u_projected,
)
from carbon_hjb.penalty_solver import SolverConfig, solve_penalized

from conftest import quiet_grid

rows = arrays(float, st.integers(1, 12), elements=st.floats(-5.0, 5.0, allow_nan=False))
dxs = st.floats(0.05, 2.0)


def _sequential(u, dx):
    out = list(u)
    for i in range(1, len(out)):
        out[i] = min(out[i], out[i - 1] + dx)
    return np.array(out)


def test_project_examples():
    np.testing.assert_allclose(gradient_project([0, 0.5, 1.2, 1.5], 0.5), [0, 0.5, 1.0, 1.5])
    np.testing.assert_allclose(gradient_project([0, 2, 4], 1.0), [0, 1, 2])
    np.testing.assert_allclose(gradient_project([0, 0.2, 0.3], 1.0), [0, 0.2, 0.3])


@given(rows, dxs)
def test_project_matches_sequential_sweep(u, dx):
    np.testing.assert_allclose(gradient_project(u, dx), _sequential(u, dx), atol=1e-12)


@given(rows, dxs)
def test_project_feasible_minorant_idempotent(u, dx):
    w = gradient_project(u, dx)
    assert np.all(w <= u + 1e-12)
    assert np.all(np.diff(w) <= dx + 1e-12)
    np.testing.assert_allclose(gradient_project(w, dx), w, atol=1e-12)


@given(rows, dxs, st.floats(0.0, 3.0))
def test_project_order_preserving(u, dx, shift):
    bump = u + shift
    assert np.all(gradient_project(u, dx) <= gradient_project(bump, dx) + 1e-12)


def test_project_works_columnwise():
    rng = np.random.default_rng(0)
    u = rng.random((9, 4)) * 3
    w = gradient_project(u, 0.2)
    for j in range(4):
        np.testing.assert_allclose(w[:, j], _sequential(u[:, j], 0.2))


def _surface(g, data, kind="v"):
    return ValueSurface(g, kind, data[None], [0])


def test_integrate_examples():
    g = quiet_grid(GridSpec(x_min=-3.0, x_max=2.0, y_min=-1, y_max=1, nx=51, ny=3, nt=1))
    x = g.x_nodes
    ind = np.heaviside(np.round(x, 12), 0.5)[:, None] * np.ones((1, 3))
    u = integrate_v_to_u(_surface(g, ind), g).data[0]
    at0 = np.isclose(x, 0.0)
    np.testing.assert_allclose(u[~at0, 0], np.maximum(x[~at0], 0.0), atol=1e-12)
    assert u[at0, 0] == pytest.approx(0.25 * g.dx)
    ramp = np.clip(x, 0.0, 1.0)[:, None] * np.ones((1, 3))
    u = integrate_v_to_u(_surface(g, ramp), g).data[0]
    assert u[np.argmin(abs(x - 1.0)), 1] == pytest.approx(0.5)
    ones = np.ones((51, 3))
    with pytest.raises(LeftBoundaryNotVanishing):
        integrate_v_to_u(_surface(g, ones), g)
    u = integrate_v_to_u(_surface(g, ones), g, left_tol=None).data[0]
    np.testing.assert_allclose(u[:, 2], x - x[0], atol=1e-12)


@pytest.fixture(scope="module")
def u_small(small_grid, params):
    return solve_u_projected(small_grid, params, store_every=1)


def test_u_shape(u_small, small_grid):
    d = u_small.data
    np.testing.assert_array_equal(d[0], np.maximum(small_grid.x_nodes, 0)[:, None] * np.ones((1, 11)))
    du = np.diff(d, axis=1) / small_grid.dx
    assert d.min() >= 0.0
    assert du.min() >= -1e-8 and du.max() <= 1 + 1e-8
    assert np.diff(d, n=2, axis=1).min() >= -1e-8
    # u nonincreasing in y, i.e. Phi_s <= Phi/s
    assert np.diff(d, axis=2).max() <= 1e-12


def test_u_slope_one_beyond_boundary(u_small, small_grid):
    slope = np.diff(u_small.data[-1][-20:, 0]) / small_grid.dx
    np.testing.assert_allclose(slope, 1.0, atol=1e-8)


def test_phi_bounds(u_small, small_grid, params):
    phi = phi_from_u(u_small, small_grid)
    s = np.exp(small_grid.y_nodes)
    np.testing.assert_allclose(phi.data[:, :, 5], u_small.data[:, :, 5])   # y = 0
    bound = lemma22_bound(
        small_grid.x_nodes[None, :, None], s[None, None, :], phi.t_values[:, None, None], params
    )
    assert np.max(phi.data - bound) <= 1e-3 * s.max()


def test_cross_validate_agreement(u_small, small_grid, params):
    v = solve_penalized(0.01, small_grid, params, SolverConfig(store_every=1))
    rep = cross_validate(v, u_small, small_grid, params)
    assert rep.max_ux_minus_v <= 0.05
    assert rep.max_rel_phi <= 0.05
    assert np.isfinite(rep.complementarity)
    assert rep.lines()[0].startswith("t_compare=")


def test_cross_validate_identical_and_mismatch(small_grid, params):
    g = small_grid
    x = g.x_nodes
    u = np.maximum(x, 0.0)[:, None] * np.ones((1, g.spec.ny))
    # v consistent with u = x^+ under centred differences and trapezoid integration
    v = np.gradient(u, g.dx, axis=0)
    us = ValueSurface(g, "u", np.stack([u, u]), [0, 1])
    vs = ValueSurface(g, "v", np.stack([v, v]), [0, 1])
    rep = cross_validate(vs, us, g)
    assert rep.max_ux_minus_v == 0.0
    assert rep.max_rel_phi <= 0.5 * g.dx
    other = quiet_grid(GridSpec(nx=31, ny=3, nt=2, x_max=3.0))
    with pytest.raises(GridMismatch):
        cross_validate(vs, ValueSurface(other, "u", np.zeros((1, 31, 3)), [0]), g)


def test_refined_march_restricts_to_grid(small_grid, params):
    coarse = solve_u_projected(small_grid, params, store_every=10)
    fine = solve_u_projected(small_grid, params, store_every=10, x_refine=2)
    assert fine.data.shape == coarse.data.shape
    assert np.array_equal(fine.data[0], coarse.data[0])
    d = np.diff(fine.data, axis=1)
    assert d.min() >= -1e-12 and d.max() <= small_grid.dx * (1 + 1e-12)
    assert np.diff(fine.data, n=2, axis=1).min() >= -1e-12
    # the finer march smears the kink less
    assert fine.data[-1].max() <= coarse.data[-1].max() + 1e-12
    with pytest.raises(ValueError):
        solve_u_projected(small_grid, params, x_refine=0)
