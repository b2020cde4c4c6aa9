import math

import numpy as np
import pytest

from carbon_hjb.errors import GridMismatch, InvalidCounts, MissingSurface, NonpositivePrice
from carbon_hjb.free_boundary import extract_boundary
from carbon_hjb.grid import GridSpec, ValueSurface
from carbon_hjb.model import trivial_strategy_cost
from carbon_hjb.obstacle_solver import phi_from_u, solve_u_projected
from carbon_hjb.penalty_solver import SolverConfig, solve_penalized
from carbon_hjb.policy_sim import (
    FixedStrategy,
    SimReport,
    extract_policy,
    simulate_paths,
    strategy_dominance,
    verify_value,
)

from conftest import quiet_grid


def _flat_policy(params, value):
    g = quiet_grid(GridSpec(x_min=-1.0, x_max=1.0, y_min=-1.0, y_max=1.0, nx=5, ny=5, nt=2))
    row = np.linspace(0.0, 1.0, 5)[None, :, None] * np.ones((3, 1, 5))
    fb = extract_boundary(ValueSurface(g, "v", row, [0, 1, 2], eps=0.01))
    v = ValueSurface(g, "v", np.full((3, 5, 5), value), [0, 1, 2], eps=0.01)
    return extract_policy(v, fb, params)


def test_rate_examples(params):
    assert _flat_policy(params, 1.0).rate(0.0, 1.0, 0.5) == pytest.approx(1 / 0.3)
    assert _flat_policy(params, 0.0).rate(0.0, 1.0, 0.5) == 0.0
    assert _flat_policy(params, 0.5).rate(0.0, 2.0, 0.5) == pytest.approx(1 / 0.3)


def test_extract_policy_errors(params, small_grid):
    pol = _flat_policy(params, 1.0)
    with pytest.raises(MissingSurface):
        extract_policy(None, pol.boundary, params)
    with pytest.raises(MissingSurface):
        extract_policy(ValueSurface(pol.v.grid, "u", pol.v.data, [0, 1, 2]), pol.boundary, params)
    other = ValueSurface(small_grid, "v", np.zeros((1,) + small_grid.shape), [0])
    with pytest.raises(GridMismatch):
        extract_policy(other, pol.boundary, params)


def test_invalid_inputs(params):
    zero = FixedStrategy()
    with pytest.raises(InvalidCounts):
        simulate_paths(zero, params, 0.0, 1.0, n_paths=0)
    with pytest.raises(InvalidCounts):
        simulate_paths(zero, params, 0.0, 1.0, n_steps=0)
    with pytest.raises(NonpositivePrice):
        simulate_paths(zero, params, 0.0, 0.0)


@pytest.mark.parametrize("x0,s0,t0", [(0.0, 1.0, 0.0), (1.0, 2.0, 0.0), (-0.5, 1.0, 0.5)])
def test_zero_strategy_matches_closed_form(params, x0, s0, t0):
    rep = simulate_paths(FixedStrategy(), params, x0, s0, t0, n_paths=20_000, n_steps=50, seed=11)
    ref = trivial_strategy_cost(x0, s0, params.T - t0, params)
    assert abs(rep.mean_cost - ref) <= 3 * rep.stderr
    assert rep.internal == 0.0 and rep.purchase == 0.0


def test_constant_rate_internal_cost_is_exact(params):
    n = 40
    rep = simulate_paths(FixedStrategy(5.0), params, -3.0, 1.0, n_paths=200, n_steps=n, seed=0)
    dth = params.T / n
    ref = sum(math.exp(-params.r * k * dth) * 0.5 * params.m * 25.0 * dth for k in range(n))
    assert rep.internal == pytest.approx(ref, rel=1e-12)
    zero = simulate_paths(FixedStrategy(0.0), params, -3.0, 1.0, n_paths=200, n_steps=n, seed=0)
    assert rep.mean_cost > zero.mean_cost


def test_decomposition_and_determinism(params):
    a = simulate_paths(FixedStrategy(0.5, buy_at=0.5), params, 1.0, 1.0, n_paths=300, n_steps=20, seed=5)
    b = simulate_paths(FixedStrategy(0.5, buy_at=0.5), params, 1.0, 1.0, n_paths=300, n_steps=20, seed=5)
    assert a.lines() == b.lines()
    assert a.mean_cost == pytest.approx(a.terminal + a.purchase + a.internal, abs=1e-10)
    assert a.mean_cost >= 0
    # the first purchase brings the surplus down to 0.5 immediately
    assert a.purchase >= 0.5 - 1e-12
    assert a.purchase_events >= 300


def test_paths_do_not_depend_on_chunking(params):
    big = simulate_paths(FixedStrategy(), params, 0.0, 1.0, n_paths=5000, n_steps=10, seed=3, keep_paths=True)
    tail = simulate_paths(FixedStrategy(), params, 0.0, 1.0, n_paths=4100, n_steps=10, seed=3, keep_paths=True)
    np.testing.assert_array_equal(big.per_path[:4100], tail.per_path)


def test_write_reports(params, tmp_path):
    rep = simulate_paths(FixedStrategy(), params, 0.0, 1.0, n_paths=20, n_steps=5, seed=0, keep_paths=True)
    rep.write(tmp_path / "r.txt")
    text = (tmp_path / "r.txt").read_text()
    assert "mean_cost=" in text and text.endswith("valid=True\n")
    rep.write_paths(tmp_path / "p.csv", "h")
    assert (tmp_path / "p.csv").read_text().splitlines()[1] == "path_index,total,terminal,purchase,internal"


def _fake(n_paths, mean, stderr, exit_fraction=0.0):
    return SimReport("x", n_paths, 10, 0, 1.0, 1.0, 0.0, mean, stderr, mean, 0.0, 0.0, exit_fraction, 0, 0)


@pytest.fixture(scope="module")
def solved(params):
    # dx = 0.05 keeps the first-order bias of Phi well inside the tolerances below
    g = quiet_grid(GridSpec(x_min=-3.0, x_max=9.0, y_min=-1.0, y_max=1.0, nx=241, ny=11, nt=100))
    v = solve_penalized(0.01, g, params, SolverConfig(store_every=1))
    u = solve_u_projected(g, params, store_every=1)
    fb = extract_boundary(v, 1 - 1e-6)
    return extract_policy(v, fb, params), phi_from_u(u, g)


def test_verify_statuses(solved):
    _, phi = solved
    from carbon_hjb.policy_sim import phi_at

    val = phi_at(phi, 1.0, 1.0, 0.0)
    assert verify_value(_fake(10, val, 0.001), phi, 1.0, 1.0).status == "INCONCLUSIVE"
    assert verify_value(_fake(1000, val, 0.2), phi, 1.0, 1.0).status == "INCONCLUSIVE"
    assert verify_value(_fake(1000, val, 0.001, 0.05), phi, 1.0, 1.0).status == "FAIL"
    assert verify_value(_fake(1000, val * 1.5, 0.001), phi, 1.0, 1.0).status == "FAIL"
    assert verify_value(_fake(1000, val * 1.01, 0.001), phi, 1.0, 1.0).status == "PASS"
    with pytest.raises(MissingSurface):
        phi_at(solved[0].v, 1.0, 1.0, 0.0)


def test_policy_rate_bounds_and_plateau(solved, params):
    pol, _ = solved
    x = np.linspace(-3, 9, 50)
    for s in (0.5, 1.0, 2.0):
        a = pol.rate(x, s, 0.3)
        assert a.min() >= 0.0 and a.max() <= s * 1.01 / params.m + 1e-12
    xb = float(pol.buy_boundary(1.0, 0.0))
    assert np.isfinite(xb)
    assert pol.rate(xb + 0.5, 1.0, 0.0) == pytest.approx(1 / params.m, rel=0.011)


def test_policy_replay(solved, params):
    pol, phi = solved
    rep = simulate_paths(pol, params, 1.0, 1.0, n_paths=2000, n_steps=100, seed=2)
    assert rep.purchases_outside_buy_region <= 0.01 * max(rep.purchase_events, 1)
    assert rep.valid
    assert verify_value(rep, phi, 1.0, 1.0, rel_tol=0.05).status == "PASS"
    zero = simulate_paths(FixedStrategy(), params, 1.0, 1.0, n_paths=2000, n_steps=100, seed=2)
    assert zero.mean_cost >= verify_value(rep, phi, 1.0, 1.0).phi - 3 * zero.stderr
    deep = simulate_paths(pol, params, -3.0, 1.0, n_paths=500, n_steps=50, seed=2)
    assert deep.mean_cost <= 0.01


def test_dominance_rows(solved, params):
    pol, _ = solved
    rows = strategy_dominance([(1.0, 1.0), (-3.0, 1.0)], [FixedStrategy(0.0, name="zero"), FixedStrategy(5.0, name="c5")],
                              pol, n_paths=1000, n_steps=50, seed=4)
    assert [r.alternative for r in rows] == ["zero", "c5", "zero", "c5"]
    assert all(r.holds for r in rows)
    assert rows[0].strict and rows[1].strict and rows[3].strict
    assert rows[0].paired_stderr <= rows[0].combined_stderr
    assert "margin=" in rows[0].line()
