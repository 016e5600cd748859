import numpy as np
import pytest

from oracles import black_scholes_call

from robusthedge import robust_pricer as rp
from robusthedge import verification as ver
from robusthedge.decomposition import analytic_strategy
from robusthedge.levy_model import build_theta, parametric_theta
from robusthedge.path_engine import TimeGrid, constant_policy

GRID = TimeGrid(1.0, 64)
SINGLE = build_theta([(0.04, None)])
BAND = parametric_theta((0.1, 0.3, 3))


def test_tolerance_formula():
    assert ver.hedge_tolerance(0.3, 1 / 256) == pytest.approx(5 * 0.3 / 16)
    assert ver.sigma_max(BAND) == pytest.approx(0.3)


def test_extreme_indices_and_menu():
    th = parametric_theta((0.1, 0.3, 3), [(-0.5, 0.0, 1.0, 3)])
    assert ver.extreme_indices(th) == [0, 2, 6, 8]
    lat = rp.Lattice.for_theta(BAND, GRID, 101)
    _, vf = rp.price(rp.call(1.0), BAND, lat)
    assert list(ver.policy_menu(BAND, vf, lat)) == ["constant[0]", "constant[2]", "argmax"]
    assert len(ver.policy_menu(BAND, constants="all")) == 3


def test_forward_replicated_by_holding_one_unit():
    rep = ver.superhedge_test(1.0, ver.constant_strategy([1.0]), rp.linear(1.0, 0.0), SINGLE,
                              {"c": constant_policy(0)}, 500, GRID, seed=0)
    r = rep.results["c"]
    assert r.max_shortfall <= 1e-12 and r.fail_fraction == 0.0 and rep.passed


def test_constant_claim_needs_no_hedge():
    rep = ver.superhedge_test(2.0, ver.constant_strategy([0.0]), rp.constant(2.0), BAND,
                              {"lo": constant_policy(0), "hi": constant_policy(2)}, 300, GRID, seed=1)
    assert all(r.max_shortfall == 0.0 for r in rep.results.values())


def test_band_call_superhedged_under_adversary():
    lat = rp.Lattice.for_theta(BAND, GRID, 401)
    x0, vf = rp.price(rp.call(1.0), BAND, lat)
    menu = ver.policy_menu(BAND, vf, lat)
    rep = ver.superhedge_test(x0, analytic_strategy(vf, lat, BAND), rp.call(1.0), BAND, menu, 2000, GRID, seed=2)
    for name, r in rep.results.items():
        assert r.fail_fraction <= 0.01, name
    assert "policy menu" in rep.note


def test_superhedge_reports_failure_when_underfunded():
    rep = ver.superhedge_test(0.0, ver.constant_strategy([0.0]), rp.call(1.0), SINGLE,
                              {"c": constant_policy(0)}, 500, GRID, seed=3)
    assert not rep.passed and rep.results["c"].fail_fraction > 0.1


def test_monotonicity_optimal_and_suboptimal():
    lat = rp.Lattice.for_theta(BAND, GRID, 401)
    _, vf = rp.price(rp.call(1.0), BAND, lat)
    strat = analytic_strategy(vf, lat, BAND)
    eps = ver.hedge_tolerance(0.3, GRID.dt)
    top = ver.hedged_ensemble(BAND, constant_policy(2), GRID, 4, 1000, vf, lat, strat)
    low = ver.hedged_ensemble(BAND, constant_policy(0), GRID, 4, 1000, vf, lat, strat)
    r_top = ver.monotonicity_test(top.y, top.H, top.s, eps)
    r_low = ver.monotonicity_test(low.y, low.H, low.s, eps)
    assert r_top.passed and r_low.passed
    # interior sigma leaves a strictly positive nondecreasing part
    assert r_low.terminal_K_mean > 3 * r_low.terminal_K_se
    assert abs(r_top.terminal_K_mean) < 3 * r_top.terminal_K_se + 5e-3


def test_supermartingale_increments_without_hedge():
    lat = rp.Lattice.for_theta(BAND, GRID, 401)
    _, vf = rp.price(rp.call(1.0), BAND, lat)
    he = ver.hedged_ensemble(BAND, constant_policy(0), GRID, 5, 2000, vf, lat, ver.constant_strategy([0.0]))
    rep = ver.monotonicity_test(he.y, np.zeros_like(he.H), he.s, 1.0)
    assert np.all(rep.mean_increment <= 3 * rep.se_increment + 1e-12)


def test_duality_singleton_and_constant():
    lat = rp.Lattice.for_theta(SINGLE, GRID, 401)
    g = ver.duality_gap(rp.call(1.0), SINGLE, lat, 5000, seed=6)
    assert abs(g.gap) <= 3 * g.std_errors[g.best_policy] + 2e-3
    assert g.weak_duality_ok
    g = ver.duality_gap(rp.constant(1.5), BAND, rp.Lattice.for_theta(BAND, GRID, 101), 200, seed=6)
    assert g.gap == pytest.approx(0.0, abs=1e-12)


def test_duality_band_near_top_volatility():
    lat = rp.Lattice.for_theta(BAND, GRID, 401)
    g = ver.duality_gap(rp.call(1.0), BAND, lat, 20000, seed=7)
    assert g.weak_duality_ok
    assert g.upper == pytest.approx(black_scholes_call(1.0, sigma=0.3), rel=3e-3)
    assert g.relative_gap < 0.03


def test_common_random_numbers_order_policies():
    means, _ = ver.monte_carlo_means(rp.call(1.0), BAND, {f"c{i}": constant_policy(i) for i in range(3)},
                                     GRID, 4000, seed=8)
    assert means["c0"] < means["c1"] < means["c2"]


def test_reports_reproducible():
    lat = rp.Lattice.for_theta(BAND, GRID, 101)
    a = ver.duality_gap(rp.call(1.0), BAND, lat, 1000, seed=9)
    b = ver.duality_gap(rp.call(1.0), BAND, lat, 1000, seed=9, threads=2)
    assert a.means == b.means
    # chunking only reorders the floating-point sums
    c = ver.duality_gap(rp.call(1.0), BAND, lat, 1000, seed=9, chunk=300)
    assert all(np.isclose(a.means[n], c.means[n], rtol=1e-13) for n in a.means)
