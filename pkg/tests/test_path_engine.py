import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from robusthedge.levy_model import LevyMeasure, build_theta, parametric_theta
from robusthedge.path_engine import (
    PositivityError,
    TimeGrid,
    coarsen_noise,
    constant_policy,
    draw_noise,
    linear_price,
    markov_policy,
    poisson_inverse,
    read_ensemble_csv,
    simulate,
    simulate_ensemble,
    stochastic_exponential,
    stochastic_integral,
    write_ensemble_csv,
)

JUMPY = build_theta([(0.04, LevyMeasure([-0.5, 0.3], [1.0, 2.0]))])


def test_time_grid():
    g = TimeGrid(2.0, 8)
    assert g.dt == 0.25
    assert g.times[0] == 0.0 and g.times[-1] == 2.0
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_single_path_matches_ensemble_row():
    g = TimeGrid(1.0, 16)
    ens = simulate_ensemble(JUMPY, constant_policy(0), g, seed=5, n_paths=4)
    one = simulate(JUMPY, constant_policy(0), g, seed=5, path_index=2)
    assert np.array_equal(one.x, ens.x[2])


def test_chunking_does_not_change_paths():
    g = TimeGrid(1.0, 16)
    whole = simulate_ensemble(JUMPY, constant_policy(0), g, seed=1, n_paths=6)
    parts = [simulate_ensemble(JUMPY, constant_policy(0), g, seed=1, n_paths=3, start=a) for a in (0, 3)]
    assert np.array_equal(whole.x, np.concatenate([p.x for p in parts]))


def test_seed_changes_paths():
    g = TimeGrid(1.0, 8)
    a = simulate_ensemble(JUMPY, constant_policy(0), g, seed=1, n_paths=2)
    b = simulate_ensemble(JUMPY, constant_policy(0), g, seed=2, n_paths=2)
    assert not np.array_equal(a.x, b.x)


def test_common_noise_across_policies():
    th = parametric_theta((0.1, 0.3, 2))
    g = TimeGrid(1.0, 32)
    lo = simulate_ensemble(th, constant_policy(0), g, seed=3, n_paths=5)
    hi = simulate_ensemble(th, constant_policy(1), g, seed=3, n_paths=5)
    # same Brownian path scaled by sigma
    assert np.allclose(hi.diffusion, 3.0 * lo.diffusion)


def test_policy_sees_state_and_records_controls():
    th = parametric_theta((0.1, 0.3, 2))
    g = TimeGrid(1.0, 32)
    pol = markov_policy(lambda k, x: (x[:, 0] > 0).astype(int))
    ens = simulate_ensemble(th, pol, g, seed=0, n_paths=50)
    assert np.array_equal(ens.controls[:, 1:], (ens.x[:, 1:-1, 0] > 0).astype(int))


def test_policy_index_out_of_range():
    with pytest.raises(IndexError):
        simulate_ensemble(JUMPY, constant_policy(3), TimeGrid(1.0, 4), seed=0, n_paths=2)


@settings(max_examples=30)
@given(st.floats(0.001, 5.0), st.integers(0, 2**31 - 1))
def test_poisson_inverse_matches_scipy(mean, seed):
    u = np.random.default_rng(seed).random(200)
    assert np.array_equal(poisson_inverse(u, mean), poisson.ppf(u, mean).astype(int))


def test_coarsen_noise_sums_brownian_increments():
    g_fine, g_coarse = TimeGrid(1.0, 64), TimeGrid(1.0, 16)
    th = build_theta([(0.09, None)])
    fine = draw_noise(7, np.arange(3), 64, 1, 0)
    a = simulate_ensemble(th, constant_policy(0), g_fine, seed=7, noise=fine)
    b = simulate_ensemble(th, constant_policy(0), g_coarse, seed=7, noise=coarsen_noise(fine, 4))
    assert np.allclose(a.x[:, ::4], b.x, atol=1e-14)
    with pytest.raises(ValueError):
        coarsen_noise(draw_noise(7, [0], 64, 1, 1), 4)


def test_martingale_small_sample():
    g = TimeGrid(1.0, 32)
    ens = simulate_ensemble(JUMPY, constant_policy(0), g, seed=11, n_paths=20000)
    xt = ens.x[:, -1, 0]
    assert abs(xt.mean()) < 4 * xt.std(ddof=1) / np.sqrt(xt.size)


def test_stochastic_exponential_of_array():
    x = np.array([[0.0], [0.1], [-0.05], [0.2]])
    s = stochastic_exponential(x).s
    assert np.allclose(s[:, 0], [1.0, 1.1, 1.1 * (1 - 0.15), 1.1 * 0.85 * 1.25])


def test_stochastic_exponential_raises_on_nonpositive_factor():
    with pytest.raises(PositivityError):
        stochastic_exponential(np.array([[0.0], [-1.5]]))


def test_jump_factors_keep_prices_positive():
    # large intensity makes multiple -0.5 jumps per step common
    th = build_theta([(0.04, LevyMeasure.atom(-0.5, 40.0))])
    ens = simulate_ensemble(th, constant_policy(0), TimeGrid(1.0, 8), seed=0, n_paths=500)
    assert np.any(ens.counts >= 2)
    assert np.all(stochastic_exponential(ens).s > 0)


def test_linear_price():
    x = np.zeros((3, 1))
    assert np.all(linear_price(x).s == 1.0)


def test_stochastic_integral_telescopes():
    rng = np.random.default_rng(0)
    s = 1 + rng.standard_normal((4, 11, 2)).cumsum(axis=1) * 0.01
    gains = stochastic_integral(np.ones((4, 10, 2)), s)
    assert gains.shape == (4, 11)
    assert np.allclose(gains[:, -1], (s[:, -1] - s[:, 0]).sum(axis=-1))
    with pytest.raises(ValueError):
        stochastic_integral(np.ones((4, 9, 2)), s)


def test_csv_round_trip(tmp_path):
    g = TimeGrid(1.0, 5)
    ens = simulate_ensemble(JUMPY, constant_policy(0), g, seed=2, n_paths=3)
    p = tmp_path / "paths.csv"
    write_ensemble_csv(p, ens, header=["seed=2"])
    assert p.read_text().startswith("# seed=2\n")
    back = read_ensemble_csv(p)
    assert np.array_equal(back["x"], ens.x)
    assert np.array_equal(back["t"], g.times)
