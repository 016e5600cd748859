import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import black_scholes_call, fd_delta, penrose_defects, random_psd

from robusthedge import decomposition as dec
from robusthedge import robust_pricer as rp
from robusthedge.levy_model import build_theta, parametric_theta
from robusthedge.path_engine import TimeGrid, constant_policy, simulate_ensemble, stochastic_exponential


@settings(max_examples=60)
@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_pseudoinverse_penrose(d, rank, seed):
    rng = np.random.default_rng(seed)
    a = random_psd(rng, d, min(rank, d))
    g = dec.pseudoinverse(a)
    assert max(penrose_defects(a, g)) < 1e-9
    assert np.allclose(g, np.linalg.pinv(a, rcond=1e-10, hermitian=True), atol=1e-8 * max(1, np.abs(g).max()))


def test_pseudoinverse_of_zero_and_stacks():
    assert np.array_equal(dec.pseudoinverse(np.zeros((2, 2))), np.zeros((2, 2)))
    rng = np.random.default_rng(0)
    stack = np.stack([random_psd(rng, 3, r) for r in (1, 2, 3)])
    g = dec.pseudoinverse(stack)
    for a, gi in zip(stack, g):
        assert max(penrose_defects(a, gi)) < 1e-9


def test_psd_projection():
    m = np.diag([2.0, -1.0])
    assert np.allclose(dec.psd_projection(m), np.diag([2.0, 0.0]))


def test_hedge_ratio_minimal_norm_solution():
    # rank-deficient c_S: H solves H c_S = c_SY with no component in the kernel
    c_s = np.array([[1.0, 1.0], [1.0, 1.0]])
    c_sy = np.array([2.0, 2.0])
    H = dec.hedge_ratio(c_sy, c_s).H
    assert np.allclose(H @ c_s, c_sy)
    assert np.allclose(H, [1.0, 1.0])


def test_jump_threshold_flags_jump():
    rng = np.random.default_rng(1)
    dt = 1 / 1024
    ds = 0.2 * np.sqrt(dt) * rng.standard_normal(1024)
    ds[500] += 0.3
    u = dec.jump_threshold(ds, dt, 32)
    assert np.all(np.isinf(u[:2]))
    assert abs(ds[500]) > u[500]
    assert np.mean(np.abs(ds) > u) < 0.01


def test_zero_over_zero_rule():
    s = np.ones(20)
    y = np.linspace(0, 1, 20)
    jc = dec.empirical_joint_characteristics(s, y, threshold=np.inf)
    c_s, c_sy = dec.lebesgue_derivative(jc, lag=4)
    assert np.all(c_s == 0) and np.all(c_sy == 0)
    assert np.all(dec.hedge_ratio(c_sy, c_s).H == 0)


def test_empirical_route_recovers_linear_dependence():
    # Y = 3 S exactly: every covariation ratio equals 3
    rng = np.random.default_rng(2)
    s = 1 + np.cumsum(0.01 * rng.standard_normal(257))
    st_ = dec.empirical_strategy(s, 3 * s, dt=1 / 256, lag=8)
    assert st_.H.shape == (256, 1)
    assert np.allclose(st_.H[8:], 3.0)
    assert st_.provenance == "empirical"


def test_strict_mode_zeroes_non_psd():
    C = np.zeros((3, 3, 3))
    C[1, :2, :2] = [[1.0, 2.0], [2.0, 1.0]]  # indefinite after differencing
    C[2] = C[1] * 2
    jc = dec.JointCharacteristics(C, np.trace(C[:, :2, :2], axis1=1, axis2=2), np.zeros(2, bool))
    projected, _ = dec.lebesgue_derivative(jc, lag=1)
    zeroed, _ = dec.lebesgue_derivative(jc, lag=1, strict=True)
    assert np.all(np.linalg.eigvalsh(projected[1]) >= -1e-12)
    assert np.all(zeroed[1] == 0)


def test_analytic_hedge_is_black_scholes_delta():
    th = build_theta([(0.04, None)])
    grid = TimeGrid(1.0, 128)
    lat = rp.Lattice.for_theta(th, grid, 801)
    _, vf = rp.price(rp.call(1.0), th, lat)
    f = dec.analytic_characteristics(vf, lat, th)
    H = dec.hedge_ratio(f.c_sy[0][:, None], f.c_s[0][:, None, None], "analytic").H[:, 0]
    S = lat.prices
    inner = (S > 0.7) & (S < 1.4)
    delta = fd_delta(lambda s: black_scholes_call(s, sigma=0.2), S[inner])
    assert np.max(np.abs(H[inner] / delta - 1)) < 0.01


def test_analytic_strategy_along_paths_shapes():
    th = parametric_theta((0.1, 0.3, 3))
    grid = TimeGrid(1.0, 32)
    lat = rp.Lattice.for_theta(th, grid, 201)
    _, vf = rp.price(rp.call(1.0), th, lat)
    ens = simulate_ensemble(th, constant_policy(2), grid, seed=0, n_paths=4)
    s = stochastic_exponential(ens).s
    H = dec.analytic_strategy(vf, lat, th)(ens.x, s)
    assert H.shape == (4, 32, 1)
    # delta of a call, up to interpolation between nodes
    assert np.all((H >= -1e-3) & (H <= 1 + 1e-3))


def test_empirical_tracks_analytic_on_fine_grid():
    th = build_theta([(0.04, None)])
    grid = TimeGrid(1.0, 4096)
    lat = rp.Lattice.for_theta(th, grid, 401)
    _, vf = rp.price(rp.call(1.0), th, lat)
    ens = simulate_ensemble(th, constant_policy(0), grid, seed=3, n_paths=3)
    s = stochastic_exponential(ens).s
    y = rp.value_along_path(vf, s, lat).y
    ana = dec.analytic_strategy(vf, lat, th)(ens.x, s)
    for m in range(3):
        emp = dec.empirical_strategy(s[m], y[m], grid.dt).H
        assert np.median(np.abs(emp - ana[m])[64:]) < 0.1
