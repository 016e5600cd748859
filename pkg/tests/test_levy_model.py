import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robusthedge.levy_model import (
    ConditionError,
    LevyMeasure,
    LevyTriplet,
    TruncationFunction,
    build_theta,
    check_jump_support,
    check_saturation,
    drift_completion,
    has_dominating_diffusion,
    is_integrable_jumps,
    parametric_theta,
)

atom_loc = st.floats(-3, 3).filter(lambda x: abs(x) > 1e-3)
atom_mass = st.floats(1e-3, 5)


# truncation ---------------------------------------------------------------

@given(st.floats(0.05, 5), st.floats(-10, 10))
def test_truncation_identity_near_zero_and_bounded(r, x):
    h = TruncationFunction(r)
    v = float(h(np.array([[x]]))[0, 0])
    assert abs(v) <= r
    if abs(x) <= r:
        assert v == x
    assert float(h(np.array([[0.0]]))[0, 0]) == 0.0


def test_truncation_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        TruncationFunction(0.0)


# jump measures -------------------------------------------------------------

def test_measure_rejects_atom_at_origin():
    with pytest.raises(ValueError):
        LevyMeasure([[0.0]], [1.0])


def test_measure_rejects_nonpositive_mass():
    with pytest.raises(ValueError):
        LevyMeasure([[1.0]], [0.0])


@pytest.mark.parametrize("F, value", [
    (LevyMeasure.zero(1), 0.0),
    (LevyMeasure.atom(2.0, 3.0), 6.0),
    (LevyMeasure([0.5, -0.25], [1.0, 4.0]), 0.5),
])
def test_integrable_jumps_examples(F, value):
    ok, integral = is_integrable_jumps(F)
    assert ok
    assert integral == pytest.approx(value, abs=1e-15)


def test_drift_completion_examples():
    h = TruncationFunction(1.0)
    lam = 0.7
    assert np.all(drift_completion(LevyMeasure.zero(1), h) == 0.0)
    assert np.all(drift_completion(LevyMeasure.atom(0.5, lam), h) == 0.0)
    assert drift_completion(LevyMeasure.atom(2.0, lam), h)[0] == pytest.approx(-2 * lam)


# dominating diffusion ------------------------------------------------------

@pytest.mark.parametrize("c, F, expected", [
    (1.0, LevyMeasure.atom(1.0, 1.0), True),
    (0.0, LevyMeasure.atom(1.0, 1.0), False),
    (0.0, LevyMeasure.zero(1), True),
])
def test_dominating_diffusion_examples(c, F, expected):
    assert has_dominating_diffusion(np.array([[c]]), F) is expected


@settings(max_examples=50)
@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_dominating_diffusion_matches_smallest_eigenvalue(d, rank, seed):
    rng = np.random.default_rng(seed)
    rank = min(rank, d)
    b = rng.standard_normal((d, rank))
    c = b @ b.T
    assert has_dominating_diffusion(c, LevyMeasure.zero(d))
    F = LevyMeasure(rng.uniform(0.1, 1.0, (1, d)), [1.0])
    assert has_dominating_diffusion(c, F) == (rank == d)


# build_theta ---------------------------------------------------------------

def test_build_theta_examples():
    lam = 0.3
    th = build_theta([(1.0, None)])
    assert th[0].b[0] == 0.0 and th[0].c[0, 0] == 1.0 and th[0].F.is_zero
    th = build_theta([(1.0, LevyMeasure.atom(2.0, lam))])
    assert th[0].b[0] == pytest.approx(-2 * lam)
    with pytest.raises(ConditionError, match="dominating diffusion") as e:
        build_theta([(0.0, LevyMeasure.atom(1.0, 1.0))])
    assert e.value.index == 0


def test_build_theta_names_offending_pair():
    with pytest.raises(ConditionError) as e:
        build_theta([(1.0, None), (np.array([[-1.0]]), None)])
    assert e.value.index == 1
    assert e.value.condition == "positive semidefinite"


def test_build_theta_symmetrizes_diffusion():
    c = np.array([[1.0, 0.2], [0.0, 1.0]])
    th = build_theta([(c, None)])
    assert np.allclose(th[0].c, th[0].c.T)


@settings(max_examples=40)
@given(st.lists(st.tuples(atom_loc, atom_mass), min_size=1, max_size=4, unique_by=lambda t: t[0]),
       st.floats(0.01, 2))
def test_build_theta_idempotent(atoms, c):
    F = LevyMeasure([a for a, _ in atoms], [m for _, m in atoms])
    th = build_theta([(c, F)])
    again = build_theta([(t.c, t.F) for t in th])
    assert np.array_equal(again[0].b, th[0].b)


@settings(max_examples=40)
@given(st.lists(st.tuples(atom_loc, atom_mass), min_size=1, max_size=4, unique_by=lambda t: t[0]),
       st.floats(0.1, 3), st.floats(0.1, 3))
def test_truncation_change_moves_only_drift(atoms, r1, r2):
    locs = np.array([a for a, _ in atoms])
    masses = np.array([m for _, m in atoms])
    F = LevyMeasure(locs, masses)
    h1, h2 = TruncationFunction(r1), TruncationFunction(r2)
    t1 = build_theta([(1.0, F)], h1)[0]
    t2 = build_theta([(1.0, F)], h2)[0]
    assert np.array_equal(t1.c, t2.c) and t1.F.same_as(t2.F)
    # b = -∫(x - h)dF, so b1 - b2 = ∫(h1 - h2)dF
    expected = np.sum(masses * (np.where(np.abs(locs) <= r1, locs, 0) - np.where(np.abs(locs) <= r2, locs, 0)))
    assert t1.b[0] - t2.b[0] == pytest.approx(expected, abs=1e-12)
    assert t1.effective_drift[0] == pytest.approx(t2.effective_drift[0], abs=1e-12)


def test_with_truncation_recompletes():
    th = build_theta([(1.0, LevyMeasure.atom(0.75, 2.0))])
    th2 = th.with_truncation(TruncationFunction(0.5))
    assert th[0].b[0] == 0.0
    assert th2[0].b[0] == pytest.approx(-1.5)


# saturation ----------------------------------------------------------------

def test_saturation_pure_diffusion_passes():
    assert check_saturation(build_theta([(0.04, None), (0.09, None)])).passed


def test_saturation_scaling_family_passes():
    def member(c, F):
        return (np.allclose(c, 1.0) and F.locations.shape == (1, 1)
                and np.isclose(F.locations[0, 0], 1.0) and F.masses[0] > 0)

    th = build_theta([(1.0, LevyMeasure.atom(1.0, lam)) for lam in (0.5, 1.0, 2.0)], membership=member)
    rep = check_saturation(th, [lambda x: np.full(len(x), 2.0)])
    assert rep.passed and rep.checked == 3


def test_saturation_counterexample_fails():
    # singleton (0, 0, delta_1) with closed membership
    th = build_theta([(0.0, LevyMeasure.atom(1.0, 1.0))], strict=False)
    rep = check_saturation(th, [lambda x: np.full(len(x), 2.0)])
    assert not rep.passed
    assert rep.violation == (0, 0)
    assert "falsification" in rep.note


def test_saturation_rejects_nonpositive_density():
    th = build_theta([(1.0, LevyMeasure.atom(1.0, 1.0))])
    with pytest.raises(ValueError):
        check_saturation(th, [lambda x: np.zeros(len(x))])


def test_parametric_family_saturation():
    bounded = parametric_theta((0.2, 0.2, 1), [(-0.5, 0.0, 1.0, 3)])
    assert not check_saturation(bounded).passed
    unbounded = parametric_theta((0.2, 0.2, 1), [(-0.5, 0.0, np.inf, 3, 2.0)])
    assert check_saturation(unbounded).passed


def test_parametric_grid_layout():
    th = parametric_theta((0.1, 0.3, 3), [(-0.5, 0.0, 1.0, 2)])
    assert len(th) == 6
    assert np.allclose(np.sqrt(th.diffusions()[:, 0, 0]), [0.1, 0.1, 0.2, 0.2, 0.3, 0.3])
    assert np.allclose(th.mass_matrix()[:, 0], [0, 1, 0, 1, 0, 1])


def test_jump_support():
    assert check_jump_support(build_theta([(1.0, LevyMeasure.atom(-0.5, 1.0))])) is None
    assert check_jump_support(build_theta([(1.0, LevyMeasure.atom(-1.5, 1.0))])) == 0


def test_triplet_effective_drift_is_minus_mean_jump():
    F = LevyMeasure([2.0, -0.3], [0.5, 1.5])
    t = build_theta([(1.0, F)])[0]
    assert isinstance(t, LevyTriplet)
    assert t.effective_drift[0] == pytest.approx(-(2.0 * 0.5 - 0.3 * 1.5))
