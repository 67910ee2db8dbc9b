import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aracusum.model import ObservationBatch
from aracusum.posterior import (
    PosteriorState,
    PriorConfig,
    posterior_from_history,
    posterior_init,
    posterior_moments,
    posterior_update,
)


def replay(prior, history, K):
    state = posterior_init(prior, K)
    for batch in history:
        state = posterior_update(state, batch, prior)
    return state


def test_init_default_prior():
    prior = PriorConfig(19.5, 1930.5, 0.3)
    state = posterior_init(prior, 39)
    assert state.num_regions == 39
    assert np.all(state.alpha == 19.5) and np.all(state.beta == 1930.5)
    mean, _ = posterior_moments(state, 0)
    assert mean == pytest.approx(0.01, rel=1e-12)


def test_prior_from_budget_matches_default_values():
    prior = PriorConfig.from_budget(0.01, 3900)
    assert prior.a == pytest.approx(19.5)
    assert prior.b == pytest.approx(1930.5)
    assert PriorConfig.from_rate(0.01, 0.1).b == pytest.approx(9.9)


def test_uniform_prior():
    state = posterior_init(PriorConfig(1, 1), 2)
    assert posterior_moments(state, 1) == pytest.approx((0.5, 1 / 12))


def test_weighted_update_hand_example():
    prior = PriorConfig(1, 1, 0.3)
    history = [ObservationBatch(1, [10], [1]), ObservationBatch(2, [10], [2])]
    state = replay(prior, history, 1)
    # alpha = 1 + 1*0.3 + 2, beta = 1 + 9*0.3 + 8
    assert state.alpha[0] == pytest.approx(3.3)
    assert state.beta[0] == pytest.approx(11.7)
    direct = posterior_from_history(prior, history)
    assert direct.alpha[0] == pytest.approx(3.3, rel=1e-9)
    assert direct.beta[0] == pytest.approx(11.7, rel=1e-9)


def test_moments_of_updated_posterior():
    state = PosteriorState(np.array([3.3]), np.array([11.7]))
    mean, var = posterior_moments(state, 0)
    assert mean == pytest.approx(0.22)
    assert var == pytest.approx(0.0107, abs=1e-4)


def test_single_day_default_prior():
    prior = PriorConfig(19.5, 1930.5, 0.3)
    state = posterior_from_history(prior, [ObservationBatch(1, [100], [5])])
    assert state.alpha[0] == pytest.approx(24.5)
    assert state.beta[0] == pytest.approx(2025.5)


def test_unit_decay_is_plain_conjugate_update():
    prior = PriorConfig(2, 3, 1.0)
    rng = np.random.default_rng(3)
    tests = rng.integers(0, 50, size=(20, 4))
    pos = rng.binomial(tests, 0.1)
    history = [ObservationBatch(t + 1, tests[t], pos[t]) for t in range(20)]
    state = replay(prior, history, 4)
    assert np.allclose(state.alpha, 2 + pos.sum(axis=0))
    assert np.allclose(state.beta, 3 + (tests - pos).sum(axis=0))


def test_empty_history_is_prior():
    prior = PriorConfig(2, 3, 0.5)
    state = posterior_from_history(prior, [], num_regions=3)
    assert np.all(state.alpha == 2) and np.all(state.beta == 3) and state.time == 0


def test_zero_positives_leave_alpha_at_prior():
    prior = PriorConfig(2, 3, 0.5)
    history = [ObservationBatch(t, [10, 7], [0, 0]) for t in (1, 2, 3)]
    assert np.all(posterior_from_history(prior, history).alpha == 2)


def test_errors():
    with pytest.raises(ValueError):
        PriorConfig(0, 1)
    with pytest.raises(ValueError):
        PriorConfig(1, 1, 0.0)
    with pytest.raises(ValueError):
        PriorConfig(1, 1, 1.5)
    prior = PriorConfig(1, 1)
    with pytest.raises(ValueError):
        posterior_from_history(prior, [ObservationBatch(2, [1], [0]), ObservationBatch(1, [1], [0])])
    with pytest.raises(ValueError):
        posterior_update(posterior_init(prior, 2), ObservationBatch(1, [1], [0]), prior)
    with pytest.raises(ValueError):
        posterior_update(posterior_init(prior, 1), ObservationBatch(3, [1], [0]), prior)


@st.composite
def histories(draw):
    K = draw(st.integers(1, 5))
    T = draw(st.integers(0, 50))
    w = draw(st.sampled_from([0.01, 0.3, 0.6, 1.0]))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    tests = rng.integers(0, 201, size=(T, K))
    pos = rng.binomial(tests, rng.uniform(0, 1, size=K))
    return K, w, [ObservationBatch(t + 1, tests[t], pos[t]) for t in range(T)]


@given(histories())
def test_recursive_matches_direct_sum(case):
    K, w, history = case
    prior = PriorConfig(19.5, 1930.5, w)
    rec = replay(prior, history, K)
    direct = posterior_from_history(prior, history, num_regions=K)
    np.testing.assert_allclose(rec.alpha, direct.alpha, rtol=1e-9)
    np.testing.assert_allclose(rec.beta, direct.beta, rtol=1e-9)
    assert rec.time == direct.time == len(history)


@given(histories())
def test_bounded_and_mean_in_unit_interval(case):
    K, w, history = case
    prior = PriorConfig(0.5, 2.0, w)
    state = replay(prior, history, K)
    assert np.all(state.alpha >= prior.a) and np.all(state.beta >= prior.b)
    if w < 1:
        assert np.all(state.alpha <= prior.a + 200 / (1 - w) + 1e-9)
    for k in range(K):
        mean, var = posterior_moments(state, k)
        assert 0 < mean < 1 and var > 0
