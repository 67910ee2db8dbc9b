import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aracusum.allocators import AllocatorPolicy, allocate, even_counts
from aracusum.model import CusumState
from aracusum.planner import greedy_allocate
from aracusum.posterior import PosteriorState, PriorConfig, posterior_init


def states(stats, prior=PriorConfig(19.5, 1930.5)):
    stats = np.asarray(stats, float)
    return CusumState(stats), posterior_init(prior, len(stats))


def test_even_default_split():
    cusum, posterior = states(np.zeros(39))
    alloc = allocate(AllocatorPolicy("even"), cusum, posterior, 3900)
    assert np.all(alloc.counts == 100)


def test_even_remainder_to_lowest_indices():
    cusum, posterior = states(np.zeros(3))
    assert allocate(AllocatorPolicy("even"), cusum, posterior, 5).as_tuple() == (2, 2, 1)


def test_even_ignores_state():
    c1, posterior = states(np.zeros(6))
    c2, _ = states([5, -1, 3, 0, 2, 9])
    pol = AllocatorPolicy("even")
    assert allocate(pol, c1, posterior, 17) == allocate(pol, c2, posterior, 17)


def test_topr_default_batches():
    stats = np.linspace(-3, 5, 39)[::-1].copy()
    np.random.default_rng(0).shuffle(stats)
    cusum, posterior = states(stats)
    alloc = allocate(AllocatorPolicy("topr", 20, 20), cusum, posterior, 3900)
    top = np.argsort(-stats)[:20]
    assert set(np.flatnonzero(alloc.counts)) == set(top)
    assert np.all(alloc.counts[top] == 195)


def test_topr_ties_pick_lowest_indices():
    cusum, posterior = states(np.zeros(39))
    alloc = allocate(AllocatorPolicy("topr", 20, 20), cusum, posterior, 3900)
    assert np.all(alloc.counts[:20] == 195) and np.all(alloc.counts[20:] == 0)


def test_topr_round_robin_when_batches_exceed_regions():
    cusum, posterior = states([0, 3, 1, 2])
    alloc = allocate(AllocatorPolicy("topr", num_batches=5, top_r=2), cusum, posterior, 10)
    assert alloc.as_tuple() == (0, 6, 0, 4)


def test_topr_errors():
    cusum, posterior = states(np.zeros(5))
    with pytest.raises(ValueError):
        allocate(AllocatorPolicy("topr", 3, 3), cusum, posterior, 10)
    with pytest.raises(ValueError):
        allocate(AllocatorPolicy("topr", 6, 6), cusum, posterior, 12)
    with pytest.raises(ValueError):
        AllocatorPolicy("thompson")


def test_ara_delegates_to_greedy():
    posterior = PosteriorState(np.array([3.0, 1.0, 2.0]), np.array([1.0, 3.0, 2.0]))
    cusum = CusumState(np.zeros(3))
    assert allocate(AllocatorPolicy("ara"), cusum, posterior, 11) == greedy_allocate(posterior, 11)


@given(st.sampled_from(["ara", "even", "topr"]), st.integers(1, 40), st.integers(1, 50), st.integers(0, 999))
def test_every_policy_spends_the_budget(kind, K, batches, seed):
    rng = np.random.default_rng(seed)
    top_r = min(batches, K)
    budget = batches * int(rng.integers(1, 60))
    cusum = CusumState(rng.normal(size=K))
    posterior = PosteriorState(rng.uniform(0.1, 50, K), rng.uniform(0.1, 5000, K))
    alloc = allocate(AllocatorPolicy(kind, batches, top_r), cusum, posterior, budget)
    assert alloc.counts.sum() == budget
    if kind == "topr" and batches == top_r:
        assert np.count_nonzero(alloc.counts) == top_r


def test_even_counts_helper():
    assert list(even_counts(4, 10)) == [3, 3, 2, 2]
