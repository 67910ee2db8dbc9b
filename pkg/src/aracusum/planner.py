"""Upper-confidence-bound reward and the budgeted test allocation.

For a region with posterior ``Beta(alpha, beta)`` the planning reward of
sending it ``c`` tests is

    f(c) = alpha/(alpha+beta) * c
           + sqrt(c * alpha*beta / ((alpha+beta)(alpha+beta+1)) * (c/(alpha+beta) + 1))

i.e. the posterior-predictive mean plus standard deviation of the positive
count, with the terms that do not depend on the allocation removed (so the
rates ``p`` and ``q`` never enter). ``f`` is increasing and concave, so the
greedy that hands out tests one at a time to the largest marginal gain finds
the global optimum of ``sum_k f_k(c_k)`` subject to ``sum_k c_k = C``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import _frozen
from .posterior import PosteriorState

BRUTE_FORCE_MAX_REGIONS = 6
BRUTE_FORCE_MAX_BUDGET = 15


@dataclass(frozen=True, eq=False)
class AllocationVector:
    counts: np.ndarray
    budget: int

    def __post_init__(self) -> None:
        counts = _frozen(self.counts, np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise ValueError("allocation counts must be a 1-D vector of nonnegative integers")
        if int(counts.sum()) != self.budget:
            raise ValueError(f"allocation sums to {int(counts.sum())}, budget is {self.budget}")
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AllocationVector):
            return NotImplemented
        return self.budget == other.budget and np.array_equal(self.counts, other.counts)

    def __len__(self) -> int:
        return self.counts.shape[0]

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.counts)


def _check_shape(alpha: float, beta: float) -> tuple[float, float, float]:
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"alpha and beta must be positive, got {alpha}, {beta}")
    n = alpha + beta
    return alpha / n, alpha * beta / (n * (n + 1.0)), n


def reward(c: int, alpha: float, beta: float) -> float:
    if c < 0:
        raise ValueError("test count must be nonnegative")
    m, s, n = _check_shape(alpha, beta)
    return m * c + math.sqrt(s * c * (c / n + 1.0))


def reward_increment(c: int, alpha: float, beta: float) -> float:
    """Gain ``f(c + 1) - f(c)`` from one more test.

    Computed without subtracting two nearly equal square roots, so the
    sequence stays monotone in floating point for large ``c``.
    """
    if c < 0:
        raise ValueError("test count must be nonnegative")
    m, s, n = _check_shape(alpha, beta)
    c = float(c)
    h0 = s * c * (c / n + 1.0)
    h1 = s * (c + 1.0) * ((c + 1.0) / n + 1.0)
    return m + s * (1.0 + (2.0 * c + 1.0) / n) / (math.sqrt(h1) + math.sqrt(h0))


def reward_increments(counts, alpha, beta) -> np.ndarray:
    """Broadcasting version of :func:`reward_increment`."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    c = np.asarray(counts, dtype=np.float64)
    if np.any(alpha <= 0) or np.any(beta <= 0) or np.any(c < 0):
        raise ValueError("need alpha, beta > 0 and nonnegative counts")
    n = alpha + beta
    m = alpha / n
    s = alpha * beta / (n * (n + 1.0))
    h0 = s * c * (c / n + 1.0)
    h1 = s * (c + 1.0) * ((c + 1.0) / n + 1.0)
    return m + s * (1.0 + (2.0 * c + 1.0) / n) / (np.sqrt(h1) + np.sqrt(h0))


def objective(counts, alpha, beta) -> float:
    """Total reward ``sum_k f_k(c_k)`` of an allocation."""
    return math.fsum(reward(int(c), float(a), float(b)) for c, a, b in zip(counts, alpha, beta))


def greedy_counts(alpha: np.ndarray, beta: np.ndarray, budget: int) -> np.ndarray:
    """Greedy allocation as a plain int array (simulation hot path).

    Ties between regions with equal marginal gain go to the lowest index.
    """
    return _kernels.greedy_fast(
        np.ascontiguousarray(alpha, dtype=np.float64),
        np.ascontiguousarray(beta, dtype=np.float64),
        int(budget),
    )


def greedy_allocate(posterior: PosteriorState, budget: int) -> AllocationVector:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    return AllocationVector(greedy_counts(posterior.alpha, posterior.beta, budget), budget)


def _compositions(total: int, parts: int):
    # stars and bars: choose positions of the parts - 1 bars among total + parts - 1 slots
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 1 - prev - 1)
        yield out


def brute_force_allocate(posterior: PosteriorState, budget: int) -> AllocationVector:
    """Best allocation by enumerating every composition of ``budget``.

    Only for small instances; used to check the greedy. The first maximiser
    in enumeration order is returned.
    """
    K = posterior.num_regions
    if K > BRUTE_FORCE_MAX_REGIONS or budget > BRUTE_FORCE_MAX_BUDGET:
        raise ValueError(
            f"instance too large for enumeration (K={K}, C={budget}; "
            f"limits {BRUTE_FORCE_MAX_REGIONS}, {BRUTE_FORCE_MAX_BUDGET})"
        )
    if budget < 1:
        raise ValueError("budget must be >= 1")
    alpha = [float(a) for a in posterior.alpha]
    beta = [float(b) for b in posterior.beta]
    table = [[reward(c, a, b) for c in range(budget + 1)] for a, b in zip(alpha, beta)]
    best = None
    best_value = -math.inf
    for comp in _compositions(budget, K):
        value = math.fsum(table[k][c] for k, c in enumerate(comp))
        if value > best_value:
            best, best_value = comp, value
    return AllocationVector(np.array(best), budget)
