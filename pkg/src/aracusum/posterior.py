"""Exponentially weighted Beta posterior of each region's positive rate.

With prior ``Beta(a, b)`` and decay ``w``, after day ``T``

    alpha_k = a + sum_t X_{k,t} w^(T-t)
    beta_k  = b + sum_t (c_{k,t} - X_{k,t}) w^(T-t)

The prior itself is never discounted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ObservationBatch, _frozen


@dataclass(frozen=True)
class PriorConfig:
    a: float
    b: float
    decay: float = 0.3

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"prior parameters must be positive, got a={self.a}, b={self.b}")
        if not (0.0 < self.decay <= 1.0):
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")

    @classmethod
    def from_rate(cls, rate: float, a: float, decay: float = 0.3) -> "PriorConfig":
        """Prior with mean ``rate`` and first shape parameter ``a``."""
        return cls(a, a * (1.0 - rate) / rate, decay)

    @classmethod
    def from_budget(cls, rate: float, budget: int, share: float = 0.5, decay: float = 0.3) -> "PriorConfig":
        """Prior worth ``share * budget`` pseudo-tests centred on ``rate``.

        ``from_budget(0.01, 3900)`` gives ``Beta(19.5, 1930.5)``.
        """
        strength = share * budget
        return cls(strength * rate, strength * (1.0 - rate), decay)


@dataclass(frozen=True, eq=False)
class PosteriorState:
    alpha: np.ndarray
    beta: np.ndarray
    time: int = 0

    def __post_init__(self) -> None:
        alpha = _frozen(self.alpha, np.float64)
        beta = _frozen(self.beta, np.float64)
        if alpha.shape != beta.shape or alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-D vectors of equal length")
        if np.any(alpha <= 0) or np.any(beta <= 0):
            raise ValueError("Beta parameters must be positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def num_regions(self) -> int:
        return self.alpha.shape[0]


def posterior_init(prior: PriorConfig, num_regions: int) -> PosteriorState:
    if num_regions < 1:
        raise ValueError("num_regions must be >= 1")
    return PosteriorState(np.full(num_regions, prior.a), np.full(num_regions, prior.b), 0)


def weighted_update(alpha, beta, tests, positives, prior: PriorConfig):
    """Array form of one recursive update; returns new ``(alpha, beta)``."""
    w = prior.decay
    new_alpha = prior.a + w * (alpha - prior.a) + positives
    new_beta = prior.b + w * (beta - prior.b) + (tests - positives)
    return new_alpha, new_beta


def posterior_update(state: PosteriorState, batch: ObservationBatch, prior: PriorConfig) -> PosteriorState:
    """Discount yesterday's evidence by ``w`` and add today's counts.

    Constant work per day; agrees with :func:`posterior_from_history` up to
    rounding.
    """
    if batch.num_regions != state.num_regions:
        raise ValueError(f"dimension mismatch: {batch.num_regions} vs {state.num_regions} regions")
    if batch.time != state.time + 1:
        raise ValueError(f"batch for day {batch.time} cannot follow posterior at day {state.time}")
    alpha, beta = weighted_update(state.alpha, state.beta, batch.tests, batch.positives, prior)
    return PosteriorState(alpha, beta, batch.time)


def posterior_from_history(prior: PriorConfig, history: Sequence[ObservationBatch],
                           num_regions: int | None = None) -> PosteriorState:
    """Direct weighted sum over the whole history.

    ``history`` must be consecutive days starting at 1. An empty history needs
    ``num_regions`` and returns the prior.
    """
    if not history:
        if num_regions is None:
            raise ValueError("num_regions is required for an empty history")
        return posterior_init(prior, num_regions)
    times = [batch.time for batch in history]
    if times != list(range(1, len(history) + 1)):
        raise ValueError(f"history must cover days 1..T in order, got {times[:5]}...")
    T = len(history)
    K = history[0].num_regions
    if num_regions is not None and num_regions != K:
        raise ValueError("num_regions does not match the history")
    pos_sum = np.zeros(K)
    neg_sum = np.zeros(K)
    for batch in history:
        if batch.num_regions != K:
            raise ValueError("inconsistent region count in history")
        weight = prior.decay ** (T - batch.time)
        pos_sum += weight * batch.positives
        neg_sum += weight * (batch.tests - batch.positives)
    return PosteriorState(prior.a + pos_sum, prior.b + neg_sum, T)


def posterior_moments(state: PosteriorState, k: int) -> tuple[float, float]:
    """Mean and variance of region ``k``'s Beta posterior."""
    if not 0 <= k < state.num_regions:
        raise IndexError(f"region {k} out of range")
    a = float(state.alpha[k])
    b = float(state.beta[k])
    n = a + b
    return a / n, a * b / (n * n * (n + 1.0))
