"""Allocation policies compared in the experiments: ARA, Even and Top-R."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import CusumState
from .planner import AllocationVector, greedy_counts
from .posterior import PosteriorState

PolicyKind = Literal["ara", "even", "topr"]
POLICY_KINDS = ("ara", "even", "topr")


@dataclass(frozen=True)
class AllocatorPolicy:
    """Which policy to run and, for Top-R, how the budget is batched.

    Top-R splits the budget into ``num_batches`` equal batches and hands them
    round-robin to the ``top_r`` regions with the largest CUSUM statistics,
    so with ``num_batches == top_r`` each selected region gets one batch.
    """

    kind: PolicyKind = "ara"
    num_batches: int = 20
    top_r: int = 20

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.num_batches < 1 or self.top_r < 1:
            raise ValueError("num_batches and top_r must be >= 1")

    def validate_for(self, num_regions: int, budget: int) -> None:
        if self.kind != "topr":
            return
        if self.top_r > num_regions:
            raise ValueError(f"top_r={self.top_r} exceeds the number of regions {num_regions}")
        if budget % self.num_batches:
            raise ValueError(f"budget {budget} is not divisible into {self.num_batches} batches")

    @property
    def label(self) -> str:
        if self.kind == "topr":
            return f"topr(b={self.num_batches},r={self.top_r})"
        return self.kind


def even_counts(num_regions: int, budget: int) -> np.ndarray:
    """``budget // K`` each, remainder one apiece to the lowest indices."""
    counts = np.full(num_regions, budget // num_regions, dtype=np.int64)
    counts[: budget % num_regions] += 1
    return counts


def topr_counts(stats: np.ndarray, budget: int, num_batches: int, top_r: int) -> np.ndarray:
    # stable sort on -W: equal statistics keep index order
    ranked = np.argsort(-np.asarray(stats, dtype=np.float64), kind="stable")[:top_r]
    batch = budget // num_batches
    counts = np.zeros(len(stats), dtype=np.int64)
    per_region = np.full(top_r, num_batches // top_r, dtype=np.int64)
    per_region[: num_batches % top_r] += 1
    counts[ranked] = per_region * batch
    return counts


def allocation_counts(policy: AllocatorPolicy, stats: np.ndarray, alpha: np.ndarray,
                      beta: np.ndarray, budget: int) -> np.ndarray:
    """Array-level dispatch used inside the simulation loop."""
    if policy.kind == "ara":
        return greedy_counts(alpha, beta, budget)
    if policy.kind == "even":
        return even_counts(len(stats), budget)
    return topr_counts(stats, budget, policy.num_batches, policy.top_r)


def allocate(policy: AllocatorPolicy, cusum: CusumState, posterior: PosteriorState,
             budget: int) -> AllocationVector:
    K = cusum.num_regions
    if posterior.num_regions != K:
        raise ValueError(f"dimension mismatch: {K} CUSUM regions vs {posterior.num_regions} posterior regions")
    policy.validate_for(K, budget)
    counts = allocation_counts(policy, cusum.stats, posterior.alpha, posterior.beta, budget)
    return AllocationVector(counts, budget)
