"""Binomial hotspot model and the per-region CUSUM monitoring statistic.

Each region ``k`` is tested ``c_k`` times a day and returns ``X_k`` positives,
``X_k ~ Bin(c_k, p)`` in control and ``Bin(c_k, q)`` for a hotspot after the
change. The statistic

    W_{k,t} = max(W_{k,t-1}, 0) + c_k log((1-q)/(1-p)) + X_k log(q(1-p) / (p(1-q)))

is kept for every region and an alarm fires once ``max_k W_k`` exceeds the
threshold ``h``. Natural logs throughout; thresholds are in nats.

Region indices are 0-based everywhere in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the K-region binomial change model.

    ``change_time`` is the last in-control day ``t0``: hotspot regions switch
    to ``out_of_control_rate`` from day ``t0 + 1``. ``None`` means the change
    never happens.
    """

    num_regions: int
    in_control_rate: float
    out_of_control_rate: float
    budget: int
    threshold: float = 0.0
    hotspot_set: frozenset = field(default_factory=frozenset)
    change_time: Optional[int] = 0

    def __post_init__(self) -> None:
        if int(self.num_regions) != self.num_regions or self.num_regions < 1:
            raise ValueError("num_regions must be a positive integer")
        if int(self.budget) != self.budget or self.budget < 1:
            raise ValueError("budget must be a positive integer")
        p, q = self.in_control_rate, self.out_of_control_rate
        if not (0.0 < p < q < 1.0):
            raise ValueError(f"rates must satisfy 0 < p < q < 1, got p={p}, q={q}")
        if not math.isfinite(self.threshold) and self.threshold != math.inf:
            raise ValueError("threshold must be a real number")
        hs = frozenset(int(k) for k in self.hotspot_set)
        if any(k < 0 or k >= self.num_regions for k in hs):
            raise ValueError(f"hotspot_set must be a subset of 0..{self.num_regions - 1}")
        object.__setattr__(self, "hotspot_set", hs)
        if self.change_time is not None and self.change_time < 0:
            raise ValueError("change_time must be >= 0 or None")

    @property
    def log_ratio_coefficients(self) -> tuple[float, float]:
        """``(log((1-q)/(1-p)), log(q(1-p)/(p(1-q))))``."""
        return _coefficients(self.in_control_rate, self.out_of_control_rate)

    def rates_at(self, t: int) -> np.ndarray:
        """True per-region positive rate on day ``t`` (1-based)."""
        rates = np.full(self.num_regions, self.in_control_rate)
        if self.change_time is not None and t > self.change_time and self.hotspot_set:
            rates[sorted(self.hotspot_set)] = self.out_of_control_rate
        return rates


@dataclass(frozen=True, eq=False)
class ObservationBatch:
    """Tests sent to and positives returned from each region on day ``time``."""

    time: int
    tests: np.ndarray
    positives: np.ndarray

    def __post_init__(self) -> None:
        tests = _frozen(self.tests, np.int64)
        pos = _frozen(self.positives, np.int64)
        if tests.ndim != 1 or tests.shape != pos.shape:
            raise ValueError("tests and positives must be 1-D and of equal length")
        if np.any(tests < 0) or np.any(pos < 0) or np.any(pos > tests):
            raise ValueError("need 0 <= positives <= tests in every region")
        if self.time < 1:
            raise ValueError("observation time must be >= 1")
        object.__setattr__(self, "tests", tests)
        object.__setattr__(self, "positives", pos)

    @property
    def num_regions(self) -> int:
        return self.tests.shape[0]


@dataclass(frozen=True, eq=False)
class CusumState:
    stats: np.ndarray
    time: int = 0

    def __post_init__(self) -> None:
        stats = _frozen(self.stats, np.float64)
        if stats.ndim != 1 or not np.all(np.isfinite(stats)):
            raise ValueError("stats must be a 1-D vector of finite reals")
        object.__setattr__(self, "stats", stats)

    @classmethod
    def initial(cls, num_regions: int) -> "CusumState":
        return cls(np.zeros(num_regions), 0)

    @property
    def num_regions(self) -> int:
        return self.stats.shape[0]


@dataclass(frozen=True)
class AlarmReport:
    fired: bool
    region: Optional[int] = None


def _coefficients(p: float, q: float) -> tuple[float, float]:
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise ValueError(f"rates must lie in (0, 1), got p={p}, q={q}")
    per_test = math.log((1.0 - q) / (1.0 - p))
    per_positive = math.log(q * (1.0 - p) / (p * (1.0 - q)))
    return per_test, per_positive


def llr_increment(c_tests: int, x_pos: int, p: float, q: float) -> float:
    """Log-likelihood ratio ``log Bin(x; c, q) / Bin(x; c, p)`` in closed form.

    The binomial coefficients cancel, leaving a term linear in the test count
    and a term linear in the positive count. ``c_tests = 0`` gives 0.
    """
    if c_tests < 0 or x_pos < 0 or x_pos > c_tests:
        raise ValueError(f"need 0 <= x_pos <= c_tests, got x={x_pos}, c={c_tests}")
    per_test, per_positive = _coefficients(p, q)
    return c_tests * per_test + x_pos * per_positive


def llr_vector(tests: np.ndarray, positives: np.ndarray, p: float, q: float) -> np.ndarray:
    """Vectorised :func:`llr_increment`; no domain checks (hot path)."""
    per_test, per_positive = _coefficients(p, q)
    return tests * per_test + positives * per_positive


def cusum_step(state: CusumState, batch: ObservationBatch, params: ModelParams) -> CusumState:
    """Advance every region's statistic by one day.

    The clamp acts on the previous value, so a fresh negative increment
    survives into the stored state.
    """
    if batch.num_regions != state.num_regions or state.num_regions != params.num_regions:
        raise ValueError(
            f"dimension mismatch: state has {state.num_regions} regions, "
            f"batch {batch.num_regions}, params {params.num_regions}"
        )
    if batch.time != state.time + 1:
        raise ValueError(f"batch for day {batch.time} cannot follow state at day {state.time}")
    inc = llr_vector(batch.tests, batch.positives, params.in_control_rate, params.out_of_control_rate)
    return CusumState(np.maximum(state.stats, 0.0) + inc, batch.time)


def check_alarm(state: CusumState, threshold: float) -> AlarmReport:
    """Fire when the largest statistic strictly exceeds ``threshold``.

    ``np.argmax`` returns the first maximiser, so ties go to the lowest index.
    """
    if state.num_regions == 0:
        return AlarmReport(False)
    k = int(np.argmax(state.stats))
    if state.stats[k] > threshold:
        return AlarmReport(True, k)
    return AlarmReport(False)

