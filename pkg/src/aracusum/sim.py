"""Monitoring loop, Monte Carlo replications and threshold calibration.

One simulated day:

1. sample positives for today's allocation,
2. discount-and-add the Beta posterior,
3. plan tomorrow's allocation from that posterior and the CUSUM statistics
   as they stood before today (day 1 is always the even split),
4. update the CUSUM statistics and check for an alarm.

Replication ``i`` draws from ``PCG64(base_seed + i)``, so results do not depend
on how replications are spread over worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .allocators import AllocatorPolicy, allocation_counts, even_counts
from .model import ModelParams, ObservationBatch, _coefficients
from .planner import AllocationVector
from .posterior import PriorConfig

log = logging.getLogger(__name__)

GENERATOR_ID = f"numpy.random.PCG64 (numpy {np.__version__})"


class CalibrationError(RuntimeError):
    """The target in-control ARL cannot be bracketed."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class SimulationConfig:
    """Everything one Monte Carlo experiment needs.

    ``alarm_lag`` shifts reported run lengths: 0 reports the day whose data
    crossed the threshold (zero-state delay), 1 reports the following day,
    when the statistic built from that data is first available.
    """

    model: ModelParams
    policy: AllocatorPolicy = field(default_factory=AllocatorPolicy)
    prior: PriorConfig = field(default_factory=lambda: PriorConfig(19.5, 1930.5, 0.3))
    replications: int = 1000
    base_seed: int = 0
    max_steps: Optional[int] = None
    target_arl0: float = 200.0
    arl_tolerance: float = 10.0
    alarm_lag: int = 0

    def __post_init__(self) -> None:
        if self.alarm_lag not in (0, 1):
            raise ValueError(f"alarm_lag must be 0 or 1, got {self.alarm_lag}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.target_arl0 > 1:
            raise ValueError(f"target_arl0 must exceed 1, got {self.target_arl0}")
        if not self.arl_tolerance > 0:
            raise ValueError("arl_tolerance must be positive")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be an unsigned 64-bit integer")
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", int(math.ceil(20 * self.target_arl0)))
        elif self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.policy.validate_for(self.model.num_regions, self.model.budget)

    @property
    def change_time(self) -> Optional[int]:
        return self.model.change_time

    def with_threshold(self, threshold: float) -> "SimulationConfig":
        return replace(self, model=replace(self.model, threshold=threshold))

    def in_control(self) -> "SimulationConfig":
        return replace(self, model=replace(self.model, change_time=None))


@dataclass(frozen=True)
class RunOutcome:
    run_length: int
    truncated: bool
    alarmed_region: Optional[int] = None
    allocation_trace: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MetricsReport:
    arl: float
    sdrl: float
    detection_precision: float
    replication_count: int
    truncation_count: int

    @classmethod
    def from_outcomes(cls, run_lengths: Sequence[int], truncated: Sequence[bool],
                      regions: Sequence[Optional[int]], hotspots: frozenset) -> "MetricsReport":
        lengths = np.asarray(run_lengths, dtype=np.float64)
        cut = np.asarray(truncated, dtype=bool)
        n = lengths.shape[0]
        sdrl = float(np.std(lengths, ddof=1)) if n > 1 else 0.0
        alarmed = [r for r, t in zip(regions, cut) if not t]
        if alarmed:
            dp = sum(r in hotspots for r in alarmed) / len(alarmed)
        else:
            dp = math.nan
        return cls(float(np.mean(lengths)), sdrl, float(dp), n, int(cut.sum()))


@dataclass(frozen=True, eq=False)
class _Path:
    """One monitored trajectory plus its running-maximum records.

    ``peak_times[i]`` is the day the largest statistic first exceeded all
    earlier daily maxima, reaching ``peak_values[i]`` in ``peak_regions[i]``.
    The alarm time for any threshold ``h`` not above the stopping level is
    the first record with value ``> h``.
    """

    steps: int
    stopped: bool
    peak_times: np.ndarray
    peak_values: np.ndarray
    peak_regions: np.ndarray
    allocations: Optional[np.ndarray] = None
    stats: Optional[np.ndarray] = None


def monitor(policy: AllocatorPolicy, prior: PriorConfig, p: float, q: float, budget: int,
            num_regions: int, rates_for_day: Callable[[int], np.ndarray],
            draw: Callable[[np.ndarray, np.ndarray], np.ndarray], threshold: float,
            max_steps: int, alarm: bool = True, trace: bool = False) -> _Path:
    """Run the allocate/observe/update loop until alarm or ``max_steps``."""
    per_test, per_positive = _coefficients(p, q)
    a, b, w = prior.a, prior.b, prior.decay
    K = num_regions
    counts = even_counts(K, budget)
    alpha = np.full(K, a)
    beta = np.full(K, b)
    stats = np.zeros(K)
    best = -math.inf
    rec_t: list[int] = []
    rec_v: list[float] = []
    rec_k: list[int] = []
    alloc_rows: list[np.ndarray] = []
    stat_rows: list[np.ndarray] = []
    stopped = False
    t = 0
    while t < max_steps:
        t += 1
        positives = draw(counts, rates_for_day(t))
        alpha = a + w * (alpha - a) + positives
        beta = b + w * (beta - b) + (counts - positives)
        # tomorrow's plan is made before today's statistic update
        ranked = stats
        stats = np.maximum(stats, 0.0) + (counts * per_test + positives * per_positive)
        k = int(np.argmax(stats))
        top = stats[k]
        if trace:
            alloc_rows.append(counts)
            stat_rows.append(stats)
        if top > best:
            best = top
            rec_t.append(t)
            rec_v.append(float(top))
            rec_k.append(k)
        if alarm and top > threshold:
            stopped = True
            break
        counts = allocation_counts(policy, ranked, alpha, beta, budget)
    return _Path(
        t,
        stopped,
        np.array(rec_t, dtype=np.int64),
        np.array(rec_v, dtype=np.float64),
        np.array(rec_k, dtype=np.int64),
        np.array(alloc_rows, dtype=np.int64).reshape(-1, K) if trace else None,
        np.array(stat_rows, dtype=np.float64).reshape(-1, K) if trace else None,
    )


def _simulated_rates(model: ModelParams) -> Callable[[int], np.ndarray]:
    before = np.full(model.num_regions, model.in_control_rate)
    after = model.rates_at(model.change_time + 1) if model.change_time is not None else before
    t0 = model.change_time if model.change_time is not None else math.inf
    return lambda t: after if t > t0 else before


def draw_positives(tests: np.ndarray, rates: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``X_k ~ Bin(tests_k, rates_k)``; any rate in [0, 1] is accepted."""
    return rng.binomial(np.asarray(tests, dtype=np.int64), np.asarray(rates, dtype=np.float64))


def sample_observations(allocation: AllocationVector, params: ModelParams, t: int,
                        rng: np.random.Generator) -> ObservationBatch:
    if len(allocation) != params.num_regions:
        raise ValueError("allocation does not match the number of regions")
    positives = draw_positives(allocation.counts, params.rates_at(t), rng)
    return ObservationBatch(t, allocation.counts, positives)


def _simulate_path(config: SimulationConfig, seed: int, level: float, trace: bool = False) -> _Path:
    model = config.model
    rng = make_rng(seed)
    return monitor(
        config.policy, config.prior, model.in_control_rate, model.out_of_control_rate,
        model.budget, model.num_regions, _simulated_rates(model),
        lambda c, r: rng.binomial(c, r), level, config.max_steps, trace=trace,
    )


def _outcome_at(path: _Path, threshold: float, max_steps: int,
                alarm_lag: int = 0) -> tuple[int, bool, Optional[int]]:
    # valid whenever the path ran at least until its maximum passed threshold
    i = int(np.searchsorted(path.peak_values, threshold, side="right"))
    if i < path.peak_values.shape[0]:
        return int(path.peak_times[i]) + alarm_lag, False, int(path.peak_regions[i])
    if path.stopped:
        raise ValueError("path was stopped below the requested threshold")
    return max_steps, True, None


def run_once(config: SimulationConfig, seed: int, trace: bool = False) -> RunOutcome:
    """One replication, stopped at the first alarm or at ``max_steps``.

    Identical ``(config, seed)`` give identical outcomes.
    """
    path = _simulate_path(config, seed, config.model.threshold, trace=trace)
    if path.stopped:
        return RunOutcome(path.steps + config.alarm_lag, False, int(path.peak_regions[-1]), path.allocations)
    return RunOutcome(path.steps, True, None, path.allocations)


def _paths_chunk(config: SimulationConfig, seeds: Sequence[int], level: float) -> list[_Path]:
    return [_simulate_path(config, s, level) for s in seeds]


def simulate_paths(config: SimulationConfig, level: float, indices: Sequence[int],
                   threads: int = 1) -> list[_Path]:
    """Paths for replications ``indices``, each run until its maximum passes ``level``."""
    seeds = [config.base_seed + i for i in indices]
    if threads <= 1 or len(seeds) < 2:
        return _paths_chunk(config, seeds, level)
    n_chunks = min(len(seeds), threads * 4)
    chunks = [seeds[i::n_chunks] for i in range(n_chunks)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(_paths_chunk, [config] * n_chunks, chunks, [level] * n_chunks))
    # undo the strided split so paths come back in replication order
    out: list[Optional[_Path]] = [None] * len(seeds)
    for c, chunk_paths in enumerate(results):
        for j, path in enumerate(chunk_paths):
            out[c + j * n_chunks] = path
    return out  # type: ignore[return-value]


def metrics_from_paths(paths: Sequence[_Path], threshold: float, max_steps: int,
                       hotspots: frozenset, alarm_lag: int = 0) -> MetricsReport:
    rows = [_outcome_at(p, threshold, max_steps, alarm_lag) for p in paths]
    return MetricsReport.from_outcomes([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], hotspots)


def monte_carlo(config: SimulationConfig, threads: int = 1) -> MetricsReport:
    """ARL, SDRL and detection precision over ``config.replications`` runs.

    Truncated runs count with length ``max_steps`` and are left out of the
    detection precision.
    """
    paths = simulate_paths(config, config.model.threshold, range(config.replications), threads)
    return metrics_from_paths(paths, config.model.threshold, config.max_steps, config.model.hotspot_set,
                              config.alarm_lag)


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    achieved_arl0: float
    replications: int
    base_seed: int
    generator_id: str
    probes: tuple[tuple[float, float], ...] = ()

    def __iter__(self):
        yield self.threshold
        yield self.achieved_arl0


def calibrate_threshold(config: SimulationConfig, threads: int = 1, h_lo: float = 0.0,
                        h_hi: float = 4.0, h_max: float = 200.0, width: float = 1e-3) -> CalibrationResult:
    """Bisect the threshold until the in-control ARL is within tolerance of target.

    Every probe reuses replication seeds ``base_seed .. base_seed + n - 1``.
    The monitoring trajectory does not depend on the threshold, so each
    replication is simulated once up to the current upper bracket and every
    probe reads its alarm time off the recorded running maximum. This gives
    exactly the ARL that :func:`monte_carlo` reports at the probed threshold.
    """
    config = config.in_control()
    target, tol, max_steps = config.target_arl0, config.arl_tolerance, config.max_steps
    if max_steps < 10 * target:
        raise ValueError(f"max_steps={max_steps} is below 10x the target ARL0 {target}")
    hs = config.model.hotspot_set
    h_hi = min(h_hi, h_max)
    indices = list(range(config.replications))
    paths = simulate_paths(config, h_hi, indices, threads)

    def arl(h: float) -> float:
        return metrics_from_paths(paths, h, max_steps, hs, config.alarm_lag).arl

    probes: list[tuple[float, float]] = []
    while True:
        upper = arl(h_hi)
        probes.append((h_hi, upper))
        log.info("bracket h_hi=%.4f ARL0=%.2f", h_hi, upper)
        if upper >= target:
            break
        if all(not p.stopped for p in paths):
            raise CalibrationError(
                f"ARL0 saturates at {upper:.1f} (max_steps={max_steps}) below target {target}")
        h_next = h_hi * 1.25 if h_hi > 0 else 1.0
        if h_next > h_max:
            raise CalibrationError(f"target ARL0 {target} not reached below h={h_max}")
        redo = [i for i, p in enumerate(paths) if p.stopped and p.peak_values[-1] <= h_next]
        for i, path in zip(redo, simulate_paths(config, h_next, redo, threads)):
            paths[i] = path
        h_hi = h_next
    lower = arl(h_lo)
    probes.append((h_lo, lower))
    if lower > target + tol:
        raise CalibrationError(f"ARL0 at the lower bracket h={h_lo} is already {lower:.1f} > target {target}")

    best_h, best_arl = (h_hi, upper) if abs(upper - target) <= abs(lower - target) else (h_lo, lower)
    lo, hi = h_lo, h_hi
    while abs(best_arl - target) > tol and hi - lo >= width:
        mid = 0.5 * (lo + hi)
        value = arl(mid)
        probes.append((mid, value))
        if abs(value - target) < abs(best_arl - target):
            best_h, best_arl = mid, value
        if value < target:
            lo = mid
        else:
            hi = mid
    log.info("calibrated h=%.6f ARL0=%.2f after %d probes", best_h, best_arl, len(probes))
    return CalibrationResult(best_h, best_arl, config.replications, config.base_seed, GENERATOR_ID,
                             tuple(probes))


@dataclass(frozen=True, eq=False)
class BehaviorSummary:
    """Daily allocations of one unstopped run, split at the change."""

    in_control: np.ndarray
    out_of_control: np.ndarray
    quantile_levels: tuple[float, ...] = (0.05, 0.25, 0.5, 0.75, 0.95)

    @staticmethod
    def _summary(alloc: np.ndarray, levels) -> dict[str, np.ndarray]:
        if alloc.shape[0] == 0:
            return {}
        out = {"mean": alloc.mean(axis=0), "median": np.median(alloc, axis=0)}
        for lv in levels:
            out[f"q{int(round(lv * 100)):02d}"] = np.quantile(alloc, lv, axis=0)
        return out

    def phase_summary(self, phase: str) -> dict[str, np.ndarray]:
        alloc = self.in_control if phase == "in_control" else self.out_of_control
        return self._summary(alloc, self.quantile_levels)

    @property
    def ic_medians(self) -> np.ndarray:
        return np.median(self.in_control, axis=0)

    @property
    def oc_medians(self) -> np.ndarray:
        return np.median(self.out_of_control, axis=0)


def behavior_study(config: SimulationConfig, ic_days: int, oc_days: int,
                   seed: Optional[int] = None) -> BehaviorSummary:
    """Allocate for ``ic_days`` in control, then ``oc_days`` with the hotspots shifted.

    Alarms are ignored so the policy keeps running through both phases.
    """
    if ic_days < 0 or oc_days < 0 or ic_days + oc_days < 1:
        raise ValueError("need ic_days, oc_days >= 0 and at least one day")
    model = replace(config.model, change_time=ic_days)
    rng = make_rng(config.base_seed if seed is None else seed)
    path = monitor(
        config.policy, config.prior, model.in_control_rate, model.out_of_control_rate,
        model.budget, model.num_regions, _simulated_rates(model),
        lambda c, r: rng.binomial(c, r), math.inf, ic_days + oc_days, alarm=False, trace=True,
    )
    alloc = path.allocations
    return BehaviorSummary(alloc[:ic_days], alloc[ic_days:])
