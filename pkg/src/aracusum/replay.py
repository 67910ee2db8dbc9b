"""Replay the monitoring loop against observed per-region daily rates.

Input is a rate CSV::

    date,<region_1>,...,<region_K>
    2020-01-23,0.0,0.0,...

one row per consecutive day, each rate a decimal in [0, 1]. On day ``t`` the
loop observes ``X_k ~ Bin(c_k, rate[t][k])`` (or ``round(c_k * rate)`` in
deterministic mode) for the tests ``c_k`` it chose to send.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .allocators import AllocatorPolicy
from .model import ModelParams
from .posterior import PriorConfig
from .sim import make_rng, monitor


class DataError(ValueError):
    """Malformed rate file."""


@dataclass(frozen=True, eq=False)
class RateMatrix:
    region_names: tuple[str, ...]
    dates: tuple[dt.date, ...]
    rates: np.ndarray

    def __post_init__(self) -> None:
        rates = np.array(self.rates, dtype=np.float64)
        if rates.ndim != 2 or rates.shape != (len(self.dates), len(self.region_names)):
            raise DataError(f"rate matrix shape {rates.shape} does not match "
                            f"{len(self.dates)} dates x {len(self.region_names)} regions")
        bad = np.argwhere(~((rates >= 0.0) & (rates <= 1.0)))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"rate {rates[r, c]} out of [0, 1] at row {r + 1}, column {c + 1}")
        for i in range(1, len(self.dates)):
            if self.dates[i] - self.dates[i - 1] != dt.timedelta(days=1):
                raise DataError(f"dates not consecutive at row {i + 1}: {self.dates[i - 1]} -> {self.dates[i]}")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "region_names", tuple(self.region_names))
        object.__setattr__(self, "dates", tuple(self.dates))

    @property
    def num_days(self) -> int:
        return self.rates.shape[0]

    @property
    def num_regions(self) -> int:
        return self.rates.shape[1]

    def head(self, days: int) -> "RateMatrix":
        return RateMatrix(self.region_names, self.dates[:days], self.rates[:days])


def load_rate_matrix(path: str | Path) -> RateMatrix:
    """Parse and validate a rate CSV.

    Errors name the file line, and for bad cells the 1-based data row and
    region column.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip().lower() != "date" or len(header) < 2:
            raise DataError(f"{path}:1: header must be 'date,<region_1>,...'")
        names = [h.strip() for h in header[1:]]
        if len(set(names)) != len(names) or any(not n for n in names):
            raise DataError(f"{path}:1: region names must be unique and non-empty")
        dates: list[dt.date] = []
        rows: list[list[float]] = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            r = len(rows) + 1
            if len(row) != len(names) + 1:
                raise DataError(f"{path}:{line}: row {r} has {len(row) - 1} rates, expected {len(names)}")
            try:
                dates.append(dt.date.fromisoformat(row[0].strip()))
            except ValueError:
                raise DataError(f"{path}:{line}: row {r} has invalid date {row[0]!r}") from None
            values = []
            for c, cell in enumerate(row[1:], start=1):
                text = cell.strip()
                try:
                    value = float(text)
                except ValueError:
                    raise DataError(f"{path}:{line}: missing or non-numeric rate {text!r} "
                                    f"at row {r}, column {c} ({names[c - 1]})") from None
                if not (0.0 <= value <= 1.0) or math.isnan(value):
                    raise DataError(f"{path}:{line}: rate {text} out of [0, 1] "
                                    f"at row {r}, column {c} ({names[c - 1]})")
                values.append(value)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    try:
        return RateMatrix(tuple(names), tuple(dates), np.array(rows))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


@dataclass(frozen=True, eq=False)
class ReplayReport:
    region_names: tuple[str, ...]
    dates: tuple[dt.date, ...]
    stats: np.ndarray
    allocations: np.ndarray
    alarm_day: Optional[int] = None
    alarmed_region: Optional[int] = None

    @property
    def fired(self) -> bool:
        return self.alarm_day is not None

    @property
    def alarm_date(self) -> Optional[dt.date]:
        return None if self.alarm_day is None else self.dates[self.alarm_day - 1]

    @property
    def alarmed_region_name(self) -> Optional[str]:
        return None if self.alarmed_region is None else self.region_names[self.alarmed_region]

    @property
    def days_run(self) -> int:
        return self.stats.shape[0]

    def summary(self) -> dict:
        return {
            "alarm": self.fired,
            "alarm_day": self.alarm_day,
            "alarm_date": None if self.alarm_date is None else self.alarm_date.isoformat(),
            "alarmed_region": self.alarmed_region,
            "alarmed_region_name": self.alarmed_region_name,
            "days_run": self.days_run,
            "max_statistic": float(self.stats[-1].max()) if self.days_run else None,
        }


def replay(matrix: RateMatrix, model: ModelParams, policy: AllocatorPolicy, prior: PriorConfig,
           seed: int, deterministic: bool = False) -> ReplayReport:
    """Run the monitoring loop over the observed rates until alarm or end of data."""
    if model.num_regions != matrix.num_regions:
        raise ValueError(f"model has {model.num_regions} regions, data has {matrix.num_regions}")
    policy.validate_for(model.num_regions, model.budget)
    rates = matrix.rates
    if deterministic:
        def draw(c, r):
            return np.minimum(np.floor(c * r + 0.5).astype(np.int64), c)
    else:
        rng = make_rng(seed)

        def draw(c, r):
            return rng.binomial(c, r)

    path = monitor(
        policy, prior, model.in_control_rate, model.out_of_control_rate, model.budget,
        model.num_regions, lambda t: rates[t - 1], draw, model.threshold, matrix.num_days, trace=True,
    )
    if path.stopped:
        return ReplayReport(matrix.region_names, matrix.dates, path.stats, path.allocations,
                            path.steps, int(path.peak_regions[-1]))
    return ReplayReport(matrix.region_names, matrix.dates, path.stats, path.allocations)
