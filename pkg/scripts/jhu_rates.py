#!/usr/bin/env python3
"""Build a replay rate matrix from the JHU CSSE US county time series.

Inputs are the two files published under
``csse_covid_19_data/csse_covid_19_time_series``:

* ``time_series_covid19_confirmed_US.csv``: cumulative confirmed cases,
* ``time_series_covid19_deaths_US.csv``: same layout plus a ``Population``
  column, used here only for the denominators.

By default the rate of a county on a day is its cumulative confirmed cases
divided by its population; ``--measure daily`` uses new cases that day
instead. Rows without a population (``Unassigned``, ``Out of ...``) are
dropped. Usage::

    python scripts/jhu_rates.py CONFIRMED DEATHS --state Washington \\
        --start 2020-01-23 --end 2020-09-13 --out data/wa_rates.csv
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from aracusum.replay import DataError, RateMatrix


def _read(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows[0], rows[1:]


def _date_columns(header: list[str]) -> list[tuple[int, dt.date]]:
    out = []
    for i, name in enumerate(header):
        try:
            out.append((i, dt.datetime.strptime(name, "%m/%d/%y").date()))
        except ValueError:
            continue
    return out


def jhu_rate_matrix(confirmed: str | Path, deaths: str | Path, state: str,
                    start: Optional[dt.date] = None, end: Optional[dt.date] = None,
                    measure: str = "cumulative") -> RateMatrix:
    """County rates (cases / population) for one state, in file order."""
    if measure not in ("cumulative", "daily"):
        raise ValueError(f"measure must be 'cumulative' or 'daily', got {measure!r}")
    c_head, c_rows = _read(Path(confirmed))
    d_head, d_rows = _read(Path(deaths))
    for head, path in ((c_head, confirmed), (d_head, deaths)):
        missing = {"Admin2", "Province_State"} - set(head)
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
    if "Population" not in d_head:
        raise DataError(f"{deaths}: missing Population column")
    pop_col, d_admin, d_state = d_head.index("Population"), d_head.index("Admin2"), d_head.index("Province_State")
    population = {}
    for row in d_rows:
        if row[d_state] == state:
            try:
                population[row[d_admin]] = int(float(row[pop_col]))
            except ValueError:
                continue

    all_dates = _date_columns(c_head)
    keep = [j for j, (_, d) in enumerate(all_dates)
            if (start is None or d >= start) and (end is None or d <= end)]
    dates = [all_dates[j] for j in keep]
    if not dates:
        raise DataError(f"{confirmed}: no date columns in the requested window")
    c_admin, c_state = c_head.index("Admin2"), c_head.index("Province_State")
    names, columns = [], []
    for row in c_rows:
        name = row[c_admin]
        if row[c_state] != state or population.get(name, 0) <= 0:
            continue
        cases = np.array([float(row[i]) for i, _ in all_dates])
        if measure == "daily":
            # corrections can make the cumulative series dip; count those days as zero
            cases = np.maximum(np.diff(cases, prepend=0.0), 0.0)
        cases = cases[keep]
        names.append(name)
        columns.append(np.clip(cases / population[name], 0.0, 1.0))
    if not names:
        raise DataError(f"no counties with a population found for state {state!r}")
    return RateMatrix(tuple(names), tuple(d for _, d in dates), np.column_stack(columns))


def write_rate_matrix(matrix: RateMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *matrix.region_names])
        for day, row in zip(matrix.dates, matrix.rates):
            writer.writerow([day.isoformat(), *(f"{x:.12g}" for x in row)])


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[1])
    parser.add_argument("confirmed")
    parser.add_argument("deaths")
    parser.add_argument("--state", default="Washington")
    parser.add_argument("--start", type=dt.date.fromisoformat)
    parser.add_argument("--end", type=dt.date.fromisoformat)
    parser.add_argument("--measure", choices=("cumulative", "daily"), default="cumulative")
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        matrix = jhu_rate_matrix(args.confirmed, args.deaths, args.state, args.start, args.end, args.measure)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_rate_matrix(matrix, args.out)
    print(f"{matrix.num_regions} regions x {matrix.num_days} days -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
