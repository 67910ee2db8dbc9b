"""Command line entry point: ``aracusum {calibrate,simulate,behavior,replay}``.

Exit codes: 0 success, 2 configuration error, 3 calibration failure,
4 data error. Output files hold no timestamps and numbers are written with
12 significant digits, so reruns are byte-identical for any ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .config import (
    CliConfig,
    ConfigError,
    RunSpec,
    apply_overrides,
    build,
    load_file,
    match_threshold,
    read_thresholds,
)
from .replay import DataError, load_rate_matrix, replay
from .sim import GENERATOR_ID, CalibrationError, behavior_study, calibrate_threshold, monte_carlo

log = logging.getLogger("aracusum")

EXIT_CONFIG, EXIT_CALIBRATION, EXIT_DATA = 2, 3, 4


def _num(x):
    """JSON-ready value at 12 significant digits (NaN becomes null)."""
    if isinstance(x, (bool, np.bool_)) or x is None or isinstance(x, str):
        return x if not isinstance(x, np.bool_) else bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return None if math.isnan(x) else float(f"{x:.12g}")


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{float(x):.12g}"
    return str(x)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    log.info("wrote %s", path)


def _write_csv(path: Path, header: list[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(x) for x in row])
    log.info("wrote %s", path)


def _tag_fields(run: RunSpec) -> dict:
    return {k: _num(v) for k, v in run.tags.items()}


def _suffix(cfg: CliConfig, run: RunSpec) -> str:
    if len(cfg.runs) == 1:
        return ""
    t = run.tags
    return f"_{t['policy']}_a{_cell(t['a'])}_w{_cell(t['decay'])}_q{_cell(t['q'])}"


def _calibrate(cfg: CliConfig, threads: int) -> dict:
    results = {}
    for run in cfg.groups:
        log.info("calibrating %s", run.tags)
        result = calibrate_threshold(run.sim, threads=threads, h_max=cfg.max_threshold)
        results[run.group] = (run, result)
    return results


def _threshold_doc(results: dict) -> dict:
    entries = []
    for run, res in results.values():
        sim = run.sim
        entries.append({
            **_tag_fields(run),
            "threshold": _num(res.threshold),
            "achieved_arl0": _num(res.achieved_arl0),
            "target_arl0": _num(sim.target_arl0),
            "arl_tolerance": _num(sim.arl_tolerance),
            "replications": res.replications,
            "base_seed": res.base_seed,
            "max_steps": sim.max_steps,
            "alarm_lag": sim.alarm_lag,
            "generator_id": res.generator_id,
            "probes": [[_num(h), _num(a)] for h, a in res.probes],
        })
    return entries[0] if len(entries) == 1 else {"calibrations": entries}


def _resolve_thresholds(cfg: CliConfig, threads: int, out: Path) -> dict:
    if cfg.threshold_mode == "value":
        return {run.group: run.sim.model.threshold for run in cfg.runs}
    if cfg.threshold_mode == "file":
        entries = read_thresholds(cfg.threshold_file)
        return {run.group: match_threshold(entries, run) for run in cfg.runs}
    results = _calibrate(cfg, threads)
    _write_json(out / "threshold.json", _threshold_doc(results))
    return {g: res.threshold for g, (_, res) in results.items()}


def cmd_calibrate(cfg: CliConfig, threads: int, out: Path) -> None:
    results = _calibrate(cfg, threads)
    _write_json(out / "threshold.json", _threshold_doc(results))
    for run, res in results.values():
        print(f"{run.tags['policy']} q={_cell(run.tags['q'])}: h={res.threshold:.6f} "
              f"ARL0={res.achieved_arl0:.2f}")


METRIC_FIELDS = ["policy", "q", "a", "b", "decay", "threshold", "arl", "sdrl", "detection_precision",
                 "replications", "truncations", "max_steps", "alarm_lag", "base_seed", "generator_id"]


def cmd_simulate(cfg: CliConfig, threads: int, out: Path) -> None:
    thresholds = _resolve_thresholds(cfg, threads, out)
    rows = []
    for run in cfg.runs:
        h = thresholds[run.group]
        rep = monte_carlo(run.sim.with_threshold(h), threads=threads)
        rows.append({
            **_tag_fields(run),
            "threshold": _num(h),
            "arl": _num(rep.arl),
            "sdrl": _num(rep.sdrl),
            "detection_precision": _num(rep.detection_precision),
            "replications": rep.replication_count,
            "truncations": rep.truncation_count,
            "max_steps": run.sim.max_steps,
            "alarm_lag": run.sim.alarm_lag,
            "base_seed": run.sim.base_seed,
            "generator_id": GENERATOR_ID,
        })
        print(f"{run.tags['policy']} q={_cell(run.tags['q'])}: ARL={rep.arl:.3f} SDRL={rep.sdrl:.3f} "
              f"DP={rep.detection_precision:.3f}")
    if cfg.output_format == "json":
        _write_json(out / "metrics.json", {"metrics": rows})
    else:
        _write_csv(out / "metrics.csv", METRIC_FIELDS, ([r[k] for k in METRIC_FIELDS] for r in rows))


def cmd_behavior(cfg: CliConfig, threads: int, out: Path) -> None:
    docs = []
    for run in cfg.runs:
        summary = behavior_study(run.sim, cfg.ic_days, cfg.oc_days)
        K = run.sim.model.num_regions
        phases = [(name, summary.phase_summary(name)) for name in ("in_control", "out_of_control")]
        phases = [(name, stats) for name, stats in phases if stats]
        allocations = np.vstack([summary.in_control, summary.out_of_control])
        suffix = _suffix(cfg, run)
        if cfg.output_format == "json":
            docs.append({
                **_tag_fields(run),
                "ic_days": cfg.ic_days,
                "oc_days": cfg.oc_days,
                "summary": {name: {k: [_num(v) for v in arr] for k, arr in stats.items()}
                            for name, stats in phases},
                "allocations": allocations.tolist(),
            })
            continue
        stat_names = list(phases[0][1])
        _write_csv(out / f"behavior_summary{suffix}.csv", ["phase", "region"] + stat_names,
                   ([name, k] + [stats[s][k] for s in stat_names] for name, stats in phases for k in range(K)))
        _write_csv(out / f"behavior_allocations{suffix}.csv",
                   ["day", "phase"] + [f"region_{k}" for k in range(K)],
                   ([t + 1, "in_control" if t < cfg.ic_days else "out_of_control"] + row.tolist()
                    for t, row in enumerate(allocations)))
    if cfg.output_format == "json":
        _write_json(out / "behavior.json", {"runs": docs})


def cmd_replay(cfg: CliConfig, threads: int, out: Path) -> None:
    run = cfg.runs[0]
    h = _resolve_thresholds(cfg, threads, out)[run.group]
    matrix = load_rate_matrix(cfg.replay_data)
    if matrix.num_regions != run.sim.model.num_regions:
        raise DataError(f"{cfg.replay_data}: {matrix.num_regions} regions, "
                        f"model.num_regions is {run.sim.model.num_regions}")
    model = run.sim.with_threshold(h).model
    seeds = [run.sim.base_seed + i for i in range(cfg.replay_seeds)]
    reports = [replay(matrix, model, run.sim.policy, run.sim.prior, s, cfg.deterministic) for s in seeds]
    first = reports[0]
    per_seed = [{"seed": s, **r.summary()} for s, r in zip(seeds, reports)]
    for item in per_seed:
        item["max_statistic"] = _num(item["max_statistic"])
    doc = {
        **_tag_fields(run),
        "threshold": _num(h),
        "deterministic": cfg.deterministic,
        "regions": list(matrix.region_names),
        "first_date": matrix.dates[0].isoformat(),
        "last_date": matrix.dates[-1].isoformat(),
        "generator_id": GENERATOR_ID,
        "runs": per_seed,
    }
    names = ["date"] + list(matrix.region_names)
    days = [d.isoformat() for d in matrix.dates[:first.days_run]]
    if cfg.output_format == "json":
        doc["trace"] = {
            "dates": days,
            "statistics": [[_num(v) for v in row] for row in first.stats],
            "allocations": first.allocations.tolist(),
        }
        _write_json(out / "replay.json", doc)
    else:
        _write_json(out / "replay_summary.json", doc)
        _write_csv(out / "replay_statistics.csv", names, ([d] + row.tolist() for d, row in zip(days, first.stats)))
        _write_csv(out / "replay_allocations.csv", names,
                   ([d] + row.tolist() for d, row in zip(days, first.allocations)))
    fired = [r for r in reports if r.fired]
    if first.fired:
        print(f"seed {seeds[0]}: alarm on {first.alarm_date} in {first.alarmed_region_name}")
    else:
        print(f"seed {seeds[0]}: no alarm in {first.days_run} days")
    if len(reports) > 1:
        print(f"{len(fired)}/{len(reports)} seeds raised an alarm")


COMMANDS = {
    "calibrate": (cmd_calibrate, "calibrate thresholds to the target in-control ARL"),
    "simulate": (cmd_simulate, "estimate ARL, SDRL and detection precision"),
    "behavior": (cmd_behavior, "record daily allocations before and after a change"),
    "replay": (cmd_replay, "run the monitor over an observed rate matrix"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aracusum", description="Adaptive test allocation with multi-region CUSUM.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override simulation.base_seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes for replications")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--format", choices=("csv", "json"), help="tabular output format")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config field (TOML value syntax); repeatable")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        raw = apply_overrides(load_file(args.config), args.set)
        cfg = build(raw, command=args.command, seed=args.seed, out=args.out, fmt=args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=cfg.verbosity.upper(), format="%(levelname)s %(name)s: %(message)s")
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](cfg, args.threads, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
