import json

import pytest

from aracusum.cli import main
from aracusum.config import ConfigError, apply_overrides, build, parse_override

BASE = """
[model]
num_regions = 4
in_control_rate = 0.01
out_of_control_rate = 0.08
budget = 400
hotspots = [0]
{threshold}

[policy]
kind = {kind}
num_batches = 4
top_r = 2

[prior]
a = 2.0
decay = 0.3

[simulation]
replications = 30
base_seed = 3
target_arl0 = 20
arl_tolerance = 2
max_steps = 400
"""


def config(tmp_path, threshold='threshold = "calibrate"', kind='"ara"', extra=""):
    path = tmp_path / "run.toml"
    path.write_text(BASE.format(threshold=threshold, kind=kind) + extra)
    return str(path)


def run(*args):
    return main([str(a) for a in args])


def test_missing_policy_kind_names_the_field(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(BASE.format(threshold="", kind='"ara"').replace('kind = "ara"', ""))
    assert run("simulate", "--config", path) == 2
    assert "policy.kind" in capsys.readouterr().err


@pytest.mark.parametrize("override, field", [
    ("policy.kind=thompson", "policy.kind"),
    ("model.in_control_rate=1.5", "model.in_control_rate"),
    ("model.budget=0", "model"),
    ("simulation.replications=0", "simulation"),
    ("simulation.bogus=1", "simulation.bogus"),
    ("output.format=xml", "output.format"),
    ("model.threshold=high", "model.threshold"),
    ("policy.num_batches=0", "policy"),
])
def test_invalid_fields_exit_2(tmp_path, capsys, override, field):
    assert run("simulate", "--config", config(tmp_path), "--set", override) == 2
    assert field in capsys.readouterr().err


def test_calibration_max_steps_guard(tmp_path, capsys):
    assert run("calibrate", "--config", config(tmp_path), "--set", "simulation.max_steps=100") == 2
    assert "simulation.max_steps" in capsys.readouterr().err


def test_override_parsing():
    assert parse_override("prior.a=[0.1, 1]") == (["prior", "a"], [0.1, 1])
    assert parse_override("policy.kind=even") == (["policy", "kind"], "even")
    with pytest.raises(ConfigError):
        parse_override("nokey")
    raw = apply_overrides({"model": {"budget": 1}}, ["model.budget=5", "output.dir=x"])
    assert raw == {"model": {"budget": 5}, "output": {"dir": "x"}}


def test_sweep_expansion():
    raw = {
        "model": {"num_regions": 3, "in_control_rate": 0.01, "out_of_control_rate": [0.02, 0.05],
                  "budget": 30, "threshold": 2.0},
        "policy": {"kind": ["ara", "even"], "num_batches": 3, "top_r": 3},
        "prior": {"a": [0.1, 1.0]},
    }
    cfg = build(raw, command="simulate")
    assert len(cfg.runs) == 8
    first = cfg.runs[0]
    assert first.tags == {"policy": "ara", "a": 0.1, "b": pytest.approx(9.9), "decay": 0.3, "q": 0.02}
    assert first.sim.prior.b == pytest.approx(9.9)


def test_calibrate_then_simulate_from_file(tmp_path):
    out = tmp_path / "out"
    assert run("calibrate", "--config", config(tmp_path), "--out", out) == 0
    doc = json.loads((out / "threshold.json").read_text())
    assert abs(doc["achieved_arl0"] - 20) <= 2 and doc["replications"] == 30 and doc["base_seed"] == 3
    assert doc["generator_id"].startswith("numpy.random.PCG64")
    cfg = config(tmp_path, threshold=f'threshold_file = "{out / "threshold.json"}"')
    assert run("simulate", "--config", cfg, "--out", out) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("policy,q,a,b,decay,threshold,arl,sdrl")
    assert len(lines) == 2
    assert lines[1].split(",")[5] == f"{doc['threshold']:.12g}"


def test_outputs_are_byte_identical_across_threads(tmp_path):
    cfg = config(tmp_path, kind='["ara", "even"]')
    outs = []
    for i, threads in enumerate((1, 2, 1)):
        out = tmp_path / f"o{i}"
        assert run("simulate", "--config", cfg, "--out", out, "--threads", threads) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert set(outs[0]) == {"threshold.json", "metrics.csv"}
    assert outs[0] == outs[1] == outs[2]


def test_json_format(tmp_path):
    out = tmp_path / "j"
    assert run("simulate", "--config", config(tmp_path, "threshold = 3.0"), "--out", out, "--format", "json") == 0
    rows = json.loads((out / "metrics.json").read_text())["metrics"]
    assert rows[0]["threshold"] == 3.0 and rows[0]["policy"] == "ara"


def test_calibration_failure_exits_3(tmp_path, capsys):
    cfg = config(tmp_path, extra="max_threshold = 0.5\n")
    assert run("calibrate", "--config", cfg, "--out", tmp_path / "c") == 3
    assert "calibration failed" in capsys.readouterr().err


def test_behavior_outputs(tmp_path):
    cfg = config(tmp_path, extra="\n[behavior]\nic_days = 20\noc_days = 0\n")
    out = tmp_path / "b"
    assert run("behavior", "--config", cfg, "--out", out) == 0
    summary = (out / "behavior_summary.csv").read_text().splitlines()
    assert summary[0] == "phase,region,mean,median,q05,q25,q50,q75,q95"
    assert len(summary) == 1 + 4
    assert len((out / "behavior_allocations.csv").read_text().splitlines()) == 21


def test_replay_data_errors_exit_4(tmp_path, capsys):
    rates = tmp_path / "rates.csv"
    rates.write_text("date,a,b,c,d\n2020-01-01,0.01,0.01,x,0.01\n")
    extra = f'\n[replay]\ndata = "{rates}"\n'
    assert run("replay", "--config", config(tmp_path, "threshold = 5.0", extra=extra)) == 4
    assert "row 1, column 3" in capsys.readouterr().err
    rates.write_text("date,a,b\n2020-01-01,0.01,0.01\n")
    assert run("replay", "--config", config(tmp_path, "threshold = 5.0", extra=extra)) == 4


def test_replay_writes_traces(tmp_path):
    rates = tmp_path / "rates.csv"
    rows = ["date,a,b,c,d"] + [f"2020-01-{d:02d},0.2,0.01,0.01,0.01" for d in range(1, 31)]
    rates.write_text("\n".join(rows) + "\n")
    extra = f'\n[replay]\ndata = "{rates}"\nseeds = 5\n'
    out = tmp_path / "r"
    assert run("replay", "--config", config(tmp_path, "threshold = 5.0", extra=extra), "--out", out) == 0
    doc = json.loads((out / "replay_summary.json").read_text())
    assert len(doc["runs"]) == 5 and all(r["alarmed_region_name"] == "a" for r in doc["runs"])
    stats = (out / "replay_statistics.csv").read_text().splitlines()
    assert stats[0] == "date,a,b,c,d" and len(stats) == 1 + doc["runs"][0]["days_run"]


def test_replay_requires_a_threshold(tmp_path, capsys):
    extra = '\n[replay]\ndata = "x.csv"\n'
    assert run("replay", "--config", config(tmp_path, extra=extra)) == 2
    assert "model.threshold" in capsys.readouterr().err
