import json

import numpy as np
import pytest
import yaml

from adapcomfl import bandwidth as bw
from adapcomfl.cli import main
from adapcomfl.report import METRICS_HEADER, read_metrics_csv

SMALL = {
    "rounds": 4,
    "clients": 3,
    "predictor": {"kind": "window_ar"},
    "data": {"samples": 300},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


# -- simulate ---------------------------------------------------------------


def test_simulate_writes_outputs(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    assert len(lines) == 4 * 3 + 1
    rows = read_metrics_csv(out / "metrics.csv")
    for row in rows:
        for key in ("b_pred_mbps", "b_true_mbps", "uplink_time_s", "cr", "global_accuracy_pct"):
            assert np.isfinite(row[key])
        assert row["cr"] == row["d_prime_slots"] / json.loads((out / "summary.json").read_text())["n_params"]
    assert {r["deadline_met"] for r in rows} <= {True, False}
    assert set((out / "metrics.csv").read_text().split("\n")[1].split(",")[8:9]) <= {"true", "false"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["rounds"] == 4 and summary["algorithm"] == "adapcomfl"
    assert "final accuracy" in capsys.readouterr().out


def test_simulate_is_byte_identical(config_file, tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(config_file), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_simulate_missing_config(tmp_path, capsys):
    missing = tmp_path / "nope.yaml"
    assert main(["simulate", "--config", str(missing), "--out", str(tmp_path)]) != 0
    assert str(missing) in capsys.readouterr().err


def test_simulate_invalid_config(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("rounds: 0\n")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) != 0
    assert "rounds" in capsys.readouterr().err


def test_out_dir_from_environment(config_file, tmp_path, monkeypatch):
    monkeypatch.setenv("ADAPCOMFL_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(config_file)]) == 0
    assert (tmp_path / "env" / "metrics.csv").exists()


# -- gen-traces -------------------------------------------------------------


def test_gen_traces_counts_and_reload(tmp_path):
    out = tmp_path / "traces.csv"
    assert main(["gen-traces", "--clients", "7", "--duration", "3600", "--seed", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 7 * 3600 + 1
    traces = bw.load_traces(out)
    assert len(traces) == 7 and all(len(t) == 3600 for t in traces)


def test_gen_traces_is_byte_identical(tmp_path):
    args = ["gen-traces", "--clients", "3", "--duration", "50", "--seed", "5", "--base", "2.0",
            "--amplitude", "0.5", "--noise", "0.1", "--shift-prob", "0.05"]
    main(args + ["--out", str(tmp_path / "a.csv")])
    main(args + ["--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_gen_traces_unwritable(tmp_path):
    out = tmp_path / "missing-dir" / "t.csv"
    assert main(["gen-traces", "--clients", "1", "--duration", "5", "--seed", "0", "--out", str(out)]) != 0


# -- compare ----------------------------------------------------------------


def test_compare_three_sections(config_file, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(config_file), "--out", str(out)]) == 0
    payload = json.loads((out / "comparison.json").read_text())
    assert set(payload["algorithms"]) == {"adapcomfl", "sketchfl", "fedavg"}
    for algo in payload["algorithms"]:
        assert len((out / algo / "metrics.csv").read_text().splitlines()) == 4 * 3 + 1
    digests = {tuple(v["shard_digests"]) for v in payload["algorithms"].values()}
    assert len(digests) == 1


def test_adaptive_faster_than_fixed_on_slow_links(tmp_path):
    # every client sits well below the 7 * b / T capacity that SketchFL needs
    cfg = dict(SMALL, rounds=8, traces={"base_bw": 0.0012, "spread": 1.5})
    path = tmp_path / "slow.yaml"
    path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(path), "--out", str(out)]) == 0
    algos = json.loads((out / "comparison.json").read_text())["algorithms"]
    assert algos["adapcomfl"]["mean_uplink_time_s"] <= algos["sketchfl"]["mean_uplink_time_s"]
