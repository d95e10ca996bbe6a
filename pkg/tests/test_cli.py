import json
import subprocess
import sys

import numpy as np
import pytest

from carma_hawkes import (
    UnivariateOrder,
    UnivariateSpec,
    parse_ticks,
    spec_to_dict,
    spread_stats,
    synth_ticks,
    write_ticks,
)
from carma_hawkes.cli import main
from carma_hawkes.data import SynthConfig

TICK_HEADER = "timestamp,price,side,instrument\n"


@pytest.fixture()
def tick_file(tmp_path):
    config = SynthConfig(arrival_rate=0.2, volatility=2e-5,
                         jump_times=(12000.0,), jump_sizes=(0.01,))
    path = tmp_path / "ticks.csv"
    write_ticks(synth_ticks(config, seed=41), path)
    return path


@pytest.fixture()
def params_file(tmp_path):
    spec = UnivariateSpec(order=UnivariateOrder(1, 0), mu=0.5, a=[2.0], b=[1.0])
    path = tmp_path / "params.json"
    path.write_text(json.dumps(spec_to_dict(spec)))
    return path


def _manifest(outdir):
    return json.loads((outdir / "manifest.json").read_text())


# ---------------------------------------------------------------------------
# Exit codes


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "Usage" in capsys.readouterr().out


def test_missing_file_exits_one(tmp_path, capsys):
    assert main(["ingest", str(tmp_path / "absent.csv")]) == 1


def test_corrupt_row_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text(TICK_HEADER
                    + "2023-05-15T07:00:00.000000Z,100.0,bid,XS1\n"
                    + "2023-05-15T07:00:01.000000Z,oops,bid,XS1\n")
    assert main(["ingest", str(path)]) == 1
    assert "line 3" in capsys.readouterr().err


def test_bad_alpha_exits_one(tick_file, tmp_path, capsys):
    code = main(["detect-jumps", str(tick_file), "--alpha", "1.5",
                 "--outdir", str(tmp_path / "o")])
    assert code == 1
    assert "alpha" in capsys.readouterr().err


def test_malformed_order_exits_one(tmp_path, params_file, capsys):
    sim = tmp_path / "sim"
    assert main(["simulate", "--params", str(params_file), "--horizon", "50",
                 "--outdir", str(sim)]) == 0
    assert main(["fit", str(sim / "events.csv"), "--order", "banana",
                 "--outdir", str(tmp_path / "f")]) == 1
    assert "--order" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Simulate / fit round trip


def test_simulate_fit_round_trip(tmp_path, params_file, capsys):
    sim = tmp_path / "sim"
    assert main(["simulate", "--params", str(params_file),
                 "--horizon", "1500", "--seed", "3",
                 "--outdir", str(sim)]) == 0
    summary = json.loads((sim / "summary.json").read_text())
    assert summary["n_events"] > 500

    fit_dir = tmp_path / "fit"
    assert main(["fit", str(sim / "events.csv"), "--order", "1,0",
                 "--n-starts", "1", "--max-evals", "4000", "--seed", "0",
                 "--outdir", str(fit_dir)]) == 0
    payload = json.loads((fit_dir / "fit.json").read_text())
    assert payload["spec"]["p"] == 1 and payload["spec"]["q"] == 0
    assert payload["converged"] is True
    assert payload["valid"] is True
    assert payload["spec"]["mu"] == pytest.approx(0.5, rel=0.25)
    assert payload["n_events"] == summary["n_events"]


def test_simulate_outputs_are_deterministic(tmp_path, params_file, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--params", str(params_file),
                     "--horizon", "200", "--seed", "9",
                     "--outdir", str(out)]) == 0
        outs.append(out)
    a, b = outs
    assert (a / "events.csv").read_bytes() == (b / "events.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    ma, mb = _manifest(a), _manifest(b)
    for key in ("started_at", "finished_at"):
        ma.pop(key), mb.pop(key)
    ma.pop("config")["outdir"], mb.pop("config")["outdir"]
    assert {k: v for k, v in ma.items()} == {k: v for k, v in mb.items()}


# ---------------------------------------------------------------------------
# Manifest contents


def test_manifest_records_inputs_and_config(tmp_path, tick_file, capsys):
    out = tmp_path / "dj"
    assert main(["detect-jumps", str(tick_file), "--alpha", "0.99",
                 "--window", "60", "--outdir", str(out)]) == 0
    manifest = _manifest(out)
    assert manifest["command"] == "detect-jumps"
    import hashlib
    digest = hashlib.sha256(tick_file.read_bytes()).hexdigest()
    assert manifest["inputs"][str(tick_file)] == digest
    assert manifest["config"]["window_k"] == 60
    assert manifest["config"]["alpha_levels"] == [0.99]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["K"] == 60


# ---------------------------------------------------------------------------
# Config file and environment precedence


def test_config_file_supplies_defaults(tmp_path, tick_file, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("window = 45\nalpha = (0.95, 0.99)\n")
    out = tmp_path / "dj"
    assert main(["detect-jumps", str(tick_file), "--config", str(cfg),
                 "--outdir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["K"] == 45
    assert sorted(summary["thresholds"]) == ["0.95", "0.99"]
    manifest = _manifest(out)
    assert manifest["config"]["alpha_levels"] == [0.95, 0.99]


def test_flag_beats_config_file(tmp_path, tick_file, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("window = 45\n")
    out = tmp_path / "dj"
    assert main(["detect-jumps", str(tick_file), "--config", str(cfg),
                 "--window", "80", "--outdir", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["K"] == 80


def test_bad_config_line_exits_one(tmp_path, tick_file, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("this has no equals sign\n")
    assert main(["detect-jumps", str(tick_file), "--config", str(cfg),
                 "--outdir", str(tmp_path / "o")]) == 1


def test_threads_env_var(tmp_path, tick_file, capsys, monkeypatch):
    monkeypatch.setenv("CARMA_HAWKES_THREADS", "2")
    out = tmp_path / "pl"
    code = main(["pipeline", str(tick_file), "--alpha", "0.99",
                 "--p-max", "1", "--n-starts", "1", "--max-evals", "3000",
                 "--seed", "0", "--outdir", str(out)])
    assert code == 0
    assert _manifest(out)["config"]["threads"] == 2


# ---------------------------------------------------------------------------
# Pipeline command


def test_pipeline_command_outputs(tmp_path, tick_file, capsys):
    out = tmp_path / "pl"
    assert main(["pipeline", str(tick_file), "--alpha", "0.99",
                 "--p-max", "1", "--n-starts", "1", "--max-evals", "3000",
                 "--seed", "0", "--outdir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report) == {"stages", "verdict"}
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0].startswith("framework,")
    assert len(lines) >= 2
    echo = capsys.readouterr().out
    assert str(out) in echo
    assert report["verdict"]["status"] in ("passed", "exhausted")

    again = tmp_path / "pl2"
    assert main(["pipeline", str(tick_file), "--alpha", "0.99",
                 "--p-max", "1", "--n-starts", "1", "--max-evals", "3000",
                 "--seed", "0", "--outdir", str(again)]) == 0
    assert (out / "report.json").read_bytes() == (again / "report.json").read_bytes()
    assert (out / "report.csv").read_bytes() == (again / "report.csv").read_bytes()


# ---------------------------------------------------------------------------
# Ingest and spread statistics


def test_ingest_round_trip(tmp_path, tick_file, capsys):
    out = tmp_path / "ing"
    assert main(["ingest", str(tick_file), "--outdir", str(out)]) == 0
    assert (out / "ticks.csv").read_bytes() == tick_file.read_bytes()
    stats = json.loads((out / "stats.json").read_text())
    assert stats["ticks"] == parse_ticks(tick_file).n
    assert stats["rows_read"] >= stats["ticks"]


def test_spread_stats_command(tmp_path, capsys):
    bid_rows = "".join(
        f"2023-05-15T07:{m:02d}:00.000000Z,{p},bid,XS1\n"
        for m, p in [(0, "100.00"), (1, "100.01"), (2, "100.00"),
                     (3, "100.02"), (4, "100.01")])
    ask_rows = "".join(
        f"2023-05-15T07:{m:02d}:00.000000Z,{p},ask,XS1\n"
        for m, p in [(0, "100.03"), (2, "100.04"), (4, "100.05")])
    bid_file = tmp_path / "bid.csv"
    ask_file = tmp_path / "ask.csv"
    bid_file.write_text(TICK_HEADER + bid_rows)
    ask_file.write_text(TICK_HEADER + ask_rows)
    out = tmp_path / "sp"
    assert main(["spread-stats", str(bid_file), str(ask_file),
                 "--outdir", str(out)]) == 0
    payload = json.loads((out / "spread_stats.json").read_text())
    expected = spread_stats(parse_ticks(bid_file, side="bid"),
                            parse_ticks(ask_file, side="ask"))
    assert payload["n"] == expected.n
    assert payload["mean"] == pytest.approx(expected.mean, abs=1e-12)
    lines = (out / "spread_stats.csv").read_text().splitlines()
    assert lines[0].split(",") == list(expected.COLUMNS)


# ---------------------------------------------------------------------------
# Packaging


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "carma_hawkes", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "Usage" in proc.stdout
