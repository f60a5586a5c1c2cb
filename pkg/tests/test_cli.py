from __future__ import annotations

import json
import math

import pytest

from app.cli.dispatcher import build_parser, run
from app.core.errors import EXIT_CONFIG, EXIT_OK

EXPONENTIAL = {"family": "Matern", "params": {"nu": 0.5, "alpha": 1.0}}


def test_every_subcommand_is_registered():
    _, commands = build_parser()
    assert set(commands) == {
        "eval", "spectrum", "limits", "ssm-check", "equivalence",
        "simulate", "fit", "predict", "vecchia", "misspec", "polyharmonic",
        "sparsity", "screening", "mc", "history",
    }


def test_eval_writes_csv(settings, write_config, read_csv, tmp_path):
    out = tmp_path / "eval.csv"
    config = write_config({"kernel": EXPONENTIAL, "x": [0.0, 1.0]})
    assert run(["eval", "--config", config, "--output", str(out)], settings) == EXIT_OK

    comment, columns, rows = read_csv(out)
    assert comment.startswith("# matern-lab eval config-hash=")
    assert columns == ["x", "correlation", "spectral_density"]
    assert rows[0][:2] == ["0", "1"]
    assert rows[1][:2] == ["1", "0.36787944117144233"]
    assert float(rows[0][2]) == pytest.approx(1.0 / math.pi, rel=1e-14)


def test_invalid_kernel_exits_with_config_code(settings, write_config, capsys):
    askey = {"family": "Askey", "params": {"mu": 1.0, "beta": 1.0}}
    config = write_config({"kernel": askey, "d": 3, "x": [0.5]})
    assert run(["eval", "--config", config], settings) == EXIT_CONFIG
    assert "mu >= (d+1)/2" in capsys.readouterr().err


def test_missing_config_file(settings, capsys):
    assert run(["eval", "--config", "no-such-file.json"], settings) == EXIT_CONFIG
    assert "config file not found" in capsys.readouterr().err


def test_mc_rejects_zero_replicates(settings, write_config, capsys):
    config = write_config({"model": {"kernel": EXPONENTIAL}, "reps": 0})
    assert run(["mc", "--config", config], settings) == EXIT_CONFIG
    assert "reps must be positive" in capsys.readouterr().err


def test_dry_run_computes_nothing(settings, write_config, capsys, tmp_path):
    out = tmp_path / "sim.csv"
    config = write_config({"model": {"kernel": EXPONENTIAL}, "sites": {"grid": 0.1, "d": 2}})
    assert run(["simulate", "--config", config, "--output", str(out), "--dry-run", "--seed", "4"], settings) == EXIT_OK

    plan = json.loads(capsys.readouterr().out)
    assert plan["subcommand"] == "simulate"
    assert plan["seed"] == 4
    assert plan["estimates"]["n"] == 121
    assert len(plan["config_hash"]) == 16
    assert not out.exists()


def test_simulate_fit_predict_round_trip(settings, write_config, read_csv, tmp_path):
    model = {"kernel": {"family": "Matern", "params": {"nu": 0.5, "alpha": 0.2}}, "sigma2": 1.0}
    sim = tmp_path / "sim.csv"
    fit = tmp_path / "fit.json"
    pred = tmp_path / "pred.csv"

    config = write_config({"model": model, "sites": {"linspace": 40}, "replicates": 2})
    assert run(["simulate", "--config", config, "--output", str(sim), "--seed", "9"], settings) == EXIT_OK
    _, columns, rows = read_csv(sim)
    assert columns == ["replicate", "site", "x0", "value"]
    assert len(rows) == 80

    config = write_config({
        "data": {"csv": str(sim), "replicate": 1},
        "kernel": {"family": "Matern", "params": {"nu": 0.5, "alpha": 0.5}},
        "free": ["alpha"],
        "starts": 1,
    })
    assert run(["fit", "--config", config, "--output", str(fit)], settings) == EXIT_OK
    fitted = json.loads(fit.read_text(encoding="utf-8"))
    assert fitted["n"] == 40
    assert fitted["theta_hat"]["family"] == "Matern"
    assert fitted["sigma2_hat"] > 0

    config = write_config({"model": {"fit": str(fit)}, "data": {"csv": str(sim), "replicate": 1}, "x0": [0.0, 0.55]})
    assert run(["predict", "--config", config, "--output", str(pred)], settings) == EXIT_OK
    _, columns, predictions = read_csv(pred)
    assert columns == ["target", "x0", "mean", "variance"]
    first_site_value = next(r[3] for r in rows if r[0] == "1" and r[1] == "0")
    assert predictions[0][2] == first_site_value
    assert predictions[0][3] == "0"
    assert float(predictions[1][3]) > 0


def test_outputs_do_not_depend_on_threads(settings, write_config, tmp_path):
    config = write_config({
        "model": {"kernel": {"family": "Matern", "params": {"nu": 1.5, "alpha": 0.3}}},
        "sites": {"grid": 0.2, "d": 2},
        "m": [0, 3, 35],
    })
    outputs = []
    for threads in ("1", "4"):
        out = tmp_path / f"vecchia{threads}.csv"
        assert run(["vecchia", "--config", config, "--output", str(out), "--threads", threads], settings) == EXIT_OK
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_mc_writes_summary_next_to_output(settings, write_config, read_csv, tmp_path):
    out = tmp_path / "mc.csv"
    config = write_config({"model": {"kernel": {"family": "Matern", "params": {"nu": 0.5, "alpha": 0.3}}}, "n": [16], "reps": 2})
    assert run(["mc", "--config", config, "--output", str(out)], settings) == EXIT_OK
    _, columns, rows = read_csv(out)
    assert columns == ["rep", "n", "micro_hat", "standardized_stat"]
    assert len(rows) == 2
    _, summary_columns, summary = read_csv(tmp_path / "mc.summary.csv")
    assert summary_columns[:3] == ["n", "ok", "failed"]
    assert int(summary[0][1]) + int(summary[0][2]) == 2


def test_history_lists_ledger_runs(settings, write_config, read_csv, capsys, tmp_path):
    config = write_config({"kernel": EXPONENTIAL, "x": [0.5]})
    assert run(["eval", "--config", config, "--output", str(tmp_path / "a.csv")], settings) == EXIT_OK
    bad = write_config({"kernel": EXPONENTIAL, "x": "oops"})
    assert run(["eval", "--config", bad], settings) == EXIT_CONFIG
    capsys.readouterr()

    history = tmp_path / "history.csv"
    assert run(["history", "--output", str(history)], settings) == EXIT_OK
    _, columns, rows = read_csv(history)
    assert columns[:6] == ["run_id", "subcommand", "config_hash", "seed", "threads", "status"]
    assert [(r[1], r[5], r[6]) for r in rows] == [("eval", "config_error", "2"), ("eval", "ok", "0")]


def test_history_rejects_nonpositive_limit(settings, capsys):
    assert run(["history", "--limit", "0"], settings) == EXIT_CONFIG
    assert "--limit must be positive" in capsys.readouterr().err


def test_sparsity_rows_reach_the_ledger(settings, write_config, read_csv, capsys, tmp_path):
    config = write_config({"kappa": [0], "mu": [4, "inf"], "range": 0.15, "spacing": [0.25]})
    assert run(["sparsity", "--config", config, "--output", str(tmp_path / "s.csv")], settings) == EXIT_OK
    _, columns, rows = read_csv(tmp_path / "s.csv")
    assert columns[:5] == ["family", "kappa", "mu", "C", "n"]
    assert [r[0] for r in rows] == ["GenWendlandRescaled", "Matern"]
    assert rows[1][3] == "inf"

    stored = tmp_path / "stored.csv"
    assert run(["history", "--run-id", "1", "--output", str(stored)], settings) == EXIT_OK
    _, _, stored_rows = read_csv(stored)
    assert [r[0] for r in stored_rows] == ["GenWendlandRescaled", "Matern"]
    assert stored_rows[1][3] == "-1"


def test_main_exits_with_dispatcher_code(monkeypatch, tmp_path, capsys):
    from app import main as entry

    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("DATABASE_URL", f"sqlite:///{tmp_path / 'main.db'}")
    monkeypatch.setattr("sys.argv", ["matern-lab", "eval", "--config", "missing.json"])
    with pytest.raises(SystemExit) as excinfo:
        entry.main()
    assert excinfo.value.code == EXIT_CONFIG
    assert "config file not found" in capsys.readouterr().err
