import json
import logging
import subprocess
import sys

import pytest

from safebudget.cli import main


def _files(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def _model_file(tmp_path, transitions, name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"states": ["x", "end"], "actions": ["go"], "terminal": "end",
                                "transitions": transitions}))
    return str(path)


def test_solve_chain(tmp_path, capsys):
    assert main(["solve", "--builtin", "chain", "--p-damage", "1.0", "--delta", "5",
                 "--out", str(tmp_path)]) == 0
    table = json.loads((tmp_path / "k_star.json").read_text())
    assert table["circle/left"] == 1 and table["circle/right"] == 0
    summary = json.loads((tmp_path / "solve.json").read_text())
    assert summary["sweeps"] == 2 and summary["unsafe_states"] == []
    assert json.loads(capsys.readouterr().out)["k_star"] == table
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["command"] == "solve" and manifest["seed"] == 0


def test_solve_damage_free(tmp_path):
    model = _model_file(tmp_path, [{"s": "x", "a": "go", "s_next": "end", "d": 0, "p": 1.0, "r": 1}])
    assert main(["solve", "--model", model, "--out", str(tmp_path / "o")]) == 0
    table = json.loads((tmp_path / "o" / "k_star.json").read_text())
    assert set(table.values()) == {0}
    assert json.loads((tmp_path / "o" / "solve.json").read_text())["sweeps"] == 1


def test_unnormalized_model_exit_2(tmp_path, capsys):
    model = _model_file(tmp_path, [{"s": "x", "a": "go", "s_next": "end", "d": 0, "p": 0.7, "r": 0}])
    assert main(["solve", "--model", model, "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ProbabilityNotNormalized"
    assert err["sum"] == pytest.approx(0.7)


def test_missing_model_source_exit_2(tmp_path, capsys):
    assert main(["solve", "--out", str(tmp_path)]) == 2
    assert "error" in json.loads(capsys.readouterr().err)


def test_infeasible_exit_3(tmp_path, capsys):
    model = _model_file(tmp_path, [{"s": "x", "a": "go", "s_next": "end", "d": 1, "p": 1.0, "r": 0}])
    assert main(["simulate", "--model", model, "--delta", "0", "--out", str(tmp_path / "o")]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "Infeasible"


def test_not_converged_exit_4(tmp_path):
    assert main(["simulate", "--builtin", "chain-stochastic", "--max-iter", "2",
                 "--episodes", "10", "--out", str(tmp_path)]) == 4
    assert json.loads((tmp_path / "summary.json").read_text())["converged"] is False


def test_learn_chain(tmp_path):
    assert main(["learn", "--builtin", "chain-stochastic", "--mu", "0.4", "--delta-prob", "0.05",
                 "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "learn.json").read_text())
    assert summary["required_samples"] == 15
    if summary["consistent"]:
        assert summary["matches_true_k_star"]
    assert (tmp_path / "kernel.json").exists() and (tmp_path / "k_star_learned.json").exists()


@pytest.mark.parametrize("mu", ["0", "-0.1"])
def test_learn_bad_mu_exit_2(tmp_path, mu):
    assert main(["learn", "--builtin", "chain", "--mu", mu, "--out", str(tmp_path)]) == 2


def test_learn_single_sample_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING, logger="safebudget"):
        assert main(["learn", "--builtin", "chain-stochastic", "--samples-override", "1",
                     "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "learn.json").read_text())["consistent"] is False
    assert any("inconsistent" in r.getMessage() for r in caplog.records)
    assert (tmp_path / "k_star_learned.json").exists()


def test_validate(tmp_path, capsys):
    assert main(["validate", "--builtin", "random", "--n-states", "4", "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["valid"] is True
    assert json.loads((tmp_path / "model.json").read_text())["terminal"] == "end"


def test_experiment1(tmp_path):
    assert main(["experiment1", "--episodes", "2000", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "damage_pi_delta.csv").read_text() == "value,count\n5,2000\n"
    rows = (tmp_path / "damage_pi_c5.csv").read_text().splitlines()[1:]
    assert any(int(r.split(",")[0]) > 5 for r in rows)
    assert {"damage_pi_c1.csv", "damage_pi_c3.csv", "damage_pi_c10.csv"} <= set(_files(tmp_path))


def test_experiment2(tmp_path):
    assert main(["experiment2", "--episodes", "2000", "--c", "5", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["policies"]["pi_delta"]["min_return"] >= 5
    assert set(summary["policies"]) == {"pi_delta", "pi_c5"}


@pytest.mark.parametrize("argv", [
    ["solve", "--builtin", "random", "--seed", "4"],
    ["learn", "--builtin", "chain-stochastic", "--mu", "0.4", "--seed", "9"],
    ["simulate", "--builtin", "chain-stochastic", "--episodes", "3000", "--seed", "2"],
    ["experiment1", "--episodes", "1500", "--seed", "5"],
    ["experiment2", "--episodes", "1500", "--threads", "2"],
])
def test_replay_is_byte_identical(tmp_path, argv):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(first)]) == 0
    assert main(["replay", str(first / "manifest.json"), "--out", str(second), "--threads", "3"]) == 0
    assert _files(first) == _files(second)


def test_missing_manifest_exit_2(tmp_path):
    assert main(["replay", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "safebudget.cli", "solve", "--builtin", "chain",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["k_star"]["circle/left"] == 1
