import csv
import json

import pytest

from conftest import A3
from fvspine.cli import main


@pytest.fixture
def model_file(tmp_path):
    p = tmp_path / "model.json"
    p.write_text(json.dumps({"states": 3, "Q": A3.tolist()}))
    return str(p)


def read_tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_validate(model_file, capsys):
    assert main(["validate", "--model", model_file]) == 0
    assert "n=2, communicating, cemetery reachable" in capsys.readouterr().out


def test_validate_malformed_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"states": 3,\n "Q": [[0, 0, 0],\n')
    assert main(["validate", "--model", str(p)]) == 1
    # file:line:column diagnostic
    assert "bad.json:3:" in capsys.readouterr().err


def test_validate_negative_off_diagonal(tmp_path, capsys):
    p = tmp_path / "neg.json"
    p.write_text(json.dumps({"states": 3, "Q": [[0, 0, 0], [4, -3, -1], [1, 6, -7]]}))
    assert main(["validate", "--model", str(p)]) == 1
    err = capsys.readouterr().err
    assert "NegativeOffDiagonal" in err and "Q[1][2] = -1.0" in err


def test_exact_report(model_file, tmp_path, capsys):
    out = tmp_path / "exact"
    assert main(["exact", "--model", model_file, "--out", str(out)]) == 0
    rep = json.loads((out / "exact_report.json").read_text())
    assert abs(rep["pi"]["1,1"] - 7 / 13) < 1e-10
    assert abs(rep["spine_marginal"]["state"][0] - 111 / 169) < 1e-10
    assert abs(rep["qsd"]["lambda_inf"] - 3) < 1e-10
    assert rep["schema_version"] == 1


def test_exact_single_state(tmp_path, capsys):
    p = tmp_path / "one.json"
    p.write_text(json.dumps({"states": 2, "Q": [[0, 0], [2, -2]]}))
    assert main(["exact", "--model", str(p)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["state1"] == {"spine": 1.0, "qsd": 1.0, "qprocess": 1.0}


def test_simulate_deterministic(model_file, tmp_path, capsys):
    args = ["simulate", "--model", model_file, "--particles", "2", "--horizon", "1000", "--replicates", "2", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = read_tree(tmp_path / "a"), read_tree(tmp_path / "b")
    assert a == b
    assert {"replicate_0000/events.csv", "replicate_0000/spine.csv", "summary.json"} <= set(a)
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["complete"] and "summary.json" in man["outputs"]
    summary = json.loads(a["summary.json"])
    assert len(summary["replicates"]) == 2


def test_simulate_rejects_single_particle(model_file, tmp_path, capsys):
    assert main(["simulate", "--model", model_file, "--particles", "1", "--out", str(tmp_path)]) == 1
    assert "at least 2" in capsys.readouterr().err


def test_bad_flag_exits_one(model_file, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--model", model_file, "--particles", "two"])
    assert exc.value.code == 1


def test_config_file_and_flag_precedence(model_file, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": model_file, "particles": 3, "horizon": 5.0, "seed": 1, "replicates": 3}))
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--replicates", "1", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["replicates"] == 1 and man["config"]["particles"] == [3]
    assert not (out / "replicate_0001").exists()


def test_sidebranch_small_sample_fails(model_file, tmp_path, capsys):
    out = tmp_path / "sb"
    args = ["sidebranch", "--model", model_file, "--particles", "10", "--horizon", "4", "--seed", "3", "--out", str(out)]
    assert main(args) == 1
    assert "expected" in capsys.readouterr().err
    assert json.loads((out / "manifest.json").read_text())["complete"] is False


def test_sweep_single_row(model_file, tmp_path, capsys):
    out = tmp_path / "sw"
    args = ["sweep", "--model", model_file, "--particles", "2", "--horizon", "2000", "--seed", "5", "--out", str(out)]
    assert main(args) == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert len(rows) == 1
    row = rows[0]
    assert row["N"] == "2" and row["schema_version"] == "1"
    # the pair's spine occupancy targets the exact two-particle spine marginal
    assert float(row["ci_low"]) <= 111 / 169 <= float(row["ci_high"])


def test_sweep_horizon_count_mismatch(model_file, tmp_path, capsys):
    args = ["sweep", "--model", model_file, "--particles", "2,10,100", "--horizon", "5,6", "--out", str(tmp_path)]
    assert main(args) == 1
