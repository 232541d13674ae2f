import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hybridrules import InfeasibleError
from hybridrules.cli import main
from hybridrules.data import read_binary_csv

from test_harness import write_raw


@pytest.fixture
def work(tmp_path):
    data, schema = write_raw(tmp_path, seed=3)
    out = str(tmp_path / "work")
    assert main(["mine", "--data", data, "--schema", schema, "--out", out, "--q", "3", "--top-k", "12"]) == 0
    for name in ("train", "valid", "test"):
        d = read_binary_csv(os.path.join(out, f"{name}.csv"))
        np.savetxt(os.path.join(out, f"bb_{name}.txt"), d.X[:, 1], fmt="%d")
    return out


def last_json(capsys):
    return [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()][-1]


def test_mine_outputs(work):
    for f in ("train.csv", "valid.csv", "test.csv", "pool.json", "binarization.json", "train.rows"):
        assert os.path.exists(os.path.join(work, f))


def test_train_eval_predict_roundtrip(work, tmp_path, capsys):
    out = str(tmp_path / "m")
    args = ["train", "--workdir", work, "--mode", "post", "--min-coverage", "0.5", "--lambda", "0.01",
            "--bb-preds", f"{work}/bb_train.txt", "--bb-preds-valid", f"{work}/bb_valid.txt",
            "--bb-preds-test", f"{work}/bb_test.txt", "--time-limit", "60", "--mem-limit", "1G",
            "--out", out, "-v"]
    assert main(args) == 0
    row = last_json(capsys)
    model = os.path.join(out, "model.json")
    assert main(["eval", "--model", model, "--data", f"{work}/train.csv",
                 "--bb-preds", f"{work}/bb_train.txt"]) == 0
    m = last_json(capsys)
    assert m["transparency"] == row["train_transparency"] >= 0.5
    assert main(["eval", "--model", model, "--data", f"{work}/test.csv",
                 "--bb-preds", f"{work}/bb_test.txt"]) == 0
    assert last_json(capsys)["accuracy"] == row["test_accuracy"]
    pred = str(tmp_path / "pred.csv")
    assert main(["predict", "--model", model, "--data", f"{work}/test.csv",
                 "--bb-preds", f"{work}/bb_test.txt", "--out", pred]) == 0
    lines = open(pred).read().splitlines()
    assert lines[0] == "index,label,routed_to"
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(range(len(lines) - 1))


def test_eval_without_predictions_fails(work, tmp_path, capsys):
    out = str(tmp_path / "m")
    assert main(["train", "--workdir", work, "--mode", "post", "--min-coverage", "0.2",
                 "--bb-preds", f"{work}/bb_train.txt", "--out", out]) == 0
    code = main(["eval", "--model", f"{out}/model.json", "--data", f"{work}/test.csv"])
    assert code == 3
    assert "black box" in capsys.readouterr().err


def test_raw_data_eval_uses_stored_binarization(work, tmp_path, capsys):
    out = str(tmp_path / "m")
    assert main(["train", "--workdir", work, "--mode", "pre", "--min-coverage", "0.3", "--epochs", "200",
                 "--out", out]) == 0
    assert main(["eval", "--model", f"{out}/model.json", "--data", str(tmp_path / "raw.csv"),
                 "--schema", str(tmp_path / "schema.json")]) == 0
    assert last_json(capsys)["n"] == 240
    w = str(tmp_path / "w.csv")
    assert main(["weights", "--model", f"{out}/model.json", "--data", f"{work}/train.csv", "--out", w]) == 0
    assert abs(sum(float(l.split(",")[1]) for l in open(w).read().splitlines()[1:]) - 1) < 1e-12


def test_exit_codes(work, tmp_path, capsys, monkeypatch):
    with pytest.raises(SystemExit) as e:
        main(["train", "--mode", "nonsense"])
    assert e.value.code == 2
    assert main(["train", "--workdir", work, "--min-coverage", "1.5"]) == 2
    assert main(["train", "--workdir", work, "--mode", "post"]) == 2
    assert main(["train", "--workdir", str(tmp_path / "missing")]) == 3
    assert main(["eval", "--model", str(tmp_path / "none.json"), "--data", f"{work}/test.csv"]) == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("0\n2\n")
    assert main(["train", "--workdir", work, "--mode", "post", "--bb-preds", str(bad)]) == 3

    import hybridrules.harness as harness

    def infeasible(*a, **k):
        raise InfeasibleError("initial prefix violates the transparency constraint")

    monkeypatch.setattr(harness, "optimize", infeasible)
    assert main(["train", "--workdir", work, "--out", str(tmp_path / "x")]) == 4


def test_config_file_overrides_flags(work, tmp_path, capsys):
    from hybridrules.harness import RunConfig

    c = RunConfig(workdir=work, mode="corels", psis=[0.25], lambdas=[0.01], out=str(tmp_path / "c"),
                  time_limit=30)
    path = tmp_path / "cfg.json"
    path.write_text(c.to_json())
    assert main(["train", "--config", str(path)]) == 0
    assert RunConfig.from_json(open(tmp_path / "c" / "config.json").read()) == c


def test_pareto_cli(work, tmp_path, capsys):
    out = str(tmp_path / "p")
    assert main(["pareto", "--workdir", work, "--mode", "corels", "--min-coverage", "0.1,0.5,0.9",
                 "--lambda", "0.01,0.001", "--out", out]) == 0
    summary = last_json(capsys)
    assert summary["n_cells"] == 6 and summary["front"]
    assert len(open(os.path.join(out, "pareto.csv")).read().splitlines()) == 7


def test_theory_cli(tmp_path, capsys):
    out = str(tmp_path / "t")
    assert main(["theory", "--m", "5000", "--ratio", "100", "--grid", "0.05,0.09,0.2,0.5,0.9",
                 "--out", out]) == 0
    s = last_json(capsys)
    assert s["interior"] is True and s["argmin"] == 0.09
    rows = open(os.path.join(out, "auc.csv")).read().splitlines()
    assert rows[0] == "C_Omega,normalized_auc" and len(rows) == 6
    assert json.load(open(os.path.join(out, "summary.json")))["argmin"] == 0.09
    assert main(["theory", "--ratio", "0.5", "--out", out]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "hybridrules", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("mine", "train", "predict", "eval", "pareto", "theory", "weights"):
        assert cmd in r.stdout
