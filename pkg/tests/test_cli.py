import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from builders import constant_model
from ensdiv import serialize
from ensdiv.cli import TABLE_COLUMNS, main
from ensdiv.data import write_csv
from ensdiv.losses import Dataset, Ensemble, Task


@pytest.fixture
def models_0_2_files(tmp_path):
    ens = Ensemble.uniform([constant_model([0.0]), constant_model([2.0])], Task.regression())
    model = serialize.save_ensemble(ens, tmp_path / "pair.model.json")
    data = tmp_path / "ones.csv"
    write_csv(Dataset(np.zeros((3, 1)), np.ones(3), Task.regression()), data)
    return model, data


def small_experiment(tmp_path, **train):
    section = {"k": 2, "epochs": 5, "base_learning_rate": 0.05, "hidden": [6], "batch_size": 16,
               "learning_rate_decay_epochs": [3], **train}
    config = {"name": "tiny", "data": {"kind": "sine", "n": 40, "seed": 0},
              "split": {"train_fraction": 0.5, "seed": 1}, "seeds": [0, 1], "train": section}
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(config))
    return path


def run(args, capsys):
    code = main([str(a) for a in args])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestVerify:
    def test_fresh_checkout_passes_quickly(self):
        start = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "ensdiv", "verify"], capture_output=True, text=True, timeout=120)
        elapsed = time.perf_counter() - start
        assert proc.returncode == 0, proc.stdout + proc.stderr
        assert elapsed < 60
        assert "invariants hold" in proc.stdout


class TestDecompose:
    def test_models_0_2(self, models_0_2_files, capsys):
        model, data = models_0_2_files
        code, out, _ = run(["decompose", "--model", model, "--data", data], capsys)
        assert code == 0
        report = json.loads(out)
        assert report["diversity"] == 1.0 and report["rhs"] == 0.0
        assert report["ensemble_loss"] == 0.0 and report["avg_individual_loss"] == 1.0

    def test_writes_report(self, models_0_2_files, tmp_path, capsys):
        model, data = models_0_2_files
        code, out, _ = run(["decompose", "--model", model, "--data", data, "--out", tmp_path / "out"], capsys)
        assert code == 0
        payload = json.loads((tmp_path / "out" / "pair-decompose.report.json").read_text())
        assert payload["kind"] == "sq"

    def test_missing_target_column(self, models_0_2_files, capsys):
        model, data = models_0_2_files
        code, _, err = run(["decompose", "--model", model, "--data", data, "--target", "quality"], capsys)
        assert code == 2 and "quality" in err

    def test_missing_model(self, models_0_2_files, tmp_path, capsys):
        _, data = models_0_2_files
        code, _, _ = run(["decompose", "--model", tmp_path / "nope.model.json", "--data", data], capsys)
        assert code == 2


class TestBound:
    def test_regression_bound(self, models_0_2_files, capsys):
        model, data = models_0_2_files
        code, out, _ = run(["bound", "--model", model, "--data", data, "--lam", "2", "--xi", "0.05"], capsys)
        assert code == 0
        report = json.loads(out)
        assert report["underestimated"] is True and report["epsilon_mode"] == "omit"
        assert report["avg_empirical_loss"] == 1.0 and report["empirical_diversity"] == 1.0


class TestFisher:
    def test_three_outcomes(self, capsys):
        code, out, _ = run(["fisher", "--p", "0.2,0.3", "--f", "1,2,4"], capsys)
        assert code == 0
        report = json.loads(out)
        assert report["lower_bound"] == pytest.approx(1.56, abs=1e-9)

    def test_bad_numbers(self, capsys):
        assert run(["fisher", "--p", "0.2,x", "--f", "1,2,4"], capsys)[0] == 2

    def test_degenerate_weights(self, capsys):
        assert run(["fisher", "--p", "0.6,0.4", "--f", "1,2,4"], capsys)[0] == 2


class TestTrain:
    def test_missing_config(self, tmp_path, capsys):
        path = tmp_path / "missing.json"
        code, _, err = run(["train", "--config", path], capsys)
        assert code == 2 and str(path) in err

    def test_invalid_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"train": {"k": 0}}')
        code, _, err = run(["train", "--config", path, "--out", tmp_path], capsys)
        assert code == 2 and "bad.json" in err

    def test_not_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{")
        assert run(["train", "--config", path], capsys)[0] == 2

    def test_artifacts(self, tmp_path, capsys):
        config = small_experiment(tmp_path)
        out = tmp_path / "runs"
        code, _, _ = run(["train", "--config", config, "--out", out, "--algorithm", "p2b"], capsys)
        assert code == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["tiny-p2b-s0.log.jsonl", "tiny-p2b-s0.model.json", "tiny-p2b-s1.log.jsonl",
                         "tiny-p2b-s1.model.json", "tiny-p2b.report.json"]
        for path in out.glob("*.json"):
            payload = json.loads(path.read_text())
            assert json.loads(serialize.dumps(payload)) == payload
        ens = serialize.load_ensemble(out / "tiny-p2b-s0.model.json")
        assert ens.size == 2
        log = [json.loads(line) for line in (out / "tiny-p2b-s0.log.jsonl").read_text().splitlines()]
        assert len(log) == 5
        report = json.loads((out / "tiny-p2b.report.json").read_text())
        assert [r["seed"] for r in report["results"]] == [0, 1]
        assert set(report["aggregate"]["test"]["ensemble_loss"]) == {"mean", "sd"}

    def test_seed_flag_and_loss_override(self, tmp_path, capsys):
        config = small_experiment(tmp_path)
        cfg = json.loads(config.read_text())
        cfg["data"] = {"kind": "blobs", "n": 40, "seed": 0, "n_classes": 3}
        config.write_text(json.dumps(cfg))
        code, _, _ = run(["train", "--config", config, "--out", tmp_path, "--seed", "4", "--loss", "ce",
                          "--tight-ce"], capsys)
        assert code == 0
        report = json.loads((tmp_path / "tiny-independent-s4.report.json").read_text())
        assert report["train_config"]["tight_ce"] is True
        assert "01_pac_bound" in report["results"][0]["test"]

    def test_csv_data_with_delimiter_flag(self, tmp_path, capsys):
        data = Dataset(np.linspace(-1, 1, 30)[:, None], np.linspace(0, 1, 30), Task.regression())
        write_csv(data, tmp_path / "d.csv", delimiter=";", target_column="quality")
        config = small_experiment(tmp_path)
        cfg = json.loads(config.read_text())
        cfg["data"] = {"csv": "d.csv", "target": "quality"}
        config.write_text(json.dumps(cfg))
        code, _, _ = run(["train", "--config", config, "--out", tmp_path / "o", "--delimiter", "semicolon"], capsys)
        assert code == 0


class TestReport:
    def test_stable_table(self, tmp_path, capsys):
        config = small_experiment(tmp_path)
        runs = tmp_path / "runs"
        for algorithm in ("independent", "p2b"):
            assert run(["train", "--config", config, "--out", runs, "--algorithm", algorithm], capsys)[0] == 0
        first = tmp_path / "a.table.csv"
        second = tmp_path / "b.table.csv"
        assert run(["report", runs, "--out", first], capsys)[0] == 0
        assert run(["report", runs, "--out", second], capsys)[0] == 0
        assert first.read_bytes() == second.read_bytes()
        rows = list(csv.reader(first.open()))
        assert tuple(rows[0]) == TABLE_COLUMNS
        assert {r[0] for r in rows[1:]} == {"independent", "p2b"}
        assert {r[2] for r in rows[1:]} == {"train", "test"}
        assert all(float(r[4]) == float(r[4]) for r in rows[1:])

    def test_directory_output(self, tmp_path, capsys):
        config = small_experiment(tmp_path)
        run(["train", "--config", config, "--out", tmp_path / "runs"], capsys)
        assert run(["report", tmp_path / "runs", "--out", tmp_path / "tables"], capsys)[0] == 0
        assert (tmp_path / "tables" / "experiment.table.csv").exists()

    def test_no_reports(self, tmp_path, capsys):
        assert run(["report", tmp_path, "--out", tmp_path / "t.csv"], capsys)[0] == 2


class TestParser:
    def test_unknown_subcommand(self, capsys):
        assert run(["plot"], capsys)[0] == 2

    def test_no_subcommand(self, capsys):
        assert run([], capsys)[0] == 2
