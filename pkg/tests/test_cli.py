import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from lamda import cli, container
from lamda.errors import NumericalError


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture
def weights_file(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {}
    for layer in range(2):
        for kind in ("q", "v"):
            tensors[f"L{layer}.{kind}"] = rng.normal(size=(16, 16)).astype(np.float32)
    tensors["bias"] = np.zeros(4, dtype=np.float32)  # 1-D, must be skipped
    path = tmp_path / "w.ldwt"
    container.write_weights(path, tensors)
    return path


class TestAnalyzePlan:
    def test_pipeline(self, tmp_path, weights_file):
        scores = tmp_path / "scores.json"
        energy = tmp_path / "energy.csv"
        assert run_cli("analyze", "--weights", str(weights_file),
                       "--ranks", "2,4,6", "--target", "4",
                       "--scores-out", str(scores),
                       "--energy-csv", str(energy), "--max-rank", "6") == 0
        doc = json.loads(scores.read_text())
        assert len(doc["modules"]) == 4
        with open(energy, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4 * 6
        assert all(0 < float(r["energy_ratio"]) <= 1.0 + 1e-12 for r in rows)

        budget = tmp_path / "budget.json"
        budget.write_text(json.dumps({"ranks": [2, 4, 6], "target": 4}))
        plan = tmp_path / "plan.json"
        assert run_cli("plan", "--scores", str(scores), "--budget", str(budget),
                       "--out", str(plan)) == 0
        plan_doc = json.loads(plan.read_text())
        # 4 modules over 3 quantiles: boundaries 0,1,2,4 -> ranks 6,4,2,2
        assert sorted(plan_doc["ranks"].values()) == [2, 2, 4, 6]

        rev = tmp_path / "rev.json"
        assert run_cli("plan", "--scores", str(scores), "--budget", str(budget),
                       "--reverse", "--out", str(rev)) == 0
        rev_doc = json.loads(rev.read_text())
        first = plan_doc["order"][0]
        assert plan_doc["ranks"][first] == 6 and rev_doc["ranks"][first] == 2

    def test_missing_module_is_usage_error(self, weights_file, capsys):
        code = run_cli("analyze", "--weights", str(weights_file),
                       "--ranks", "2,4,6", "--target", "4",
                       "--modules", "L0.q,L9.zz")
        assert code == 2
        assert "L9.zz" in capsys.readouterr().err

    def test_missing_file_is_usage_error(self, tmp_path):
        assert run_cli("analyze", "--weights", str(tmp_path / "nope.ldwt"),
                       "--ranks", "2,4,6", "--target", "4") == 2

    def test_bad_rank_list(self, weights_file):
        assert run_cli("analyze", "--weights", str(weights_file),
                       "--ranks", "2,four,6", "--target", "4") == 2


class TestCount:
    def test_lamda_json_and_csv(self, tmp_path):
        out = tmp_path / "count.json"
        out_csv = tmp_path / "count.csv"
        assert run_cli("count", "--model-preset", "llama2-7b", "--method", "lamda",
                       "--rank", "32", "--ti", "0.3",
                       "--json", str(out), "--csv", str(out_csv)) == 0
        doc = json.loads(out.read_text())
        assert doc["effective_params"] == pytest.approx(4.37e6, rel=0.005)
        with open(out_csv, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[-1][0] == "TOTAL"

    def test_lora(self, tmp_path):
        out = tmp_path / "count.json"
        assert run_cli("count", "--model-preset", "llama2-7b", "--method", "lora",
                       "--rank", "16", "--json", str(out)) == 0
        doc = json.loads(out.read_text())
        assert doc["trainable_params"] == pytest.approx(28.0e6, rel=0.005)

    def test_unknown_preset(self):
        assert run_cli("count", "--model-preset", "gpt-99", "--method", "lora",
                       "--json", "-") == 2

    def test_unknown_method(self):
        assert run_cli("count", "--model-preset", "llama2-7b", "--method", "prefix",
                       "--json", "-") == 2


def _run_config(tmp_path, **overrides):
    doc = {
        "method": "lamda", "task": "copy", "rank": 2, "total_steps": 8,
        "batch_size": 2, "lr": 0.005, "seed": 3, "adapted_kinds": ["q", "v"],
        "model": {"layers": 1, "d_model": 16, "heads": 2, "ffn_dim": 32,
                  "vocab": 11, "context": 8},
    }
    doc.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return path


class TestFinetuneReport:
    def test_end_to_end(self, tmp_path):
        cfg = _run_config(tmp_path)
        out = tmp_path / "runs" / "a"
        assert run_cli("finetune", "--config", str(cfg), "--out-dir", str(out)) == 0
        with open(out / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8
        assert all(np.isfinite(float(r["loss"])) for r in rows)
        tensors, meta = container.load_checkpoint(out / "checkpoint.ldck")
        assert meta["step"] == 8 and "adapter/L0.q/s" in tensors
        backbone = container.read_weights(out / "backbone.ldwt")
        assert "tok_emb" in backbone
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final_loss"] == float(rows[-1]["loss"])

        # second run so the report has two columns to merge
        cfg_b = _run_config(tmp_path, seed=4)
        assert run_cli("finetune", "--config", str(cfg_b),
                       "--out-dir", str(tmp_path / "runs" / "b")) == 0
        merged = tmp_path / "merged.csv"
        assert run_cli("report", "--runs", str(tmp_path / "runs"),
                       "--out", str(merged)) == 0
        with open(merged, newline="") as fh:
            header = next(csv.reader(fh))
        assert header == ["step", "a.loss", "a.live_params", "b.loss", "b.live_params"]

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        cfg = _run_config(tmp_path, learning_rate=0.1)
        code = run_cli("finetune", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
        assert code == 2
        assert "learning_rate" in capsys.readouterr().err

    def test_invalid_json_is_usage_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli("finetune", "--config", str(bad),
                       "--out-dir", str(tmp_path / "o")) == 2

    def test_report_with_no_runs(self, tmp_path):
        assert run_cli("report", "--runs", str(tmp_path), "--out",
                       str(tmp_path / "m.csv")) == 2

    def test_numerical_failure_maps_to_exit_3(self, tmp_path, monkeypatch):
        cfg = _run_config(tmp_path)

        def boom(*args, **kwargs):
            raise NumericalError("loss diverged at step 0")

        monkeypatch.setattr(cli, "train", boom)
        assert run_cli("finetune", "--config", str(cfg),
                       "--out-dir", str(tmp_path / "o")) == 3


def test_console_entry_point(tmp_path):
    out = tmp_path / "c.json"
    proc = subprocess.run(
        [sys.executable, "-m", "lamda.cli", "count", "--model-preset",
         "deberta-v3-base", "--method", "lora", "--rank", "8", "--json", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["trainable_params"] == pytest.approx(1.33e6, rel=0.01)
