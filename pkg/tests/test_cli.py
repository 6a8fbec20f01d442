import json
from pathlib import Path

import numpy as np
import pytest

from mgkd import cli, data, modelio, numcore

CONFIG = """\
[dataset]
n = 2500
d_pre = 4
d_in = 4
positive_rate = 0.12
snr_pre = 0.08
snr_in_base = 0.6
window_days = 30
window_gain = 0.5
seed = 7
frac_valid = 0.15
frac_test = 0.15

[teacher]
hidden_dims = 12,12
dropout = 0.1
lr = 0.005
batch_size = 1024
max_epochs = 4
patience = 2

[student]
hidden_dims = 12,12
dropout = 0.1
lr = 0.005
batch_size = 1024
max_epochs = 4
patience = 2
alpha = 0.2
beta = 0.25
lambda = 0.1
tau = 2.5
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    config = out / "run.ini"
    config.write_text(CONFIG)
    rc = cli.main(["generate", "--config", str(config), "--out", str(out)])
    assert rc == 0
    rc = cli.main(["train", "--config", str(config), "--out", str(out),
                   "--mode", "teacher"])
    assert rc == 0
    return out, config


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


class TestGenerate:
    def test_dataset_written(self, workdir):
        out, _ = workdir
        ds = data.load_delimited(out / "dataset.csv")
        assert ds.n == 2500
        manifest = json.loads((out / "generate_manifest.json").read_text())
        assert manifest["dataset_sha256"]
        assert manifest["config"]["n"] == 2500

    def test_reproducible_hash(self, workdir, tmp_path):
        out, config = workdir
        rc = cli.main(["generate", "--config", str(config),
                       "--out", str(tmp_path)])
        assert rc == 0
        a = json.loads((out / "generate_manifest.json").read_text())
        b = json.loads((tmp_path / "generate_manifest.json").read_text())
        assert a["dataset_sha256"] == b["dataset_sha256"]

    def test_malformed_key_exit_2(self, workdir, tmp_path, capsys):
        _, _ = workdir
        bad = tmp_path / "bad.ini"
        bad.write_text("[dataset]\nn = 100\nbogus_knob = 3\n")
        rc = cli.main(["generate", "--config", str(bad),
                       "--out", str(tmp_path)])
        assert rc == 2
        assert "bogus_knob" in capsys.readouterr().err


class TestTrain:
    def test_teacher_and_student(self, workdir):
        out, config = workdir
        assert (out / "teacher.mgkd").exists()
        rc = cli.main(["train", "--config", str(config), "--out", str(out),
                       "--mode", "full"])
        assert rc == 0
        assert (out / "student_full.mgkd").exists()
        trace = read_jsonl(out / "trace_full.jsonl")
        epochs = [r for r in trace if r["record"] == "epoch"]
        assert epochs[0]["self"] == 0.0            # lambda gated in epoch 1
        assert epochs[1]["self"] > 0.0

    def test_missing_teacher_exit_3(self, workdir, tmp_path):
        out, config = workdir
        rc = cli.main(["train", "--config", str(config), "--out", str(out),
                       "--mode", "full",
                       "--teacher", str(tmp_path / "nope.mgkd")])
        assert rc == 3

    def test_full_zero_coeffs_matches_baseline(self, workdir, tmp_path):
        out, config = workdir
        zero_cfg = tmp_path / "zero.ini"
        zero_cfg.write_text(CONFIG.replace("alpha = 0.2", "alpha = 0.0")
                            .replace("beta = 0.25", "beta = 0.0")
                            .replace("lambda = 0.1", "lambda = 0.0"))
        for mode in ("full", "baseline_pre"):
            rc = cli.main(["train", "--config", str(zero_cfg),
                           "--out", str(tmp_path), "--mode", mode,
                           "--teacher", str(out / "teacher.mgkd"),
                           "--data", str(out / "dataset.csv")])
            assert rc == 0
        a, _ = modelio.load_model(tmp_path / "student_full.mgkd")
        b, _ = modelio.load_model(tmp_path / "student_baseline_pre.mgkd")
        for (_, x), (_, y) in zip(a.param_arrays(), b.param_arrays()):
            assert np.array_equal(x, y)


class TestEval:
    def test_eval_report_round_trip(self, workdir):
        out, config = workdir
        rc = cli.main(["eval", "--model", str(out / "teacher.mgkd"),
                       "--data", str(out / "dataset.csv"),
                       "--config", str(config),
                       "--split", "test", "--out", str(out)])
        assert rc == 0
        record = read_jsonl(out / "eval_results.jsonl")[0]
        assert record["split"] == "test"
        assert 0.0 <= record["auc"] <= 1.0
        assert 0.0 <= record["ks"] <= 1.0

    def test_eval_deterministic(self, workdir, tmp_path):
        out, config = workdir
        results = []
        for sub in ("a", "b"):
            d = tmp_path / sub
            d.mkdir()
            rc = cli.main(["eval", "--model", str(out / "teacher.mgkd"),
                           "--data", str(out / "dataset.csv"),
                           "--config", str(config),
                           "--split", "valid", "--out", str(d)])
            assert rc == 0
            results.append((d / "eval_results.jsonl").read_text())
        assert results[0] == results[1]

    def test_width_mismatch_exit_4(self, workdir, tmp_path):
        out, config = workdir
        # A model expecting a different input width than the dataset.
        model = numcore.init_mlp(9, [4], 0.0, np.random.default_rng(0))
        bad = tmp_path / "bad.mgkd"
        modelio.save_model(model, bad, "pre")
        rc = cli.main(["eval", "--model", str(bad),
                       "--data", str(out / "dataset.csv"),
                       "--config", str(config),
                       "--split", "test", "--out", str(tmp_path)])
        assert rc == 4

    def test_missing_model_exit_3(self, workdir, tmp_path):
        out, _ = workdir
        rc = cli.main(["eval", "--model", str(tmp_path / "none.mgkd"),
                       "--data", str(out / "dataset.csv"),
                       "--out", str(tmp_path)])
        assert rc == 3


class TestSweep:
    def test_row_count(self, workdir, tmp_path):
        out, config = workdir
        rc = cli.main(["sweep", "--config", str(config), "--out",
                       str(tmp_path), "--param", "alpha",
                       "--grid", "0.0,0.2", "--seeds", "0,1",
                       "--data", str(out / "dataset.csv")])
        assert rc == 0
        records = read_jsonl(tmp_path / "sweep_alpha_results.jsonl")
        assert len(records) == 4
        assert {r["value"] for r in records} == {0.0, 0.2}

    def test_invalid_grid_exit_2(self, workdir, tmp_path):
        out, config = workdir
        rc = cli.main(["sweep", "--config", str(config), "--out",
                       str(tmp_path), "--param", "alpha",
                       "--grid", "0.0,1.5", "--seeds", "0",
                       "--data", str(out / "dataset.csv")])
        assert rc == 2


class TestAblate:
    def test_table_and_ordering_line(self, workdir, tmp_path, capsys):
        out, config = workdir
        rc = cli.main(["ablate", "--config", str(config), "--out",
                       str(tmp_path), "--seeds", "0",
                       "--data", str(out / "dataset.csv")])
        assert rc == 0
        records = read_jsonl(tmp_path / "ablation_results.jsonl")
        mode_rows = [r for r in records if r["record"] == "ablation_mode"]
        assert len(mode_rows) == 6
        check = [r for r in records if r["record"] == "ordering_check"]
        assert len(check) == 1
        assert "ordering check" in capsys.readouterr().out


class TestModelFile:
    def test_round_trip(self, tmp_path):
        model = numcore.init_mlp(5, [7, 3], 0.25, np.random.default_rng(4))
        path = tmp_path / "m.mgkd"
        modelio.save_model(model, path, "both")
        back, feature_mode = modelio.load_model(path)
        assert feature_mode == "both"
        assert back.dropout_rate == 0.25
        for (_, a), (_, b) in zip(model.param_arrays(), back.param_arrays()):
            assert np.array_equal(a, b)

    def test_magic_bytes(self, tmp_path):
        model = numcore.init_mlp(2, [2], 0.0, np.random.default_rng(0))
        path = tmp_path / "m.mgkd"
        modelio.save_model(model, path, "pre")
        assert path.read_bytes()[:4] == b"MGKD"
