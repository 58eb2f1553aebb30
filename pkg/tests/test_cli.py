import json

import numpy as np
import pytest

from groupmtl.cli import main
from groupmtl.data import DatasetBundle, save_dataset


@pytest.fixture
def train_csv(tmp_path):
    rng = np.random.default_rng(0)
    xs, ys = [], []
    w = rng.standard_normal(3)
    for _ in range(2):
        x = rng.standard_normal((14, 3))
        y = np.where(x @ w >= 0, 1.0, -1.0)
        if np.unique(y).size < 2:
            y[0] = -y[0]
        xs.append(x)
        ys.append(y)
    bundle = DatasetBundle(xs, ys, task_names=["a", "b"])
    path = tmp_path / "train.csv"
    save_dataset(bundle, path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestTrain:
    def test_train_writes_model(self, tmp_path, train_csv, capsys):
        out = tmp_path / "model.json"
        code, stdout, _ = run(capsys, "train", "--data", train_csv,
                              "--out", out, "--eps", "1e-2")
        assert code == 0
        assert out.exists()
        payload = json.loads(out.read_text())
        assert payload["format"] == "groupmtl-model"
        assert "gamma=" in stdout and "certified=true" in stdout
        assert f"model={out}" in stdout

    def test_bad_p_exits_two(self, tmp_path, train_csv, capsys):
        code, _, err = run(capsys, "train", "--data", train_csv,
                           "--out", tmp_path / "m.json", "--p", "2.5")
        assert code == 2
        assert "p must lie in (1, 2]" in err

    def test_missing_data_exits_two(self, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--data", tmp_path / "nope.csv",
                           "--out", tmp_path / "m.json")
        assert code == 2
        assert "error:" in err


@pytest.fixture
def model_path(tmp_path, train_csv, capsys):
    out = tmp_path / "model.json"
    assert main(["train", "--data", str(train_csv), "--out", str(out),
                 "--eps", "1e-2"]) == 0
    capsys.readouterr()
    return out


class TestPredict:
    def test_scores_and_header(self, tmp_path, train_csv, model_path, capsys):
        code, stdout, _ = run(capsys, "predict", "--model", model_path,
                              "--data", train_csv)
        lines = stdout.strip().splitlines()
        assert code == 0
        assert lines[0] == "task,score,label"
        assert len(lines) == 1 + 28
        task, score, label = lines[1].split(",")
        assert task == "a" and label in ("1", "-1")
        float(score)

    def test_out_file_and_repr_round_trip(self, tmp_path, train_csv,
                                          model_path, capsys):
        out = tmp_path / "scores.csv"
        code, _, _ = run(capsys, "predict", "--model", model_path,
                         "--data", train_csv, "--out", out)
        assert code == 0
        l1 = out.read_text()
        code, _, _ = run(capsys, "predict", "--model", model_path,
                         "--data", train_csv, "--out", out)
        assert out.read_text() == l1  # bit-exact reruns

    def test_empty_input(self, tmp_path, model_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("task,label,f1,f2,f3\n")
        code, stdout, _ = run(capsys, "predict", "--model", model_path,
                              "--data", empty)
        assert code == 0
        assert stdout.strip() == "task,score,label"

    def test_dimension_mismatch(self, tmp_path, model_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("task,label,f1\na,1,0.5\na,-1,0.3\n")
        code, _, err = run(capsys, "predict", "--model", model_path,
                           "--data", bad)
        assert code == 2
        assert "dimension mismatch" in err

    def test_corrupt_model(self, tmp_path, train_csv, model_path, capsys):
        payload = json.loads(model_path.read_text())
        payload["bias"][0] += 1.0
        model_path.write_text(json.dumps(payload))
        code, _, err = run(capsys, "predict", "--model", model_path,
                           "--data", train_csv)
        assert code == 2
        assert "checksum" in err


class TestEval:
    def test_report_format(self, train_csv, model_path, capsys):
        code, stdout, _ = run(capsys, "eval", "--model", model_path,
                              "--data", train_csv)
        assert code == 0
        lines = stdout.strip().splitlines()
        assert lines[0].startswith("task=a auc=")
        assert lines[1].startswith("task=b auc=")
        assert lines[-1].startswith("auc_macro=")
        assert "acc_macro=" in lines[-1]

    def test_single_class_task_omitted(self, tmp_path, model_path, capsys):
        data = tmp_path / "oneclass.csv"
        data.write_text("task,label,f1,f2,f3\n"
                        "a,1,0.1,0.2,0.3\na,1,0.4,0.5,0.6\n"
                        "b,1,0.0,0.1,0.2\nb,-1,1.0,1.1,1.2\n")
        code, stdout, _ = run(capsys, "eval", "--model", model_path,
                              "--data", data)
        assert code == 0
        assert "task=a auc=omitted reason=single-class" in stdout


class TestSynth:
    def test_outputs_and_determinism(self, tmp_path, capsys):
        args = ["synth", "--T", "4", "--groups", "2,2", "--dim", "10",
                "--kshared", "3", "--m", "12", "--mtest", "8",
                "--seed", "3", "--out-prefix", str(tmp_path / "syn")]
        code, stdout, _ = run(capsys, *args)
        assert code == 0 and "written=" in stdout
        train = (tmp_path / "syn_train.csv").read_text()
        test = (tmp_path / "syn_test.csv").read_text()
        truth = (tmp_path / "syn_truth.txt").read_text()
        assert truth.startswith("version=1\n")
        assert "group0=0,1" in truth and "group1=2,3" in truth
        code, _, _ = run(capsys, *args)
        assert code == 0
        assert (tmp_path / "syn_train.csv").read_text() == train
        assert (tmp_path / "syn_test.csv").read_text() == test
        assert (tmp_path / "syn_truth.txt").read_text() == truth

    def test_bad_groups(self, tmp_path, capsys):
        code, _, err = run(capsys, "synth", "--T", "4", "--groups", "3,3",
                           "--dim", "10", "--kshared", "3", "--m", "12",
                           "--out-prefix", str(tmp_path / "x"))
        assert code == 2
        assert "does not partition" in err


class TestBench:
    def test_table_and_recovery_report(self, capsys):
        code, stdout, _ = run(
            capsys, "bench", "--methods", "stl,grouped", "--seeds", "2",
            "--T", "2", "--groups", "1,1", "--dim", "6", "--kshared", "2",
            "--m", "10", "--mtest", "20", "--eps", "1e-2")
        assert code == 0
        lines = stdout.strip().splitlines()
        method_lines = [l for l in lines if l.startswith("method=")]
        assert len(method_lines) == 2
        for l in method_lines:
            assert "auc_mean=" in l and "auc_std=" in l and "seeds=2" in l
        rec = [l for l in lines if "planted_group=" in l]
        assert len(rec) == 4  # 2 seeds x 2 planted groups
        for l in rec:
            assert "recovered=" in l and "gamma=" in l

    def test_unknown_method(self, capsys):
        code, _, err = run(capsys, "bench", "--methods", "magic")
        assert code == 2
        assert "unknown method" in err


class TestConfig:
    def test_config_supplies_defaults(self, tmp_path, train_csv, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nC = 2.0\neps = 1e-2\n")
        out = tmp_path / "m.json"
        code, _, _ = run(capsys, "train", "--data", train_csv,
                         "--out", out, "--config", cfg)
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["hyper"]["C"] == 2.0
        assert payload["hyper"]["eps"] == 0.01

    def test_explicit_flag_wins(self, tmp_path, train_csv, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("C=2.0\n")
        out = tmp_path / "m.json"
        code, _, _ = run(capsys, "train", "--data", train_csv, "--out", out,
                         "--config", cfg, "--C", "5.0", "--eps", "1e-2")
        assert code == 0
        assert json.loads(out.read_text())["hyper"]["C"] == 5.0

    def test_unknown_key(self, tmp_path, train_csv, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("frobnicate=1\n")
        code, _, err = run(capsys, "train", "--data", train_csv,
                           "--out", tmp_path / "m.json", "--config", cfg)
        assert code == 2
        assert "unknown config keys" in err

    def test_malformed_line(self, tmp_path, train_csv, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just-some-words\n")
        code, _, err = run(capsys, "train", "--data", train_csv,
                           "--out", tmp_path / "m.json", "--config", cfg)
        assert code == 2
        assert "key=value" in err
