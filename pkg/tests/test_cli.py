import hashlib
from pathlib import Path

import numpy as np
import pytest

import desq
from desq.cli import main
from desq.cluster import ClusterConfig
from desq.dataset import Dataset, Standardizer, Task, load_csv
from desq.kptree import build
from desq.qestimate import EstimatorConfig, QueryLedger
from desq.tree import DesqTree, fit

PIMA = Path(desq.__file__).parent / "data" / "pima.csv"


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture
def split_csv(tmp_path):
    lines = PIMA.read_text().splitlines()
    header, rows = lines[0], lines[1:]
    parts = {"train": rows[:300], "batch": rows[300:316], "test": rows[316:366]}
    out = {}
    for name, body in parts.items():
        p = tmp_path / f"{name}.csv"
        p.write_text("\n".join([header] + body) + "\n")
        out[name] = p
    # a test file without the label column
    feats = tmp_path / "features.csv"
    feats.write_text("\n".join(",".join(r.split(",")[:-1]) for r in [header] + parts["test"]) + "\n")
    out["features"] = feats
    return out


def train(split_csv, tmp_path, *extra):
    model = tmp_path / "m1"
    code = main(["train", "--data", str(split_csv["train"]), "--task", "classify", "--depth", "2",
                 "--clusters", "3", "--seed", "1", "--out", str(model), *extra])
    assert code == 0
    return model


class TestPipeline:
    def test_train_then_predict(self, split_csv, tmp_path):
        model = train(split_csv, tmp_path)
        assert sorted(p.name for p in model.iterdir()) == sorted(
            ["tree.txt", "forest.txt", "standardizer.txt", "ledger.txt", "weights.txt"])
        out = tmp_path / "pred.csv"
        assert main(["predict", "--model", str(model), "--data", str(split_csv["features"]),
                     "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "prediction"
        assert len(lines) == 51
        assert set(lines[1:]) <= {"0.0", "1.0"}

    def test_predict_accepts_labelled_file(self, split_csv, tmp_path, capsys):
        model = train(split_csv, tmp_path)
        capsys.readouterr()
        assert main(["predict", "--model", str(model), "--data", str(split_csv["test"])]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 51

    def test_retrain_matches_library_batch_fit(self, split_csv, tmp_path):
        model = train(split_csv, tmp_path)
        out = tmp_path / "m2"
        assert main(["retrain", "--model", str(model), "--batch", str(split_csv["batch"]),
                     "--out", str(out)]) == 0
        ledger = QueryLedger.from_text((out / "ledger.txt").read_text())
        assert "retrain.load" in ledger.phases()
        # same frozen standardizer, fresh batch fit over both files
        std = Standardizer.from_text((model / "standardizer.txt").read_text())
        a = load_csv(split_csv["train"], "classify")
        b = load_csv(split_csv["batch"], "classify")
        full = std.apply(Dataset(np.vstack([a.X, b.X]), np.concatenate([a.Y, b.Y]),
                                 Task.CLASSIFICATION, a.feature_names))
        cc = ClusterConfig(3, cfg=EstimatorConfig(seed=1))
        ref = fit(full, build(full), cc, 2)
        got = DesqTree.from_text((out / "tree.txt").read_text())
        probe = std.transform_X(load_csv(split_csv["test"], "classify").X)
        np.testing.assert_array_equal(got.predict_many(probe), ref.predict_many(probe))

    def test_weights_and_cluster_reports(self, split_csv, capsys):
        assert main(["weights", "--data", str(split_csv["train"])]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "feature,raw_w,normalized_w,error_bound"
        assert len(out) == 9
        assert main(["cluster", "--data", str(split_csv["train"]), "-k", "2"]) == 0
        assert capsys.readouterr().out.startswith("iteration,objective,movement,repaired\n")

    def test_costmodel(self, capsys):
        assert main(["costmodel", "--n", "128", "--n-new", "4", "--d", "3", "--depth", "1"]) == 0
        text = capsys.readouterr().out
        assert "retrain_load_writes_over_initial" in text

    def test_bench_smoke(self, tmp_path, capsys):
        assert main(["bench", "--suite", "smoke", "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "b" / "smoke.csv").is_file()


class TestExitCodes:
    def test_usage_error(self, split_csv, tmp_path):
        assert main(["train", "--data", str(split_csv["train"]), "--depth", "0",
                     "--out", str(tmp_path / "x")]) == 2
        assert main(["bench", "--suite", "nope"]) == 2
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == 2

    def test_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,y\nfoo,1\n")
        assert main(["train", "--data", str(bad), "--out", str(tmp_path / "m")]) == 3
        assert main(["predict", "--model", str(tmp_path / "missing"), "--data", str(bad)]) == 3

    def test_invariant_error(self, split_csv, tmp_path):
        model = train(split_csv, tmp_path)
        forest = model / "forest.txt"
        lines = forest.read_text().splitlines()
        i = next(n for n, l in enumerate(lines) if l.startswith("col0,0,0,"))
        parts = lines[i].split(",")
        parts[3] = repr(float(parts[3]) * 2 + 1)
        lines[i] = ",".join(parts)
        forest.write_text("\n".join(lines) + "\n")
        assert main(["predict", "--model", str(model), "--data", str(split_csv["features"])]) == 4


class TestConfig:
    def test_file_then_flags(self, split_csv, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[model]\ndepth = 1\nclusters = 2\n")
        m1 = tmp_path / "a"
        main(["train", "--config", str(cfg), "--data", str(split_csv["train"]), "--out", str(m1)])
        t = DesqTree.from_text((m1 / "tree.txt").read_text())
        assert (t.depth, t.k) == (1, 2)
        m2 = tmp_path / "b"
        main(["train", "--config", str(cfg), "--data", str(split_csv["train"]), "--depth", "3",
              "--out", str(m2)])
        t = DesqTree.from_text((m2 / "tree.txt").read_text())
        assert (t.depth, t.k) == (3, 2)

    def test_unknown_key(self, split_csv, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[model]\ncolour = blue\n")
        assert main(["train", "--config", str(cfg), "--data", str(split_csv["train"]),
                     "--out", str(tmp_path / "m")]) == 2

    def test_seed_env_fallback(self, split_csv, tmp_path, monkeypatch):
        monkeypatch.setenv("DESQ_SEED", "7")
        m = tmp_path / "m"
        main(["train", "--data", str(split_csv["train"]), "--out", str(m)])
        assert "# seed=7" in (m / "tree.txt").read_text()
        main(["train", "--data", str(split_csv["train"]), "--seed", "3", "--out", str(m)])
        assert "# seed=3" in (m / "tree.txt").read_text()


class TestReproducibility:
    def test_seed_determines_outputs(self, split_csv, tmp_path):
        args = ["--data", str(split_csv["train"]), "--method", "ae", "--seed", "5", "-k", "3"]
        main(["train", *args, "--out", str(tmp_path / "a")])
        main(["train", *args, "--out", str(tmp_path / "b")])
        for name in ("tree.txt", "forest.txt", "ledger.txt", "weights.txt"):
            assert digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name)

    def test_inputs_untouched(self, split_csv, tmp_path):
        before = {k: digest(p) for k, p in split_csv.items()}
        model = train(split_csv, tmp_path)
        main(["predict", "--model", str(model), "--data", str(split_csv["features"])])
        main(["retrain", "--model", str(model), "--batch", str(split_csv["batch"]),
              "--out", str(tmp_path / "m2")])
        assert {k: digest(p) for k, p in split_csv.items()} == before
