import math

import numpy as np
import pytest

from desq.bench import (
    TABLE_HEADER,
    Cell,
    SUITES,
    accuracy,
    algorithmic_state_preps,
    binary_entropy,
    cost_report,
    costmodel_experiment,
    load_writes,
    lloyd_violations,
    mse,
    rmse,
    run_benchmark,
    run_cell,
    tree_entropy,
    tree_variance,
    truncated_predictions,
)
from desq.baseline import fit_axis
from desq.cluster import IterationTrace
from desq.dataset import Dataset, Task
from desq.errors import ConfigError
from desq.qestimate import QueryLedger


class FixedLeaves:
    """Stand-in tree that routes row i to leaf ``ids[i]``."""

    def __init__(self, ids):
        self.ids = np.asarray(ids)

    def leaf_ids(self, X, depth=None):
        return self.ids[: len(X)]


def labelled(Y, task=Task.CLASSIFICATION):
    Y = np.asarray(Y, dtype=float)
    return Dataset(np.zeros((Y.size, 1)), Y, task, ())


class TestMetrics:
    def test_examples(self):
        assert accuracy([0, 1], [0, 1]) == 100.0
        assert rmse([0.5, 2.0], [0.5, 2.0]) == 0.0
        assert accuracy([0, 0], [1, 1]) == 0.0
        assert rmse([0, 0], [1, 1]) == 1.0
        assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 75.0
        assert mse([0, 0], [2, 0]) == pytest.approx(2.0)

    def test_accuracy_length(self):
        with pytest.raises(ConfigError):
            accuracy([0, 1], [0])

    def test_binary_entropy(self):
        assert binary_entropy([0, 1]) == 1.0
        assert binary_entropy([1, 1]) == 0.0
        assert binary_entropy([]) == 0.0


class TestTreeImpurity:
    def test_entropy_examples(self):
        assert tree_entropy(FixedLeaves([0, 0, 1, 1]), labelled([0, 0, 1, 1])) == 0.0
        assert tree_entropy(FixedLeaves([0, 0]), labelled([0, 1])) == 1.0
        assert tree_entropy(FixedLeaves([0, 0, 1, 1]), labelled([1, 1, 0, 1])) == pytest.approx(0.5)

    def test_variance_examples(self):
        assert tree_variance(FixedLeaves([0, 1, 1]), labelled([3, 3, 3], Task.REGRESSION)) == 0.0
        assert tree_variance(FixedLeaves([0, 0]), labelled([0, 1], Task.REGRESSION)) == 0.25
        # leaf variances 0 and 0.5 (labels ±1/√2)
        h = 1 / math.sqrt(2)
        ds = labelled([2.0, 2.0, h, -h], Task.REGRESSION)
        assert tree_variance(FixedLeaves([0, 0, 1, 1]), ds) == pytest.approx(0.25)

    def test_subset(self):
        ds = labelled([0, 1, 0, 0])
        assert tree_entropy(FixedLeaves([0, 0, 0, 0]), ds, [2, 3]) == 0.0
        assert tree_entropy(FixedLeaves([0]), ds, []) == 0.0

    def test_truncated_predictions(self):
        ds = Dataset(np.array([[0.0], [1.0], [2.0], [3.0]]), np.array([0.0, 0.0, 1.0, 1.0]),
                     Task.CLASSIFICATION, ())
        t = fit_axis(ds, max_depth=1)
        np.testing.assert_array_equal(truncated_predictions(t, ds.X, 0, ds.task), 1.0)
        np.testing.assert_array_equal(truncated_predictions(t, ds.X, 1, ds.task), ds.Y)


class TestLloyd:
    def test_counts_rises(self):
        def tr(*objs):
            return [IterationTrace(i, o, 0.0, 0, np.zeros(1)) for i, o in enumerate(objs)]

        assert lloyd_violations([((), tr(3.0, 2.0, 2.0))]) == 0
        assert lloyd_violations([((), tr(3.0, 2.0, 2.5)), ((0,), tr(1.0, 1.1))]) == 2


class TestCells:
    def test_bad_model(self):
        with pytest.raises(ConfigError):
            Cell("pima", "forest", 2, 3)

    def test_unknown_suite(self):
        with pytest.raises(ConfigError):
            run_benchmark("everything")

    def test_aggregates_recomputable(self):
        r = run_cell(Cell("pima", "desc", 1, 2), SUITES["smoke"])
        tests = [f.test_metric for f in r.folds]
        assert r.test[0] == pytest.approx(float(np.mean(tests)), abs=1e-12)
        assert r.test[1] == pytest.approx(float(np.std(tests)), abs=1e-12)
        assert r.tree_size_mean == pytest.approx(np.mean([f.tree_size for f in r.folds]), abs=1e-12)
        assert r.lloyd_violations == 0


class TestRunBenchmark:
    def test_byte_identical_reruns(self, tmp_path):
        a = run_benchmark("smoke", tmp_path / "a", threads=2)
        b = run_benchmark("smoke", tmp_path / "b")
        assert a.files == b.files
        for name in a.files:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert a.files["smoke.csv"].splitlines()[0] == TABLE_HEADER
        assert len(a.files["smoke.csv"].splitlines()) == 3

    def test_unavailable_dataset_skipped(self, monkeypatch, tmp_path):
        from desq.bench import Suite, _cells

        monkeypatch.setenv("DESQ_DATA_DIR", str(tmp_path))
        suite = Suite(tables={"t": _cells(("blood", "desc", 1, 3))}, folds_classification=2)
        out = run_benchmark(suite)
        assert out.skipped == ["blood"]
        assert out.files["t.csv"] == TABLE_HEADER + "\n"


class TestCostReport:
    def test_no_retrain_has_no_ratios(self):
        led = QueryLedger()
        with led.phase("load"):
            led.add("node_writes", 10)
        text = cost_report({"only": led})
        assert text.splitlines() == ["ledger,phase,counter,value", "only,load,node_writes,10"]

    def test_costmodel_ratios(self):
        leds = costmodel_experiment(n=256, n_new=8, d=4, k=2, depth=1)
        ret, fresh = leds["retrained"], leds["fresh_total"]
        assert load_writes(ret, retrain=True) / load_writes(ret) < 0.05
        assert algorithmic_state_preps(ret, retrain=True) == algorithmic_state_preps(fresh)
        text = cost_report(leds, reference="fresh_total")
        assert "retrained,ratio,retrain_algorithmic_state_preps_over_initial,1.0" in text
