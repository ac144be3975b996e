import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from desq.cluster import ClusterConfig
from desq.dataset import Dataset, Task
from desq.errors import ConfigError, DimensionError, EmptyCluster, ParseError
from desq.kptree import build
from desq.qestimate import EstimatorConfig
from desq.tree import DesqTree, EvalCounter, fit, leaf_label, predict, retrain


def clf(X, Y):
    return Dataset(np.asarray(X, float), np.asarray(Y, float), Task.CLASSIFICATION, ())


def random_clf(seed, n, d=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    Y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0).astype(float)
    return clf(X, Y)


class TestFit:
    def test_two_blobs_depth_one(self, toy_classification):
        t = fit(toy_classification, None, ClusterConfig(2), 1)
        leaves = t.leaves()
        assert len(leaves) == 2
        assert sorted(l.leaf_label for l in leaves) == [0.0, 1.0]
        for leaf in leaves:
            assert len(set(toy_classification.Y[leaf.train_indices])) == 1

    def test_identical_examples_single_leaf(self):
        ds = clf(np.ones((5, 2)), [0, 1, 1, 0, 1])
        t = fit(ds, None, ClusterConfig(2), 3)
        assert t.size == 1
        assert t.root.leaf_label == 1.0
        assert t.root.mean_label == pytest.approx(0.6)

    def test_pure_root_is_leaf(self):
        t = fit(clf([[0.0], [1.0], [2.0]], [1, 1, 1]), None, ClusterConfig(2), 2)
        assert t.size == 1

    def test_bad_depth(self, toy_classification):
        with pytest.raises(ConfigError):
            fit(toy_classification, None, ClusterConfig(2), 0)

    def test_ledger_phases(self, toy_classification):
        f = build(toy_classification)
        fit(toy_classification, f, ClusterConfig(2, cfg=EstimatorConfig(method="ae")), 1)
        phases = f.ledger.snapshot()
        assert {"load", "weights", "cluster", "leaf"} <= set(phases)

    @given(st.integers(0, 2**31), st.integers(4, 60), st.integers(1, 3), st.integers(2, 4))
    def test_structure(self, seed, n, D, k):
        ds = random_clf(seed, n)
        t = fit(ds, None, ClusterConfig(k, cfg=EstimatorConfig(seed=seed)), D)
        assert len(t.leaves()) <= k**D
        for node in t.nodes():
            assert node.depth <= D
            assert node.is_leaf == (node.leaf_label is not None)
            assert len(node.children) <= k
            if node.children:
                union = np.sort(np.concatenate([c.train_indices for c in node.children]))
                np.testing.assert_array_equal(union, np.sort(node.train_indices))

    def test_deterministic(self):
        ds = random_clf(1, 80)
        a = fit(ds, None, ClusterConfig(3, cfg=EstimatorConfig(seed=9)), 2)
        b = fit(ds, None, ClusterConfig(3, cfg=EstimatorConfig(seed=9)), 2)
        assert a.to_text() == b.to_text()
        np.testing.assert_array_equal(a.predict_many(ds.X), b.predict_many(ds.X))


class TestLeafLabel:
    def test_examples(self):
        ds = clf(np.zeros((3, 1)), [0, 0, 1])
        assert leaf_label([0, 1, 2], ds, None, EstimatorConfig()) == 0.0
        assert leaf_label([2], ds, None, EstimatorConfig()) == 1.0
        reg = Dataset(np.zeros((2, 1)), np.array([0.2, 0.4]), Task.REGRESSION, ())
        assert leaf_label([0, 1], reg, None, EstimatorConfig()) == pytest.approx(0.3)

    def test_half_maps_to_one(self):
        assert leaf_label([0, 1], clf(np.zeros((2, 1)), [0, 1]), None, EstimatorConfig()) == 1.0

    def test_empty(self):
        with pytest.raises(EmptyCluster):
            leaf_label([], clf(np.zeros((1, 1)), [0]), None, EstimatorConfig())

    def test_simulated_within_eps3(self, rng):
        Y = rng.random(40)
        ds = Dataset(rng.normal(size=(40, 2)), Y, Task.REGRESSION, ())
        f = build(ds)
        for s in range(20):
            idx = rng.choice(40, size=10, replace=False)
            est = leaf_label(idx, ds, f, EstimatorConfig(method="ae", eps3=1e-3, seed=s))
            assert abs(est - Y[idx].mean()) <= 1e-3 + 1e-12


class TestPredict:
    def test_training_example_in_pure_leaf(self, toy_classification):
        t = fit(toy_classification, None, ClusterConfig(2), 1)
        for x, y in zip(toy_classification.X, toy_classification.Y):
            assert predict(t, x) == y

    def test_at_centroid(self, toy_classification):
        t = fit(toy_classification, None, ClusterConfig(2), 1)
        for child in t.root.children:
            assert predict(t, child.centroid) == child.leaf_label

    def test_evaluation_count(self):
        ds = random_clf(3, 200)
        t = fit(ds, None, ClusterConfig(3), 2)
        for x in ds.X[:20]:
            c = EvalCounter()
            predict(t, x, c)
            assert c.count <= 3 * 2

    def test_dimension(self, toy_classification):
        t = fit(toy_classification, None, ClusterConfig(2), 1)
        with pytest.raises(DimensionError):
            predict(t, [1.0, 2.0, 3.0])

    def test_inner_product_rule_routes_by_ip(self, toy_classification):
        cc = ClusterConfig(2, assignment_rule="inner_product")
        t = fit(toy_classification, None, cc, 1)
        w = t.weights.normalized
        x = np.array([3.0, 3.0])
        scores = [float(np.dot(x * w, c.centroid)) for c in t.root.children]
        assert predict(t, x) == t.root.children[int(np.argmax(scores))].leaf_label


class TestRetrain:
    def test_empty_batch(self, toy_classification):
        f = build(toy_classification)
        t = fit(toy_classification, f, ClusterConfig(2), 1)
        with pytest.raises(ConfigError):
            retrain(t, f, (np.empty((0, 2)), np.empty(0)))

    def test_dimension(self, toy_classification):
        f = build(toy_classification)
        t = fit(toy_classification, f, ClusterConfig(2), 1)
        with pytest.raises(DimensionError):
            retrain(t, f, clf(np.ones((1, 3)), [1]))

    @pytest.mark.parametrize("method", ["exact", "ae"])
    def test_equals_batch_fit(self, method):
        full = random_clf(7, 120, 4)
        a = clf(full.X[:100], full.Y[:100])
        b = clf(full.X[100:], full.Y[100:])
        cc = ClusterConfig(3, cfg=EstimatorConfig(method=method, seed=2))
        f = build(a)
        t0 = fit(a, f, cc, 2)
        t1 = retrain(t0, f, b)
        t2 = fit(full, None, cc, 2)
        probe = np.random.default_rng(0).normal(size=(50, 4))
        np.testing.assert_array_equal(t1.predict_many(probe), t2.predict_many(probe))
        assert t1.to_text() == t2.to_text()
        assert "retrain.load" in f.ledger.snapshot()


class TestPersistence:
    def test_round_trip(self):
        ds = random_clf(4, 60)
        t = fit(ds, None, ClusterConfig(3, cfg=EstimatorConfig(method="chernoff", seed=5)), 2)
        back = DesqTree.from_text(t.to_text())
        assert back.to_text() == t.to_text()
        np.testing.assert_array_equal(back.predict_many(ds.X), t.predict_many(ds.X))

    def test_bad_tag(self):
        with pytest.raises(ParseError):
            DesqTree.from_text("node_id\n")
