import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import rows_squared_sum_tree

from desq.dataset import Dataset, Task
from desq.errors import DimensionError, ParseError, ZeroNormError
from desq.kptree import (
    AmplitudeVector,
    KpBinaryTree,
    KpForest,
    append_rows,
    build,
    column_write_cost,
    next_pow2,
    write_cost,
)
from desq.qestimate import QueryLedger

# squares of magnitudes below ~1e-154 underflow, so keep entries where x*x is a normal float
finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False).filter(
    lambda x: x == 0 or abs(x) > 1e-150)


def reg(X, Y=None):
    X = np.asarray(X, dtype=float)
    Y = np.arange(X.shape[0], dtype=float) if Y is None else np.asarray(Y, dtype=float)
    return Dataset(X, Y, Task.REGRESSION, ())


class TestSmallExamples:
    def test_row_three_four(self):
        f = build(reg([[3.0, 4.0]]))
        t = f.row_trees[0]
        np.testing.assert_array_equal(t.levels[-1], [9, 16])
        assert t.root == 25
        st_ = f.row_state(0)
        np.testing.assert_allclose(st_.amplitudes, [0.6, 0.8])
        assert st_.norm == pytest.approx(5.0)

    def test_sign_from_leaf(self):
        st_ = build(reg([[0.0, -2.0]])).row_state(0)
        np.testing.assert_allclose(st_.amplitudes, [0.0, -1.0])
        assert st_.norm == pytest.approx(2.0)

    def test_uniform_row(self):
        st_ = build(reg([[1.0, 1.0, 1.0, 1.0]])).row_state(0)
        np.testing.assert_allclose(st_.amplitudes, [0.5] * 4)
        assert st_.norm == pytest.approx(2.0)

    def test_identity_columns(self):
        f = build(reg(np.eye(2)))
        assert f.col_trees[0].root == 1.0
        assert f.col_trees[1].root == 1.0

    def test_label_root(self):
        f = build(reg(np.ones((3, 1)), [1.0, 2.0, 2.0]))
        assert f.label_tree.root == 9.0

    def test_col_state(self):
        f = build(reg([[3.0, 0.0], [4.0, 0.0]]))
        np.testing.assert_allclose(f.col_state(0).amplitudes, [0.6, 0.8])
        with pytest.raises(ZeroNormError):
            f.col_state(1)

    def test_label_state(self):
        f = build(Dataset(np.ones((2, 1)), [0.0, 1.0], Task.CLASSIFICATION, ()))
        np.testing.assert_allclose(f.label_state().amplitudes, [0.0, 1.0])

    def test_norms_state(self):
        f = build(reg([[3.0, 4.0], [0.0, 0.0]]))
        np.testing.assert_allclose(f.norms_state().amplitudes, [1.0, 0.0])

    def test_zero_row_stored_but_unqueryable(self):
        f = build(reg([[0.0, 0.0], [1.0, 2.0]]))
        f.check()
        with pytest.raises(ZeroNormError):
            f.row_state(0)

    def test_amplitude_vector(self):
        with pytest.raises(ZeroNormError):
            AmplitudeVector.from_vector([0.0, 0.0])
        v = AmplitudeVector.from_vector([3.0, -4.0])
        np.testing.assert_allclose(v.vector(), [3.0, -4.0])


class TestCostModel:
    def test_helpers(self):
        assert [next_pow2(n) for n in (0, 1, 2, 3, 5, 8)] == [1, 1, 2, 4, 8, 8]
        assert [write_cost(c) for c in (1, 2, 4, 2048)] == [1, 1, 2, 11]

    def test_build_cost(self):
        led = QueryLedger()
        build(reg(np.ones((4, 3))), led)
        # rows: 4·3·2, columns: 3·4·2, labels: 4·2
        assert led.get("node_writes", "load") == 24 + 24 + 8

    def test_append_bound(self):
        rng = np.random.default_rng(0)
        d = 3
        f = build(reg(rng.normal(size=(1024, d))))
        before = f.ledger.node_writes
        cols_before = [t.leaf_count for t in f.col_trees]
        append_rows(f, reg(rng.normal(size=(8, d))))
        assert [t.leaf_count for t in f.col_trees] == [2 * c for c in cols_before]
        col_writes = column_write_cost(8, d, f.col_trees[0].leaf_count)
        assert col_writes <= 8 * d * math.ceil(math.log2(2048))
        spent = f.ledger.node_writes - before
        assert spent == col_writes + 8 * d * write_cost(4) + 8 * 11

    def test_every_query_counts(self):
        f = build(reg([[1.0, 2.0], [3.0, 4.0]]))
        seen = []
        for call in (lambda: f.row_state(0), lambda: f.col_state(1), f.label_state,
                     f.norms_state, f.uniform_state, lambda: f.row_states([0, 1])):
            call()
            seen.append(f.ledger.state_preps)
        assert all(b > a for a, b in zip(seen, seen[1:]))
        assert seen[-1] == 7


class TestAppend:
    def test_one_row_matches_fresh_build(self):
        A = np.array([[1.0, -2.0], [0.5, 3.0], [2.0, 2.0]])
        B = np.array([[-1.0, 4.0]])
        f = append_rows(build(reg(A)), reg(B, [9.0]))
        g = build(reg(np.vstack([A, B]), [0, 1, 2, 9.0]))
        for j in range(2):
            np.testing.assert_allclose(f.col_state(j).amplitudes, g.col_state(j).amplitudes, atol=1e-12)
        assert f.n == 4

    def test_empty_batch(self):
        f = build(reg([[1.0, 2.0]]))
        text = f.to_text()
        writes = f.ledger.node_writes
        append_rows(f, (np.empty((0, 2)), np.empty(0)))
        assert f.to_text() == text
        assert f.ledger.node_writes == writes

    def test_dimension_error(self):
        f = build(reg([[1.0, 2.0]]))
        with pytest.raises(DimensionError):
            append_rows(f, reg([[1.0, 2.0, 3.0]]))
        with pytest.raises(DimensionError):
            append_rows(f, (np.ones((2, 2)), np.ones(3)))

    @given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 6), st.integers(0, 2**31))
    def test_batch_equals_incremental(self, n_a, n_b, d, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n_a + n_b, d)) * rng.choice([0.0, 1.0], size=(n_a + n_b, d), p=[0.1, 0.9])
        Y = rng.normal(size=n_a + n_b)
        f = build(reg(X[:n_a], Y[:n_a]))
        append_rows(f, reg(X[n_a:], Y[n_a:]))
        g = build(reg(X, Y))
        for a, b in zip(f.col_trees + [f.label_tree], g.col_trees + [g.label_tree]):
            assert a.leaf_count == b.leaf_count
            for la, lb in zip(a.levels, b.levels):
                np.testing.assert_allclose(la, lb, rtol=1e-9, atol=0)
            np.testing.assert_array_equal(a.signs, b.signs)
        for la, lb in zip(f.row_trees.levels, g.row_trees.levels):
            np.testing.assert_array_equal(la, lb)
        f.check()
        np.testing.assert_array_equal(f.data_matrix(), g.data_matrix())


class TestReconstruction:
    @given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**31))
    def test_rows_recover_data(self, n, d, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d)) * 10
        f = build(reg(X))
        for i in range(n):
            st_ = f.row_state(i)
            np.testing.assert_allclose(st_.amplitudes * st_.norm, X[i], atol=1e-9, rtol=1e-9)
            assert np.sum(st_.amplitudes**2) == pytest.approx(1.0, abs=1e-9)

    @given(arrays(np.float64, st.integers(1, 50), elements=finite))
    def test_levels_match_pairwise_oracle(self, v):
        t = KpBinaryTree.from_values(v)
        ref = rows_squared_sum_tree(v.tolist())
        assert len(ref) == len(t.levels)
        for a, b in zip(t.levels, ref):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)
        t.check()
        assert t.root == pytest.approx(float(np.sum(v * v)), rel=1e-9)

    @given(arrays(np.float64, st.integers(1, 50), elements=finite))
    def test_sqrt_of_square_is_abs(self, v):
        # retraining reads data back through sign * sqrt(x*x); this must be exact
        np.testing.assert_array_equal(KpBinaryTree.from_values(v).values(), v)

    @given(st.lists(arrays(np.float64, st.integers(0, 9), elements=finite), min_size=1, max_size=6))
    def test_root_equals_leaf_sum_after_appends(self, chunks):
        t = KpBinaryTree.empty()
        for c in chunks:
            t.extend(c)
            t.check()
            assert t.root == pytest.approx(float(np.sum(t.levels[-1])), rel=1e-9, abs=0)
        allv = np.concatenate(chunks)
        np.testing.assert_array_equal(t.values(), allv)


class TestPersistence:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(7, 3))
        X[2, 1] = -0.0
        X[4] = 0.0
        ds = Dataset(X, rng.normal(size=7), Task.REGRESSION, ("a", "b", "c"))
        f = build(ds)
        g = KpForest.from_text(f.to_text())
        assert g.feature_names == ("a", "b", "c")
        assert g.task is Task.REGRESSION
        np.testing.assert_array_equal(g.data_matrix(), f.data_matrix())
        for a, b in zip(f.col_trees + [f.label_tree], g.col_trees + [g.label_tree]):
            for la, lb in zip(a.levels, b.levels):
                np.testing.assert_array_equal(la, lb)
            np.testing.assert_array_equal(a.signs, b.signs)
            assert a.count == b.count
        assert g.to_text() == f.to_text()

    def test_bad_tag(self):
        with pytest.raises(ParseError):
            KpForest.from_text("tree,depth\n")
