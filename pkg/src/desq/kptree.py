"""KP-tree: binary trees of squared entries that simulate amplitude-state access.

Each tree stores ``v**2`` at its leaves (with a separate sign bit) and
subtree sums at internal nodes, so the root holds ``‖v‖²``. A state is
rebuilt top-down from child/parent ratios, the classical shadow of the
conditional-rotation circuit. The forest keeps one tree per row, one per
feature column and one for the labels.

Cost model: writing one entry into a tree of capacity ``C`` costs
``max(1, ceil(log2 C))`` node-write units. Growing a full tree doubles its
capacity by hanging the old tree under a fresh root; that relink is free
and the next insertion pays for the new level.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset, Task
from .errors import DimensionError, ParseError, ZeroNormError
from .qestimate import QueryLedger

FORMAT_TAG = "# desq-forest v1"


def next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (int(n) - 1).bit_length()


def write_cost(capacity: int) -> int:
    return max(1, (int(capacity) - 1).bit_length())


@dataclass(frozen=True)
class AmplitudeVector:
    amplitudes: np.ndarray
    norm: float

    @classmethod
    def from_vector(cls, v) -> "AmplitudeVector":
        v = np.asarray(v, dtype=float)
        norm = float(np.sqrt(np.dot(v, v)))
        if norm == 0.0:
            raise ZeroNormError("zero vector has no amplitude encoding")
        return cls(v / norm, norm)

    def vector(self) -> np.ndarray:
        return self.amplitudes * self.norm


def _sum_levels(leaves: np.ndarray) -> list:
    """All levels, root first, for leaves stacked along the last axis."""
    levels = [leaves]
    cur = leaves
    while cur.shape[-1] > 1:
        cur = cur[..., 0::2] + cur[..., 1::2]
        levels.append(cur)
    return levels[::-1]


def _reconstruct(levels: Sequence[np.ndarray], signs: np.ndarray) -> np.ndarray:
    """Top-down amplitude recursion, vectorized over any leading axes."""
    root = levels[0]
    amp = np.ones_like(root)
    amp = np.where(root > 0, amp, 0.0)
    for depth in range(1, len(levels)):
        parent = np.repeat(levels[depth - 1], 2, axis=-1)
        child = levels[depth]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(parent > 0, child / np.where(parent > 0, parent, 1.0), 0.0)
        amp = np.repeat(amp, 2, axis=-1) * np.sqrt(ratio)
    return amp * signs


class KpBinaryTree:
    """One binary accumulator tree over up to ``leaf_count`` entries."""

    def __init__(self, levels: list, signs: np.ndarray, count: int):
        self.levels = levels
        self.signs = signs
        self.count = int(count)

    @classmethod
    def empty(cls, capacity: int = 1) -> "KpBinaryTree":
        cap = next_pow2(capacity)
        return cls(_sum_levels(np.zeros(cap)), np.ones(cap, dtype=np.int8), 0)

    @classmethod
    def from_values(cls, values, capacity: int | None = None) -> "KpBinaryTree":
        values = np.asarray(values, dtype=float).reshape(-1)
        cap = next_pow2(max(capacity or 0, values.size, 1))
        leaves = np.zeros(cap)
        leaves[: values.size] = values * values
        signs = np.ones(cap, dtype=np.int8)
        signs[: values.size] = np.where(values < 0, -1, 1)
        return cls(_sum_levels(leaves), signs, values.size)

    @property
    def leaf_count(self) -> int:
        return self.levels[-1].shape[0]

    @property
    def height(self) -> int:
        return len(self.levels) - 1

    @property
    def populated(self) -> np.ndarray:
        return np.arange(self.leaf_count) < self.count

    @property
    def root(self) -> float:
        return float(self.levels[0][0])

    def values(self) -> np.ndarray:
        """Stored entries, recovered as sign * sqrt(square)."""
        return self.signs[: self.count] * np.sqrt(self.levels[-1][: self.count])

    def state(self) -> AmplitudeVector:
        if not self.root > 0:
            raise ZeroNormError("tree holds a zero vector")
        amps = _reconstruct(self.levels, self.signs)[: self.count]
        return AmplitudeVector(amps, float(np.sqrt(self.root)))

    def _grow(self) -> None:
        cap = self.leaf_count
        new_levels = [np.zeros(1)]
        for lvl in self.levels:
            new_levels.append(np.concatenate([lvl, np.zeros(lvl.shape[0])]))
        new_levels[0][0] = self.levels[0][0]
        self.levels = new_levels
        self.signs = np.concatenate([self.signs, np.ones(cap, dtype=np.int8)])

    def extend(self, values) -> int:
        """Append entries in order; returns node-write cost units."""
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size == 0:
            return 0
        while self.count + values.size > self.leaf_count:
            self._grow()
        lo, hi = self.count, self.count + values.size
        self.levels[-1][lo:hi] = values * values
        self.signs[lo:hi] = np.where(values < 0, -1, 1)
        self.count = hi
        # refresh ancestors of the touched leaf span, bottom-up, as left + right
        a, b = lo, hi - 1
        for depth in range(self.height, 0, -1):
            a, b = a // 2, b // 2
            child = self.levels[depth]
            self.levels[depth - 1][a : b + 1] = child[2 * a : 2 * b + 2 : 2] + child[2 * a + 1 : 2 * b + 2 : 2]
        return values.size * write_cost(self.leaf_count)

    def check(self, rtol: float = 1e-9) -> None:
        for depth in range(self.height):
            parent = self.levels[depth]
            child = self.levels[depth + 1]
            summed = child[0::2] + child[1::2]
            if not np.allclose(parent, summed, rtol=rtol, atol=0.0):
                raise AssertionError(f"parent != sum of children at depth {depth}")
        if (self.levels[-1] < 0).any():
            raise AssertionError("negative node value")


class RowTreeBank(Sequence):
    """The per-row trees, stored as one stacked array per level.

    Indexing yields a :class:`KpBinaryTree` whose levels are views into the bank.
    """

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=float)
        self.d = X.shape[1]
        cap = next_pow2(self.d)
        leaves = np.zeros((X.shape[0], cap))
        leaves[:, : self.d] = X * X
        self.signs = np.ones((X.shape[0], cap), dtype=np.int8)
        self.signs[:, : self.d] = np.where(X < 0, -1, 1)
        self.levels = _sum_levels(leaves)

    def __len__(self) -> int:
        return self.levels[0].shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return KpBinaryTree([lvl[i] for lvl in self.levels], self.signs[i], self.d)

    @property
    def leaf_count(self) -> int:
        return self.levels[-1].shape[1]

    def cost(self, n_rows: int) -> int:
        return n_rows * self.d * write_cost(self.leaf_count)

    def extend(self, X: np.ndarray) -> int:
        other = RowTreeBank(X)
        self.levels = [np.vstack([a, b]) for a, b in zip(self.levels, other.levels)]
        self.signs = np.vstack([self.signs, other.signs])
        return self.cost(X.shape[0])

    def norms_sq(self) -> np.ndarray:
        return self.levels[0][:, 0].copy()

    def states(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Amplitudes (len(idx) × d) and norms; zero rows get zero amplitudes."""
        idx = np.asarray(idx, dtype=np.int64)
        levels = [lvl[idx] for lvl in self.levels]
        amps = _reconstruct(levels, self.signs[idx])[:, : self.d]
        return amps, np.sqrt(levels[0][:, 0])


class KpForest:
    """Row trees, column trees and the label tree for one training set."""

    def __init__(self, row_trees: RowTreeBank, col_trees: list, label_tree: KpBinaryTree,
                 task: Task, feature_names: tuple, ledger: QueryLedger):
        self.row_trees = row_trees
        self.col_trees = col_trees
        self.label_tree = label_tree
        self.task = task
        self.feature_names = tuple(feature_names)
        self.ledger = ledger

    @property
    def n(self) -> int:
        return self.label_tree.count

    @property
    def d(self) -> int:
        return len(self.col_trees)

    def check(self) -> None:
        for t in self.col_trees:
            t.check()
        self.label_tree.check()
        for t in self.row_trees:
            t.check()
        X = self.data_matrix()
        for j, t in enumerate(self.col_trees):
            if not np.array_equal(t.values(), X[:, j]):
                raise AssertionError(f"column tree {j} disagrees with row trees")

    # state preparation ------------------------------------------------------

    def _prep(self, count: int = 1) -> None:
        self.ledger.add("state_preps", count)

    def row_state(self, i: int) -> AmplitudeVector:
        if not 0 <= i < self.n:
            raise IndexError(f"row {i} out of range")
        st = self.row_trees[i].state()
        self._prep()
        return st

    def row_states(self, idx):
        """Batch row states: (amplitudes, norms), one state prep per row."""
        amps, norms = self.row_trees.states(idx)
        self._prep(len(amps))
        return amps, norms

    def col_state(self, j: int) -> AmplitudeVector:
        st = self.col_trees[j].state()
        self._prep()
        return st

    def label_state(self) -> AmplitudeVector:
        st = self.label_tree.state()
        self._prep()
        return st

    def norms_state(self) -> AmplitudeVector:
        norms = np.sqrt(self.row_trees.norms_sq())
        st = AmplitudeVector.from_vector(norms)
        self._prep()
        return st

    def uniform_state(self) -> AmplitudeVector:
        """Uniform superposition over the N rows, unit norm."""
        self._prep()
        return AmplitudeVector(np.full(self.n, 1.0 / np.sqrt(self.n)), 1.0)

    def col_norm(self, j: int) -> float:
        return float(np.sqrt(self.col_trees[j].root))

    def label_norm(self) -> float:
        return float(np.sqrt(self.label_tree.root))

    # classical read-back ----------------------------------------------------

    def data_matrix(self) -> np.ndarray:
        leaves = self.row_trees.levels[-1][:, : self.d]
        return self.row_trees.signs[:, : self.d] * np.sqrt(leaves)

    def to_dataset(self) -> Dataset:
        return Dataset(self.data_matrix(), self.label_tree.values(), self.task, self.feature_names)

    # persistence ------------------------------------------------------------

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(FORMAT_TAG + "\n")
        out.write(f"# task={self.task.value}\n")
        out.write(f"# features={'|'.join(self.feature_names)}\n")
        out.write("tree,depth,offset,value,sign\n")
        # rows are rebuilt from their leaves; columns and labels are dumped whole
        bank = self.row_trees
        h = len(bank.levels) - 1
        for i in range(len(bank)):
            for j in range(self.d):
                out.write(f"row{i},{h},{j},{float(bank.levels[-1][i, j])!r},{int(bank.signs[i, j])}\n")
        trees = [(f"col{j}", t) for j, t in enumerate(self.col_trees)] + [("label", self.label_tree)]
        for name, t in trees:
            out.write(f"{name},-1,{t.count},{t.leaf_count},0\n")
            for depth, lvl in enumerate(t.levels):
                nz = np.nonzero(lvl)[0]
                for off in nz:
                    sign = int(t.signs[off]) if depth == t.height else 0
                    out.write(f"{name},{depth},{off},{float(lvl[off])!r},{sign}\n")
            neg = np.nonzero(t.signs < 0)[0]
            for off in neg:
                if t.levels[-1][off] == 0:
                    out.write(f"{name},{t.height},{off},0.0,-1\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str, ledger: QueryLedger | None = None) -> "KpForest":
        lines = text.splitlines()
        if not lines or lines[0].strip() != FORMAT_TAG:
            raise ParseError("not a forest dump (missing version tag)")
        task = None
        names: tuple = ()
        rows: dict = {}
        trees: dict = {}
        for line in lines[1:]:
            if line.startswith("# task="):
                task = Task.parse(line.split("=", 1)[1])
                continue
            if line.startswith("# features="):
                names = tuple(line.split("=", 1)[1].split("|"))
                continue
            if not line or line.startswith("#") or line.startswith("tree,"):
                continue
            name, depth, off, value, sign = line.split(",")
            depth, off, sign = int(depth), int(off), int(sign)
            if name.startswith("row"):
                rows.setdefault(int(name[3:]), {})[off] = (float(value), sign)
            elif depth == -1:
                cap = int(float(value))
                trees[name] = KpBinaryTree(_sum_levels(np.zeros(cap)), np.ones(cap, dtype=np.int8), off)
            else:
                t = trees[name]
                t.levels[depth][off] = float(value)
                if depth == t.height and sign:
                    t.signs[off] = sign
        if task is None:
            raise ParseError("forest dump lacks task line")
        d = len(names)
        X = np.zeros((len(rows), d))
        for i, entries in rows.items():
            for j, (sq, sign) in entries.items():
                X[i, j] = sign * np.sqrt(sq)
        bank = RowTreeBank(X)
        cols = [trees[f"col{j}"] for j in range(d)]
        return cls(bank, cols, trees["label"], task, names, ledger or QueryLedger())


def build(ds: Dataset, ledger: QueryLedger | None = None) -> KpForest:
    """Load a dataset into a fresh forest, charging the load phase."""
    ledger = ledger if ledger is not None else QueryLedger()
    with ledger.phase("load"):
        bank = RowTreeBank(ds.X)
        cols = [KpBinaryTree.from_values(ds.X[:, j]) for j in range(ds.d)]
        label = KpBinaryTree.from_values(ds.Y)
        ledger.add("node_writes", bank.cost(ds.n))
        col_cost = sum(ds.n * write_cost(t.leaf_count) for t in cols)
        ledger.add("node_writes", col_cost)
        ledger.add("node_writes", ds.n * write_cost(label.leaf_count))
    return KpForest(bank, cols, label, ds.task, ds.feature_names, ledger)


def append_rows(f: KpForest, new) -> KpForest:
    """Append a batch in place (and return the forest): new row trees, longer columns.

    ``new`` is a :class:`Dataset` or an ``(X, Y)`` pair; an empty pair is a no-op.
    """
    X, Y = (new.X, new.Y) if isinstance(new, Dataset) else new
    X = np.asarray(X, dtype=float).reshape(-1, f.d) if np.size(X) == 0 else np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[1] != f.d:
        raise DimensionError(f"batch has shape {X.shape}, forest has d={f.d}")
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"{Y.shape[0]} labels for {X.shape[0]} rows")
    if X.shape[0] == 0:
        return f
    with f.ledger.phase("load"):
        cost = f.row_trees.extend(X)
        for j, t in enumerate(f.col_trees):
            cost += t.extend(X[:, j])
        cost += f.label_tree.extend(Y)
        f.ledger.add("node_writes", cost)
    return f


def column_write_cost(n_new: int, d: int, capacity: int) -> int:
    """Node writes for appending ``n_new`` entries to each of ``d`` column trees."""
    return n_new * d * write_cost(capacity)
