"""Axis-parallel binary decision tree used as the comparison baseline.

Splits are chosen greedily: base-2 entropy gain for classification and
squared-error reduction for regression, with thresholds at midpoints of
consecutive distinct values. A row goes left when ``x[feature] <= threshold``.
Ties keep the lowest feature index, then the lowest threshold.
"""
from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Dataset, Task
from .errors import DimensionError, ParseError

FORMAT_TAG = "# desq-axis-tree v1"


@dataclass
class AxisNode:
    value: float
    depth: int
    count: int
    feature: int = -1
    threshold: float = 0.0
    left: "AxisNode | None" = None
    right: "AxisNode | None" = None
    node_id: int = -1
    mean_label: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def children(self) -> list:
        return [] if self.is_leaf else [self.left, self.right]


@dataclass
class AxisTree:
    root: AxisNode
    max_depth: int
    task: Task
    d: int

    def nodes(self):
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            yield node
            queue.extend(node.children)

    @property
    def size(self) -> int:
        return sum(1 for _ in self.nodes())

    def route(self, X, max_depth: int | None = None) -> list:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise DimensionError(f"expected {self.d} features, got {X.shape[1]}")
        out = []
        for x in X:
            node = self.root
            while not node.is_leaf and (max_depth is None or node.depth < max_depth):
                node = node.left if x[node.feature] <= node.threshold else node.right
            out.append(node)
        return out

    def predict_many(self, X) -> np.ndarray:
        return np.array([n.value for n in self.route(X)], dtype=float)

    def leaf_ids(self, X, max_depth: int | None = None) -> np.ndarray:
        return np.array([n.node_id for n in self.route(X, max_depth)], dtype=np.int64)

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(FORMAT_TAG + "\n")
        out.write(f"# max_depth={self.max_depth}\n# task={self.task.value}\n# d={self.d}\n")
        out.write("node_id,parent_id,depth,kind,leaf_label,train_count,mean_label,feature,threshold\n")
        parent = {self.root.node_id: -1}
        for node in self.nodes():
            for ch in node.children:
                parent[ch.node_id] = node.node_id
            kind = "leaf" if node.is_leaf else "axis"
            out.write(f"{node.node_id},{parent[node.node_id]},{node.depth},{kind},{float(node.value)!r},"
                      f"{node.count},{float(node.mean_label)!r},{node.feature},{float(node.threshold)!r}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "AxisTree":
        lines = text.splitlines()
        if not lines or lines[0].strip() != FORMAT_TAG:
            raise ParseError("not an axis tree dump")
        meta, nodes, order = {}, {}, []
        for line in lines[1:]:
            if line.startswith("# "):
                k, _, v = line[2:].partition("=")
                meta[k] = v
                continue
            if not line or line.startswith("node_id,"):
                continue
            p = line.split(",")
            node = AxisNode(float(p[4]), int(p[2]), int(p[5]), int(p[7]), float(p[8]),
                            node_id=int(p[0]), mean_label=float(p[6]))
            nodes[node.node_id] = node
            order.append((node.node_id, int(p[1])))
        for nid, pid in order:
            if pid >= 0:
                par = nodes[pid]
                if par.left is None:
                    par.left = nodes[nid]
                else:
                    par.right = nodes[nid]
        return cls(nodes[order[0][0]], int(meta["max_depth"]), Task(meta["task"]), int(meta["d"]))


def impurity(y: np.ndarray, task: Task) -> float:
    """Size-weighted impurity: n·H(y) in bits, or the sum of squared deviations."""
    n = y.size
    if n == 0:
        return 0.0
    if task is Task.CLASSIFICATION:
        p = y.mean()
        h = 0.0
        for q in (p, 1.0 - p):
            if q > 0:
                h -= q * np.log2(q)
        return n * h
    return float(((y - y.mean()) ** 2).sum())


def best_split(X: np.ndarray, y: np.ndarray, task: Task):
    """(feature, threshold, child impurity) of the best split, or None."""
    best = None
    cls = task is Task.CLASSIFICATION
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = np.ascontiguousarray(X[order, j])
        ys = np.ascontiguousarray(y[order])
        imp, thr, found = _kernels.split_scan(xs, ys, cls)
        if found and (best is None or imp < best[2]):
            best = (j, float(thr), float(imp))
    return best


def _leaf_value(y: np.ndarray, task: Task) -> float:
    m = float(y.mean())
    if task is Task.CLASSIFICATION:
        return 0.0 if m < 0.5 else 1.0
    return m


def fit_axis(ds: Dataset, train_idx=None, max_depth: int = 2, task: Task | None = None) -> AxisTree:
    task = task or ds.task
    idx = np.arange(ds.n) if train_idx is None else np.asarray(train_idx, dtype=np.int64)
    X, y = ds.X[idx], ds.Y[idx]

    def grow(rows: np.ndarray, depth: int) -> AxisNode:
        yy = y[rows]
        node = AxisNode(_leaf_value(yy, task), depth, int(rows.size), mean_label=float(yy.mean()))
        if depth >= max_depth or rows.size < 2 or np.all(yy == yy[0]):
            return node
        split = best_split(X[rows], yy, task)
        if split is None:
            return node
        j, thr, _ = split
        go_left = X[rows, j] <= thr
        node.feature, node.threshold = j, thr
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return node

    tree = AxisTree(grow(np.arange(idx.size), 0), int(max_depth), task, ds.d)
    for i, node in enumerate(tree.nodes()):
        node.node_id = i
    return tree


def predict_axis(t: AxisTree, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != t.d:
        raise DimensionError(f"expected {t.d} features, got {x.shape[0]}")
    return float(t.route(x[None, :])[0].value)
