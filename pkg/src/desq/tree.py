"""Tree construction, leaf labels, inference and retraining."""
from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import _kernels
from .cluster import AssignmentRule, ClusterConfig, Init, cluster_node, node_rng
from .dataset import Dataset, Task
from .errors import ConfigError, DimensionError, EmptyCluster, ParseError
from .kptree import KpForest, append_rows, build
from .qestimate import EstimatorConfig, Method, estimate_inner_products, precision_for, stream
from .weights import FeatureWeights, compute_weights, no_weight

LEAF_STREAM = 3
FORMAT_TAG = "# desq-tree v1"


@dataclass
class Node:
    centroid: np.ndarray
    children: list = field(default_factory=list)
    leaf_label: float | None = None
    train_count: int = 0
    depth: int = 0
    mean_label: float = 0.0
    train_indices: np.ndarray | None = None
    node_id: int = -1

    @property
    def is_leaf(self) -> bool:
        return not self.children


class EvalCounter:
    """Counts centroid scorings made during inference."""

    def __init__(self):
        self.count = 0


@dataclass
class DesqTree:
    root: Node
    depth: int
    k: int
    weights: FeatureWeights
    task: Task
    cc: ClusterConfig
    weighted: bool = True
    ledger_snapshot: dict = field(default_factory=dict)
    cluster_traces: list = field(default_factory=list)

    @property
    def assignment_rule(self) -> AssignmentRule:
        return self.cc.assignment_rule

    @property
    def cfg(self) -> EstimatorConfig:
        return self.cc.cfg

    @property
    def d(self) -> int:
        return self.root.centroid.shape[0]

    def nodes(self) -> Iterator[Node]:
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            yield node
            queue.extend(node.children)

    @property
    def size(self) -> int:
        return sum(1 for _ in self.nodes())

    def leaves(self) -> list:
        return [n for n in self.nodes() if n.is_leaf]

    # routing ------------------------------------------------------------

    def _child_scores(self, node: Node, X: np.ndarray) -> np.ndarray:
        C = np.array([c.centroid for c in node.children])
        w = self.weights.normalized
        if self.assignment_rule is AssignmentRule.MIN_WEIGHTED_DISTANCE:
            return np.argmin(_kernels.weighted_sq_dists(X, C, w), axis=1)
        return np.argmax(_kernels.weighted_scores_ip(X, C, w), axis=1)

    def route(self, X, max_depth: int | None = None, counter: EvalCounter | None = None) -> list:
        """Node reached by each row, stopping early at ``max_depth`` when given."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        if X.shape[1] != self.d:
            raise DimensionError(f"expected {self.d} features, got {X.shape[1]}")
        out = [None] * X.shape[0]
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            if node.is_leaf or (max_depth is not None and node.depth >= max_depth):
                for r in rows:
                    out[r] = node
                continue
            if counter is not None:
                counter.count += len(node.children) * rows.size
            pick = self._child_scores(node, X[rows])
            for j, child in enumerate(node.children):
                stack.append((child, rows[pick == j]))
        return out

    def predict_many(self, X) -> np.ndarray:
        return np.array([n.leaf_label for n in self.route(X)], dtype=float)

    def leaf_ids(self, X, max_depth: int | None = None) -> np.ndarray:
        return np.array([n.node_id for n in self.route(X, max_depth)], dtype=np.int64)

    # persistence ----------------------------------------------------------

    def to_text(self) -> str:
        cfg = self.cfg
        meta = {
            "depth": self.depth,
            "k": self.k,
            "task": self.task.value,
            "weighted": int(self.weighted),
            "rule": self.assignment_rule.value,
            "init": self.cc.init.value,
            "max_iters": self.cc.max_iters,
            "tol": repr(self.cc.tol),
            "method": cfg.method.value,
            "eps1": repr(cfg.eps1),
            "eps2": repr(cfg.eps2),
            "eps3": repr(cfg.eps3),
            "delta_cap": repr(cfg.delta_cap),
            "delta_kmeans": repr(cfg.delta_kmeans),
            "seed": cfg.seed,
            "chernoff_constant": repr(cfg.chernoff_constant),
            "register_bits": cfg.register_bits,
            "boost": int(cfg.boost),
            "weights_raw": "|".join(repr(float(v)) for v in self.weights.raw),
            "weights_normalized": "|".join(repr(float(v)) for v in self.weights.normalized),
        }
        out = io.StringIO()
        out.write(FORMAT_TAG + "\n")
        for key, val in meta.items():
            out.write(f"# {key}={val}\n")
        cols = ",".join(f"c{j}" for j in range(self.d))
        out.write(f"node_id,parent_id,depth,kind,leaf_label,train_count,mean_label,{cols}\n")
        parent = {self.root.node_id: -1}
        for node in self.nodes():
            for ch in node.children:
                parent[ch.node_id] = node.node_id
            label = "" if node.leaf_label is None else repr(float(node.leaf_label))
            cent = ",".join(repr(float(v)) for v in node.centroid)
            out.write(f"{node.node_id},{parent[node.node_id]},{node.depth},centroid,{label},"
                      f"{node.train_count},{float(node.mean_label)!r},{cent}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "DesqTree":
        lines = text.splitlines()
        if not lines or lines[0].strip() != FORMAT_TAG:
            raise ParseError("not a tree dump (missing version tag)")
        meta = {}
        nodes = {}
        order = []
        for line in lines[1:]:
            if line.startswith("# "):
                key, _, val = line[2:].partition("=")
                meta[key] = val
                continue
            if not line or line.startswith("node_id,"):
                continue
            parts = line.split(",")
            nid, pid, depth = int(parts[0]), int(parts[1]), int(parts[2])
            label = float(parts[4]) if parts[4] else None
            node = Node(np.array([float(v) for v in parts[7:]]), [], label, int(parts[5]),
                        depth, float(parts[6]), None, nid)
            nodes[nid] = node
            order.append((nid, pid))
        for nid, pid in order:
            if pid >= 0:
                nodes[pid].children.append(nodes[nid])
        cfg = EstimatorConfig(
            eps1=float(meta["eps1"]), eps2=float(meta["eps2"]), eps3=float(meta["eps3"]),
            delta_cap=float(meta["delta_cap"]), delta_kmeans=float(meta["delta_kmeans"]),
            method=Method(meta["method"]), seed=int(meta["seed"]),
            chernoff_constant=float(meta["chernoff_constant"]),
            register_bits=int(meta["register_bits"]), boost=bool(int(meta["boost"])),
        )
        cc = ClusterConfig(int(meta["k"]), int(meta["max_iters"]), float(meta["tol"]),
                           AssignmentRule(meta["rule"]), Init(meta["init"]), cfg)
        raw = np.array([float(v) for v in meta["weights_raw"].split("|")])
        normed = np.array([float(v) for v in meta["weights_normalized"].split("|")])
        root = nodes[order[0][0]]
        return cls(root, int(meta["depth"]), int(meta["k"]), FeatureWeights(raw, normed),
                   Task(meta["task"]), cc, bool(int(meta["weighted"])))


def leaf_label(cluster, ds: Dataset, f: KpForest | None, cfg: EstimatorConfig,
               rng: np.random.Generator | None = None) -> float:
    """Mean label of a cluster, thresholded at 0.5 for classification."""
    idx = np.asarray(cluster, dtype=np.int64)
    if idx.size == 0:
        raise EmptyCluster("leaf has no examples")
    mean = float(ds.Y[idx].mean())
    if not cfg.exact and f is not None:
        m = np.sqrt(idx.size)
        ynorm = f.label_norm()
        f.ledger.add("state_preps", 2)
        if ynorm > 0:
            cos = float(ds.Y[idx].sum()) / (m * ynorm)
            eps = max(float(precision_for(cfg.eps3, ynorm / m)), 1e-12)
            rng = rng if rng is not None else stream(cfg.seed, LEAF_STREAM)
            est, _ = estimate_inner_products(ynorm, 1.0, cos, eps, cfg, rng, f.ledger)
            mean = float(np.clip(est / m, mean - cfg.eps3, mean + cfg.eps3))
    if ds.task is Task.CLASSIFICATION:
        return 0.0 if mean < 0.5 else 1.0
    return mean


def fit(ds: Dataset, f: KpForest | None, cc: ClusterConfig, D: int, *,
        weighted: bool = True, weights: FeatureWeights | None = None,
        keep_indices: bool = True, keep_traces: bool = False,
        literal_numerator: bool = False) -> DesqTree:
    """Grow a tree to depth ``D`` by clustering each node into at most ``k`` children.

    A node stays a leaf when it is at depth ``D``, holds fewer than ``k``
    examples, has a single label value, or its examples collapse into one
    cluster.
    """
    if int(D) < 1:
        raise ConfigError("depth must be >= 1")
    if f is None:
        f = build(ds)
    ledger = f.ledger
    cfg = cc.cfg
    if weights is None:
        with ledger.phase("weights"):
            weights = compute_weights(f, ds, cfg, literal_numerator=literal_numerator) if weighted else no_weight(ds.d)
    traces: list = []

    def grow(idx: np.ndarray, depth: int, path: tuple) -> Node:
        labels = ds.Y[idx]
        node = Node(ds.X[idx].mean(axis=0), [], None, int(idx.size), depth,
                    float(labels.mean()), idx if keep_indices else None)
        stop = depth >= D or idx.size < cc.k or np.all(labels == labels[0])
        if not stop:
            tr = [] if keep_traces else None
            with ledger.phase("cluster"):
                cents, asg = cluster_node(idx, ds, f, weights, cc, rng=node_rng(cfg.seed, path), trace=tr)
            if tr is not None:
                traces.append((path, tr))
            filled = [j for j, c in enumerate(asg.clusters) if c.size > 0]
            if len(filled) >= 2:
                for j in filled:
                    child = grow(np.sort(asg.clusters[j]), depth + 1, path + (j,))
                    child.centroid = cents.vectors[j].copy()
                    node.children.append(child)
        if node.is_leaf:
            with ledger.phase("leaf"):
                node.leaf_label = leaf_label(idx, ds, f, cfg, rng=stream(cfg.seed, LEAF_STREAM, len(path), *path))
        return node

    root = grow(np.arange(ds.n), 0, ())
    tree = DesqTree(root, int(D), int(cc.k), weights, ds.task, cc, weighted,
                    ledger.snapshot(), traces)
    for i, node in enumerate(tree.nodes()):
        node.node_id = i
    return tree


def predict(t: DesqTree, x, counter: EvalCounter | None = None) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != t.d:
        raise DimensionError(f"expected {t.d} features, got {x.shape[0]}")
    return float(t.route(x[None, :], counter=counter)[0].leaf_label)


def retrain(t: DesqTree, f: KpForest, new, cc: ClusterConfig | None = None,
            D: int | None = None, **fit_kwargs) -> DesqTree:
    """Append ``new`` to the forest and rebuild the tree over all rows."""
    n_new = new.n if isinstance(new, Dataset) else len(new[1])
    if n_new == 0:
        raise ConfigError("retrain needs a nonempty batch")
    d_new = new.d if isinstance(new, Dataset) else np.asarray(new[0]).shape[1]
    if d_new != f.d:
        raise DimensionError(f"batch has d={d_new}, forest has d={f.d}")
    cc = cc or t.cc
    D = D or t.depth
    fit_kwargs.setdefault("weighted", t.weighted)
    with f.ledger.phase("retrain"):
        append_rows(f, new)
        combined = f.to_dataset()
        return fit(combined, f, cc, D, **fit_kwargs)


def with_seed(cc: ClusterConfig, seed: int) -> ClusterConfig:
    return replace(cc, cfg=replace(cc.cfg, seed=int(seed)))
