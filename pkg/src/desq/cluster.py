"""Supervised (feature-weighted) k-means for splitting one tree node.

The distance between an example and a centroid is

    sqrt(sum_l w_l * (x_l - c_l)**2)

with the unit-norm weights from :mod:`desq.weights`. The alternative rule
scores each centroid by the weighted inner product ``sum_l w_l x_l c_l``
and keeps the largest. In the simulated estimation modes the inner
products come from the noisy estimators and the centroid coordinates
from noisy overlaps between column states and cluster indicator states.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset import Dataset
from .errors import ConfigError, DimensionError, EmptyNode
from .kptree import AmplitudeVector, KpForest, next_pow2, write_cost
from .qestimate import EstimatorConfig, estimate_inner_products, inner_product, precision_for, stream
from .weights import as_vector

CLUSTER_STREAM = 2


class AssignmentRule(enum.Enum):
    MIN_WEIGHTED_DISTANCE = "distance"
    MAX_WEIGHTED_INNER_PRODUCT = "inner_product"

    @classmethod
    def parse(cls, text) -> "AssignmentRule":
        if isinstance(text, AssignmentRule):
            return text
        key = str(text).strip().lower().replace("-", "_")
        aliases = {
            "distance": cls.MIN_WEIGHTED_DISTANCE,
            "min_distance": cls.MIN_WEIGHTED_DISTANCE,
            "minweighteddistance": cls.MIN_WEIGHTED_DISTANCE,
            "inner_product": cls.MAX_WEIGHTED_INNER_PRODUCT,
            "max_inner_product": cls.MAX_WEIGHTED_INNER_PRODUCT,
            "ip": cls.MAX_WEIGHTED_INNER_PRODUCT,
            "maxweightedinnerproduct": cls.MAX_WEIGHTED_INNER_PRODUCT,
        }
        if key not in aliases:
            raise ConfigError(f"unknown assignment rule {text!r}")
        return aliases[key]


class Init(enum.Enum):
    KMEANS_PLUS_PLUS = "kmeans++"
    RANDOM = "random"

    @classmethod
    def parse(cls, text) -> "Init":
        if isinstance(text, Init):
            return text
        key = str(text).strip().lower()
        if key in ("kmeans++", "k-means++", "kpp", "kmeans_plus_plus"):
            return cls.KMEANS_PLUS_PLUS
        if key == "random":
            return cls.RANDOM
        raise ConfigError(f"unknown init {text!r}")


@dataclass(frozen=True)
class ClusterConfig:
    k: int
    max_iters: int = 100
    tol: float = 1e-4
    assignment_rule: AssignmentRule = AssignmentRule.MIN_WEIGHTED_DISTANCE
    init: Init = Init.KMEANS_PLUS_PLUS
    cfg: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        if int(self.k) < 1:
            raise ConfigError("k must be >= 1")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.tol < 0:
            raise ConfigError("tol must be >= 0")
        object.__setattr__(self, "assignment_rule", AssignmentRule.parse(self.assignment_rule))
        object.__setattr__(self, "init", Init.parse(self.init))


@dataclass(frozen=True)
class Centroids:
    vectors: np.ndarray
    weighted: np.ndarray

    @classmethod
    def from_vectors(cls, vectors, w) -> "Centroids":
        vectors = np.ascontiguousarray(np.asarray(vectors, dtype=float))
        return cls(vectors, vectors * as_vector(w))

    @property
    def k(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class Assignment:
    points: np.ndarray
    labels: np.ndarray
    clusters: tuple
    repaired: int = 0

    @classmethod
    def from_labels(cls, points, labels, k, repaired=0) -> "Assignment":
        points = np.asarray(points, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        clusters = tuple(points[labels == j] for j in range(k))
        return cls(points, labels, clusters, repaired)


@dataclass(frozen=True)
class IterationTrace:
    iteration: int
    objective: float
    movement: float
    repaired: int
    centroids: np.ndarray


def _points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64).reshape(-1)
    if pts.size == 0:
        raise EmptyNode("cannot cluster an empty node")
    return pts


def node_rng(seed: int, path=()) -> np.random.Generator:
    """Generator for the node reached by ``path`` (child indices from the root)."""
    return stream(seed, CLUSTER_STREAM, len(path), *path)


def weighted_distance(x, c, w) -> float:
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    wv = as_vector(w)
    if not (x.shape == c.shape == wv.shape):
        raise DimensionError(f"shapes {x.shape}, {c.shape}, {wv.shape} differ")
    diff = x - c
    return float(np.sqrt(np.dot(wv, diff * diff)))


def weighted_inner_product(x, c, w, cfg: EstimatorConfig | None = None, *,
                           rng=None, ledger=None) -> float:
    """``sum_l w_l x_l c_l``; estimated as the overlap of ``x`` with ``w∘c`` in noisy modes."""
    x = np.asarray(x, dtype=float)
    cw = np.asarray(c, dtype=float) * as_vector(w)
    if x.shape != cw.shape:
        raise DimensionError(f"shapes {x.shape} and {cw.shape} differ")
    if cfg is None or cfg.exact:
        return float(np.dot(x, cw))
    nx, nc = np.linalg.norm(x), np.linalg.norm(cw)
    if nx == 0 or nc == 0:
        return 0.0
    est = inner_product(AmplitudeVector.from_vector(x), AmplitudeVector.from_vector(cw),
                        cfg.eps1, cfg, rng=rng, ledger=ledger)
    return est.value


def weighted_objective(X, cents: Centroids, labels, w) -> float:
    return float(_kernels.weighted_objective(X, cents.vectors, np.asarray(labels, dtype=np.int64),
                                             as_vector(w)))


def init_centroids(points, ds: Dataset, cc: ClusterConfig, w=None, rng=None) -> Centroids:
    """k-means++ (or random) seeding over the weighted metric; k is clamped to the node size."""
    pts = _points(points)
    wv = as_vector(w) if w is not None else np.full(ds.d, 1.0 / np.sqrt(ds.d))
    rng = rng if rng is not None else node_rng(cc.cfg.seed)
    X = ds.X[pts]
    n = X.shape[0]
    k = min(int(cc.k), n)
    if cc.init is Init.RANDOM:
        chosen = list(rng.choice(n, size=k, replace=False))
    else:
        chosen = [int(rng.integers(n))]
        closest = _kernels.weighted_sq_dists(X, X[chosen[0]][None, :], wv)[:, 0]
        while len(chosen) < k:
            total = closest.sum()
            if not total > 0:
                break  # every remaining point coincides with a seed
            nxt = int(rng.choice(n, p=closest / total))
            chosen.append(nxt)
            closest = np.minimum(closest, _kernels.weighted_sq_dists(X, X[nxt][None, :], wv)[:, 0])
    return Centroids.from_vectors(X[np.array(chosen)], wv)


def _scores(points, ds, cents, wv, cc, rng, f):
    """Per-example score matrix (n × k) for the configured rule."""
    X = ds.X[points]
    rule = cc.assignment_rule
    cfg = cc.cfg
    if cfg.exact:
        if rule is AssignmentRule.MIN_WEIGHTED_DISTANCE:
            return _kernels.weighted_sq_dists(X, cents.vectors, wv)
        return _kernels.weighted_scores_ip(X, cents.vectors, wv)
    if f is None:
        raise ConfigError("simulated estimation needs the KP-tree forest")
    amps, norms = f.row_states(points)
    cw = cents.weighted
    cnorm = np.sqrt(np.einsum("kd,kd->k", cw, cw))
    unit = np.divide(cw, cnorm[:, None], out=np.zeros_like(cw), where=cnorm[:, None] > 0)
    f.ledger.add("state_preps", cents.k)
    cos = amps @ unit.T
    ip, _ = estimate_inner_products(norms[:, None], cnorm[None, :], cos, cfg.eps1, cfg, rng, f.ledger)
    if rule is AssignmentRule.MAX_WEIGHTED_INNER_PRODUCT:
        return ip
    wx2 = (X * X) @ wv
    wc2 = (cents.vectors * cents.vectors) @ wv
    return wx2[:, None] + wc2[None, :] - 2.0 * ip


def _choose(S, rule, delta, rng):
    if delta <= 0:
        return np.argmin(S, axis=1) if rule is AssignmentRule.MIN_WEIGHTED_DISTANCE else np.argmax(S, axis=1)
    if rule is AssignmentRule.MIN_WEIGHTED_DISTANCE:
        cand = S <= S.min(axis=1, keepdims=True) + delta
    else:
        cand = S >= S.max(axis=1, keepdims=True) - delta
    keys = np.where(cand, rng.random(S.shape), -1.0)
    return np.argmax(keys, axis=1)


def _repair(X, labels, cents, wv):
    """Move the worst-fitting point of a shared cluster into each empty cluster."""
    k = cents.k
    counts = np.bincount(labels, minlength=k)
    empty = np.nonzero(counts == 0)[0]
    if empty.size == 0:
        return labels, 0
    labels = labels.copy()
    diff = X - cents.vectors[labels]
    own = (diff * diff) @ wv
    repaired = 0
    for j in empty:
        eligible = counts[labels] > 1
        if not eligible.any():
            break
        cand = np.where(eligible, own, -np.inf)
        i = int(np.argmax(cand))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] += 1
        own[i] = -np.inf
        repaired += 1
    return labels, repaired


def assign(points, ds: Dataset, cents: Centroids, w, cc: ClusterConfig, rng=None,
           f: KpForest | None = None) -> Assignment:
    pts = _points(points)
    wv = as_vector(w)
    rng = rng if rng is not None else node_rng(cc.cfg.seed)
    S = _scores(pts, ds, cents, wv, cc, rng, f)
    labels = _choose(S, cc.assignment_rule, cc.cfg.delta_kmeans, rng).astype(np.int64)
    labels, repaired = _repair(ds.X[pts], labels, cents, wv)
    return Assignment.from_labels(pts, labels, cents.k, repaired)


def update_centroids(asg: Assignment, ds: Dataset, f: KpForest | None, w, cc: ClusterConfig,
                     rng=None, previous: Centroids | None = None) -> Centroids:
    """Cluster means; in simulated modes each coordinate carries error at most ``eps2``."""
    wv = as_vector(w)
    X = ds.X[asg.points]
    k = len(asg.clusters)
    sums, counts = _kernels.cluster_sums(X, asg.labels, k)
    safe = np.maximum(counts, 1)[:, None]
    means = sums / safe
    if previous is not None:
        means = np.where(counts[:, None] > 0, means, previous.vectors)
    cfg = cc.cfg
    if not cfg.exact and f is not None:
        rng = rng if rng is not None else node_rng(cfg.seed)
        col_norms = np.array([f.col_norm(l) for l in range(ds.d)])
        f.ledger.add("state_preps", ds.d + int((counts > 0).sum()))
        m = np.sqrt(np.maximum(counts, 1))[:, None]
        # overlap of column l with the indicator state of cluster j
        cos = np.divide(sums, m * col_norms[None, :], out=np.zeros_like(sums),
                        where=(col_norms[None, :] > 0) & (counts[:, None] > 0))
        scale = col_norms[None, :] / m
        eps = np.maximum(precision_for(cfg.eps2, scale), 1e-12)
        est, _ = estimate_inner_products(col_norms[None, :], 1.0, cos, eps, cfg, rng, f.ledger)
        noisy = np.clip(est / m, means - cfg.eps2, means + cfg.eps2)
        means = np.where(counts[:, None] > 0, noisy, means)
    if f is not None:
        f.ledger.add("node_writes", k * ds.d * write_cost(next_pow2(ds.d)))
    return Centroids.from_vectors(means, wv)


def cluster_node(points, ds: Dataset, f: KpForest | None, w, cc: ClusterConfig, rng=None,
                 trace: list | None = None) -> tuple[Centroids, Assignment]:
    """Alternate assignment and update until centroids move less than ``tol`` or ``max_iters``."""
    pts = _points(points)
    wv = as_vector(w)
    rng = rng if rng is not None else node_rng(cc.cfg.seed)
    X = ds.X[pts]
    cents = init_centroids(pts, ds, cc, wv, rng)
    for it in range(int(cc.max_iters)):
        asg = assign(pts, ds, cents, wv, cc, rng, f)
        new = update_centroids(asg, ds, f, wv, cc, rng, previous=cents)
        move = float(np.max(np.linalg.norm(new.vectors - cents.vectors, axis=1)))
        if trace is not None:
            trace.append(IterationTrace(it, weighted_objective(X, new, asg.labels, wv),
                                        move, asg.repaired, new.vectors.copy()))
        cents = new
        if move < cc.tol:
            break
    asg = assign(pts, ds, cents, wv, cc, rng, f)
    return cents, asg

