"""Benchmark harness: fold runs, metrics, table files and cost reports."""
from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .baseline import fit_axis
from .cluster import ClusterConfig
from .dataset import Dataset, Task, fit_standardizer, load_benchmark, make_folds
from .errors import ConfigError, DatasetUnavailable
from .kptree import build
from .qestimate import EstimatorConfig, QueryLedger
from .tree import fit, retrain

TABLE_HEADER = "dataset,model,depth,k,metric_mean,metric_std,tree_size_mean"
MODELS = ("desc", "noweight", "baseline")


# metrics --------------------------------------------------------------------

def accuracy(y, yhat) -> float:
    """Percentage of exact matches."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ConfigError("length mismatch")
    return 100.0 * float(np.mean(y == yhat))


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mse(y, yhat) -> float:
    return rmse(y, yhat) ** 2


def binary_entropy(labels) -> float:
    labels = np.asarray(labels, dtype=float)
    if labels.size == 0:
        return 0.0
    p = labels.mean()
    return float(-sum(q * np.log2(q) for q in (p, 1.0 - p) if q > 0))


def _grouped(t, ds: Dataset, idx, depth, per_leaf) -> float:
    idx = np.arange(ds.n) if idx is None else np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return 0.0
    ids = t.leaf_ids(ds.X[idx], depth)
    y = ds.Y[idx]
    total = 0.0
    for leaf in np.unique(ids):
        sel = y[ids == leaf]
        total += sel.size / idx.size * per_leaf(sel)
    return float(total)


def tree_entropy(t, ds: Dataset, idx=None, depth: int | None = None) -> float:
    """Sum over leaves of (share of rows) × (binary entropy of their labels)."""
    return _grouped(t, ds, idx, depth, binary_entropy)


def tree_variance(t, ds: Dataset, idx=None, depth: int | None = None) -> float:
    """Sum over leaves of (share of rows) × (population variance of their labels)."""
    return _grouped(t, ds, idx, depth, lambda y: float(np.var(y)))


def truncated_predictions(t, X, depth: int | None, task: Task) -> np.ndarray:
    """Predictions of the tree cut at ``depth``: internal nodes answer with their mean label."""
    out = []
    for node in t.route(X, depth):
        if node.is_leaf:
            out.append(node.leaf_label if hasattr(node, "leaf_label") else node.value)
        elif task is Task.CLASSIFICATION:
            out.append(0.0 if node.mean_label < 0.5 else 1.0)
        else:
            out.append(node.mean_label)
    return np.array(out, dtype=float)


def lloyd_violations(traces, rtol: float = 1e-12) -> int:
    """Iterations whose weighted objective rose above the previous one."""
    bad = 0
    for _, trace in traces:
        objs = [it.objective for it in trace]
        for a, b in zip(objs, objs[1:]):
            if b > a + rtol * max(1.0, abs(a)):
                bad += 1
    return bad


# suites -----------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    dataset: str
    model: str
    depth: int
    k: int

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")


@dataclass(frozen=True)
class Suite:
    """A set of table cells and figure series run over shared fold plans."""

    tables: Mapping = field(default_factory=dict)
    series: tuple = ()
    series_depth: int = 3
    folds_classification: int = 10
    folds_regression: int = 5
    test_fraction: float = 0.3
    seed: int = 0
    max_iters: int = 100
    tol: float = 1e-4
    rule: str = "distance"
    label_transform: str = "none"
    scale_regression_labels: bool = True
    regression_metric: str = "rmse"


def _cells(*rows):
    return tuple(Cell(*r) for r in rows)


TABLE2 = _cells(
    ("pima", "baseline", 2, 2), ("pima", "desc", 2, 7),
    ("spambase", "baseline", 2, 2), ("spambase", "desc", 2, 5),
    ("blood", "baseline", 2, 2), ("blood", "desc", 2, 3),
    ("boston", "baseline", 2, 2), ("boston", "desc", 2, 4),
)
TABLE3 = _cells(
    ("pima", "baseline", 1, 2), ("pima", "desc", 1, 2),
    ("pima", "baseline", 2, 2), ("pima", "desc", 2, 7),
    ("spambase", "baseline", 1, 2), ("spambase", "desc", 1, 5),
    ("spambase", "baseline", 2, 2), ("spambase", "desc", 2, 5),
    ("blood", "baseline", 1, 2), ("blood", "desc", 1, 3),
    ("blood", "baseline", 2, 2), ("blood", "desc", 2, 3),
)
TABLE4 = _cells(
    ("boston", "baseline", 1, 2), ("boston", "desc", 1, 4),
    ("boston", "baseline", 2, 2), ("boston", "desc", 2, 5),
)
SERIES = tuple(
    Cell(ds, model, 3, k)
    for ds, ks in (("pima", range(2, 8)), ("boston", range(2, 6)))
    for model in ("desc", "noweight")
    for k in ks
) + (Cell("pima", "baseline", 3, 2), Cell("boston", "baseline", 3, 2))

SUITES = {
    "paper": Suite(tables={"table2": TABLE2, "table3": TABLE3, "table4": TABLE4}, series=SERIES),
    "table2": Suite(tables={"table2": TABLE2}),
    "table3": Suite(tables={"table3": TABLE3}),
    "table4": Suite(tables={"table4": TABLE4}),
    "series": Suite(series=SERIES),
    "smoke": Suite(tables={"smoke": _cells(("pima", "desc", 1, 2), ("pima", "baseline", 1, 2))},
                   folds_classification=2, folds_regression=2),
}


@dataclass(frozen=True)
class FoldResult:
    fold: int
    train_metric: float
    test_metric: float
    tree_size: int
    depth: int
    k: int
    impurity_by_depth: tuple
    train_metric_by_depth: tuple
    lloyd_violations: int


@dataclass(frozen=True)
class RunResult:
    cell: Cell
    metric: str
    folds: tuple

    def _agg(self, values):
        arr = np.array(values, dtype=float)
        return float(arr.mean()), float(arr.std())

    @property
    def test(self):
        return self._agg([f.test_metric for f in self.folds])

    @property
    def train(self):
        return self._agg([f.train_metric for f in self.folds])

    @property
    def tree_size_mean(self) -> float:
        return float(np.mean([f.tree_size for f in self.folds]))

    def impurity(self, depth: int):
        return self._agg([f.impurity_by_depth[depth - 1] for f in self.folds])

    def train_metric_at(self, depth: int):
        return self._agg([f.train_metric_by_depth[depth - 1] for f in self.folds])

    @property
    def lloyd_violations(self) -> int:
        return sum(f.lloyd_violations for f in self.folds)


def _prepare(name: str, suite: Suite) -> Dataset:
    ds = load_benchmark(name)
    if ds.task is Task.REGRESSION and suite.label_transform == "log":
        ds = replace(ds, Y=np.log(ds.Y))
    elif suite.label_transform not in ("none", "log"):
        raise ConfigError(f"unknown label transform {suite.label_transform!r}")
    return ds


def run_fold(ds: Dataset, train, test, cell: Cell, suite: Suite, fold: int) -> FoldResult:
    std = fit_standardizer(ds, train)
    if ds.task is Task.REGRESSION and not suite.scale_regression_labels:
        std = replace(std, scale_labels=False)
    tr = std.apply(ds.subset(train))
    te = std.apply(ds.subset(test))
    violations = 0
    if cell.model == "baseline":
        t = fit_axis(tr, None, cell.depth)
    else:
        cfg = EstimatorConfig(seed=suite.seed + fold)
        cc = ClusterConfig(cell.k, suite.max_iters, suite.tol, suite.rule, cfg=cfg)
        t = fit(tr, build(tr), cc, cell.depth, weighted=cell.model == "desc",
                keep_indices=False, keep_traces=True)
        violations = lloyd_violations(t.cluster_traces)
    if ds.task is Task.CLASSIFICATION:
        score = accuracy
        spread = tree_entropy
    else:
        score = mse if suite.regression_metric == "mse" else rmse
        spread = tree_variance
    depths = range(1, cell.depth + 1)
    return FoldResult(
        fold,
        score(tr.Y, t.predict_many(tr.X)),
        score(te.Y, t.predict_many(te.X)),
        t.size,
        cell.depth,
        cell.k,
        tuple(spread(t, tr, None, d) for d in depths),
        tuple(score(tr.Y, truncated_predictions(t, tr.X, d, ds.task)) for d in depths),
        violations,
    )


def run_cell(cell: Cell, suite: Suite, ds: Dataset | None = None, threads: int = 1) -> RunResult:
    ds = ds if ds is not None else _prepare(cell.dataset, suite)
    n_folds = suite.folds_classification if ds.task is Task.CLASSIFICATION else suite.folds_regression
    plan = make_folds(ds, n_folds, suite.test_fraction, suite.seed)
    jobs = [(f, tr, te) for f, (tr, te) in enumerate(plan.splits)]

    def one(job):
        f, tr, te = job
        return run_fold(ds, tr, te, cell, suite, f)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            folds = tuple(pool.map(one, jobs))
    else:
        folds = tuple(one(j) for j in jobs)
    if ds.task is Task.CLASSIFICATION:
        metric = "accuracy"
    else:
        metric = suite.regression_metric
    return RunResult(cell, metric, folds)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def table_text(results) -> str:
    lines = [TABLE_HEADER]
    for r in results:
        m, s = r.test
        c = r.cell
        lines.append(f"{c.dataset},{c.model},{c.depth},{c.k},{_fmt(m)},{_fmt(s)},{_fmt(r.tree_size_mean)}")
    return "\n".join(lines) + "\n"


def train_table_text(results) -> str:
    lines = [TABLE_HEADER]
    for r in results:
        m, s = r.train
        c = r.cell
        lines.append(f"{c.dataset},{c.model},{c.depth},{c.k},{_fmt(m)},{_fmt(s)},{_fmt(r.tree_size_mean)}")
    return "\n".join(lines) + "\n"


def series_text(results, what: str) -> str:
    """Per-depth rows; ``what`` is ``impurity`` (entropy or variance) or ``train_metric``."""
    lines = [TABLE_HEADER]
    for r in results:
        c = r.cell
        for d in range(1, c.depth + 1):
            m, s = r.impurity(d) if what == "impurity" else r.train_metric_at(d)
            lines.append(f"{c.dataset},{c.model},{d},{c.k},{_fmt(m)},{_fmt(s)},{_fmt(r.tree_size_mean)}")
    return "\n".join(lines) + "\n"


@dataclass
class BenchOutput:
    results: dict
    files: dict
    skipped: list


def run_benchmark(suite: Suite | str, out_dir=None, threads: int = 1,
                  datasets: list | None = None) -> BenchOutput:
    """Run every cell of a suite; unavailable datasets are skipped and reported."""
    if isinstance(suite, str):
        if suite not in SUITES:
            raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
        suite = SUITES[suite]
    cache: dict = {}
    data: dict = {}
    skipped: list = []

    def get(cell: Cell):
        if datasets is not None and cell.dataset not in datasets:
            return None
        if cell.dataset in skipped:
            return None
        if cell.dataset not in data:
            try:
                data[cell.dataset] = _prepare(cell.dataset, suite)
            except DatasetUnavailable:
                skipped.append(cell.dataset)
                return None
        if cell not in cache:
            cache[cell] = run_cell(cell, suite, data[cell.dataset], threads)
        return cache[cell]

    files = {}
    for name, cells in suite.tables.items():
        res = [r for r in (get(c) for c in cells) if r is not None]
        files[f"{name}.csv"] = table_text(res)
        files[f"{name}_train.csv"] = train_table_text(res)
    if suite.series:
        depth_cells = [replace(c, depth=suite.series_depth) for c in suite.series]
        res = [r for r in (get(c) for c in depth_cells) if r is not None]
        cls_res = [r for r in res if data[r.cell.dataset].task is Task.CLASSIFICATION]
        reg_res = [r for r in res if data[r.cell.dataset].task is Task.REGRESSION]
        if cls_res:
            files["series_entropy.csv"] = series_text(cls_res, "impurity")
            files["series_train_accuracy.csv"] = series_text(cls_res, "train_metric")
        if reg_res:
            files["series_variance.csv"] = series_text(reg_res, "impurity")
            files["series_train_error.csv"] = series_text(reg_res, "train_metric")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for fname, text in files.items():
            (out / fname).write_text(text)
    return BenchOutput(cache, files, skipped)


# cost model -------------------------------------------------------------------

def _algorithmic(phase: str, prefix: str) -> bool:
    parts = phase.split(".")
    if prefix:
        return parts[0] == prefix and len(parts) > 1 and parts[1] != "load"
    return parts[0] not in ("retrain", "load", "general")


def algorithmic_state_preps(ledger: QueryLedger, retrain: bool = False) -> int:
    prefix = "retrain" if retrain else ""
    return ledger.total("state_preps", lambda p: _algorithmic(p, prefix))


def load_writes(ledger: QueryLedger, retrain: bool = False) -> int:
    phase = "retrain.load" if retrain else "load"
    return ledger.total("node_writes", lambda p: p == phase)


def cost_report(ledgers: Mapping[str, QueryLedger], reference: str | None = None) -> str:
    """Per-phase counters for each ledger plus the retraining ratios.

    ``reference`` names a ledger whose initial algorithmic cost is the
    denominator of the state-prep ratio (a fresh build over all rows);
    without it each ledger is compared against its own initial build.
    """
    out = io.StringIO()
    out.write("ledger,phase,counter,value\n")
    for name, led in ledgers.items():
        for phase, counters in sorted(led.snapshot().items()):
            for cname in sorted(counters):
                out.write(f"{name},{phase},{cname},{counters[cname]}\n")
        for cname in sorted(led.constants):
            out.write(f"{name},constant,{cname},{led.constants[cname]!r}\n")
    rows = []
    for name, led in ledgers.items():
        if not any(p.startswith("retrain") for p in led.phases()):
            continue
        base_load = load_writes(led)
        new_load = load_writes(led, retrain=True)
        ref = ledgers[reference] if reference else led
        base_algo = algorithmic_state_preps(ref)
        new_algo = algorithmic_state_preps(led, retrain=True)
        rows.append(f"{name},ratio,retrain_load_writes_over_initial,{_ratio(new_load, base_load)!r}")
        rows.append(f"{name},ratio,retrain_algorithmic_state_preps_over_initial,{_ratio(new_algo, base_algo)!r}")
    if rows:
        out.write("\n".join(rows) + "\n")
    return out.getvalue()


def _ratio(a, b) -> float:
    return float(a) / float(b) if b else float("nan")


def synthetic_dataset(n: int, d: int, seed: int, task: Task = Task.CLASSIFICATION) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    score = X @ w + 0.5 * rng.normal(size=n)
    Y = (score > 0).astype(float) if task is Task.CLASSIFICATION else score
    return Dataset(X, Y, task, tuple(f"x{j}" for j in range(d)))


def costmodel_experiment(n: int = 1024, n_new: int = 16, d: int = 8, k: int = 3, depth: int = 2,
                         method: str = "ae", seed: int = 0, eps: float = 0.05) -> dict:
    """Initial build over N, retrain with N_new, and a fresh build over N + N_new."""
    full = synthetic_dataset(n + n_new, d, seed)
    first = full.subset(np.arange(n))
    batch = full.subset(np.arange(n, n + n_new))
    cfg = EstimatorConfig(eps1=eps, eps2=eps, eps3=eps, method=method, seed=seed)
    cc = ClusterConfig(k, cfg=cfg)
    f = build(first)
    t = fit(first, f, cc, depth)
    retrain(t, f, batch, cc, depth)
    g = build(full)
    fit(full, g, cc, depth)
    return {"retrained": f.ledger, "fresh_total": g.ledger}
