"""Command-line entry point.

Settings come from, in increasing precedence: built-in defaults, the
``DESQ_SEED`` environment variable (seed only), a ``--config`` file of
``key = value`` lines under any ``[section]``, and explicit flags.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench
from .cluster import ClusterConfig, cluster_node
from .dataset import Dataset, Standardizer, Task, fit_standardizer, load_csv, load_features_csv
from .errors import ConfigError, DataError, DesqError, InvariantError
from .kptree import KpForest, build
from .qestimate import EstimatorConfig, QueryLedger
from .tree import DesqTree, fit, retrain
from .weights import compute_weights, no_weight

SEED_ENV = "DESQ_SEED"

DEFAULTS = {
    "task": "classification",
    "depth": 2,
    "clusters": 3,
    "iters": 100,
    "tol": 1e-4,
    "eps1": 1e-2,
    "eps2": 1e-2,
    "eps3": 1e-2,
    "delta": 0.05,
    "delta_kmeans": 0.0,
    "method": "exact",
    "rule": "distance",
    "weighted": True,
    "seed": 0,
    "threads": 1,
    "label_column": None,
}

MODEL_FILES = ("tree.txt", "forest.txt", "standardizer.txt", "ledger.txt", "weights.txt")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    key = str(text).strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


CASTS = {
    "depth": int, "clusters": int, "iters": int, "tol": float,
    "eps1": float, "eps2": float, "eps3": float, "delta": float, "delta_kmeans": float,
    "seed": int, "threads": int, "weighted": _bool,
}


def _estimation_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model settings (defaults in brackets)")
    g.add_argument("--task", help="classification | regression [classification]")
    g.add_argument("--label-column", dest="label_column", help="label column name [last column]")
    g.add_argument("--depth", help="maximum tree depth D [2]")
    g.add_argument("--clusters", "-k", dest="clusters", help="clusters per node k [3]")
    g.add_argument("--iters", help="k-means iteration cap K [100]")
    g.add_argument("--tol", help="centroid movement tolerance [1e-4]")
    g.add_argument("--eps1", help="inner-product precision [0.01]")
    g.add_argument("--eps2", help="centroid precision [0.01]")
    g.add_argument("--eps3", help="leaf-label precision [0.01]")
    g.add_argument("--delta", help="majority-vote failure target [0.05]")
    g.add_argument("--delta-kmeans", dest="delta_kmeans", help="delta-k-means slack [0]")
    g.add_argument("--method", help="exact | chernoff | ae [exact]")
    g.add_argument("--rule", help="distance | inner_product [distance]")
    g.add_argument("--weighted", help="feature weights on (1) or the unweighted ablation (0) [1]")


def build_parser() -> argparse.ArgumentParser:
    # accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value file; flags override it")
    common.add_argument("--seed", default=argparse.SUPPRESS, help=f"master seed [{SEED_ENV} or 0]")
    common.add_argument("--threads", default=argparse.SUPPRESS, help="worker cap for benchmark folds [1]")
    parser = argparse.ArgumentParser(
        prog="desq", parents=[common],
        description="Clustering-based decision trees with simulated quantum estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="fit a tree and write a model directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="model directory to create")
    _estimation_flags(p)

    p = sub.add_parser("predict", parents=[common], help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="predictions CSV [stdout]")

    p = sub.add_parser("retrain", parents=[common], help="append a labeled batch and refit")
    p.add_argument("--model", required=True)
    p.add_argument("--batch", required=True)
    p.add_argument("--out", help="write the updated model here instead of in place")

    p = sub.add_parser("bench", parents=[common], help="reproduce the benchmark tables")
    p.add_argument("--suite", default="paper", help=f"one of {sorted(bench.SUITES)} [paper]")
    p.add_argument("--out", default="bench_out", help="output directory [bench_out]")
    p.add_argument("--datasets", help="comma-separated subset of datasets")

    p = sub.add_parser("weights", parents=[common], help="print feature weights")
    p.add_argument("--data", required=True)
    _estimation_flags(p)

    p = sub.add_parser("cluster", parents=[common], help="print k-means traces for the root node")
    p.add_argument("--data", required=True)
    _estimation_flags(p)

    p = sub.add_parser("costmodel", parents=[common], help="ledger report for an initial build plus one retrain")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--n-new", dest="n_new", type=int, default=16)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--eps", type=float, default=0.05)
    _estimation_flags(p)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, environment, config file and flags into one settings dict."""
    settings = dict(DEFAULTS)
    if os.environ.get(SEED_ENV):
        settings["seed"] = os.environ[SEED_ENV]
    config = getattr(args, "config", None)
    if config:
        cp = configparser.ConfigParser()
        try:
            with open(config, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"bad config file: {exc}") from None
        for section in cp.sections():
            for key, val in cp.items(section):
                key = key.replace("-", "_")
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown config key {key!r}")
                settings[key] = val
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    for key, cast in CASTS.items():
        try:
            settings[key] = cast(settings[key])
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {settings[key]!r}") from None
    if settings["depth"] < 1:
        raise ConfigError("depth must be >= 1")
    if settings["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    settings["task"] = Task.parse(settings["task"])
    return settings


def cluster_config(s: dict) -> ClusterConfig:
    cfg = EstimatorConfig(s["eps1"], s["eps2"], s["eps3"], s["delta"], s["delta_kmeans"],
                          s["method"], s["seed"])
    return ClusterConfig(s["clusters"], s["iters"], s["tol"], s["rule"], cfg=cfg)


def _write_model(out: Path, t: DesqTree, f: KpForest, std: Standardizer) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "tree.txt").write_text(t.to_text())
    (out / "forest.txt").write_text(f.to_text())
    (out / "standardizer.txt").write_text(std.to_text())
    (out / "ledger.txt").write_text(f.ledger.to_text())
    (out / "weights.txt").write_text(t.weights.to_text(list(f.feature_names)))


def _read_model(path: Path):
    missing = [m for m in MODEL_FILES if not (path / m).is_file()]
    if missing:
        raise DataError(f"{path}: missing model files {missing}")
    ledger = QueryLedger.from_text((path / "ledger.txt").read_text())
    t = DesqTree.from_text((path / "tree.txt").read_text())
    f = KpForest.from_text((path / "forest.txt").read_text(), ledger)
    std = Standardizer.from_text((path / "standardizer.txt").read_text())
    try:
        f.check()
    except AssertionError as exc:
        raise InvariantError(f"{path}: forest dump is inconsistent: {exc}") from None
    return t, f, std


def cmd_train(args, s) -> int:
    raw = load_csv(args.data, s["task"], s["label_column"])
    std = fit_standardizer(raw)
    ds = std.apply(raw)
    f = build(ds)
    t = fit(ds, f, cluster_config(s), s["depth"], weighted=s["weighted"])
    _write_model(Path(args.out), t, f, std)
    print(f"trained tree with {t.size} nodes on {ds.n} rows -> {args.out}")
    return 0


def cmd_predict(args, s) -> int:
    t, f, std = _read_model(Path(args.model))
    _, X = load_features_csv(args.data, list(f.feature_names))
    pred = std.inverse_y(t.predict_many(std.transform_X(X)))
    text = "prediction\n" + "".join(f"{v!r}\n" for v in pred.tolist())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_retrain(args, s) -> int:
    path = Path(args.model)
    t, f, std = _read_model(path)
    header, _ = load_features_csv(args.batch)
    label = header[-1]
    if list(f.feature_names) + [label] != header:
        cols = [c for c in header if c not in f.feature_names]
        if len(cols) != 1:
            raise DataError(f"{args.batch}: expected the model's features plus one label column")
        label = cols[0]
    batch = load_csv(args.batch, f.task, label)
    _, Xb = load_features_csv(args.batch, list(f.feature_names))
    new = std.apply(Dataset(Xb, batch.Y, f.task, f.feature_names))
    t2 = retrain(t, f, new)
    _write_model(Path(args.out) if args.out else path, t2, f, std)
    print(f"retrained on {f.n} rows ({new.n} new); tree has {t2.size} nodes")
    return 0


def cmd_bench(args, s) -> int:
    names = args.datasets.split(",") if args.datasets else None
    suite = bench.SUITES.get(args.suite)
    if suite is None:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from {sorted(bench.SUITES)}")
    suite = replace(suite, seed=s["seed"])
    out = bench.run_benchmark(suite, args.out, threads=s["threads"], datasets=names)
    for name in sorted(out.files):
        print(f"wrote {Path(args.out) / name}")
    for name in out.skipped:
        print(f"skipped {name}: dataset not available", file=sys.stderr)
    return 0


def cmd_weights(args, s) -> int:
    raw = load_csv(args.data, s["task"], s["label_column"])
    ds = fit_standardizer(raw).apply(raw)
    f = build(ds)
    w = compute_weights(f, ds, cluster_config(s).cfg)
    sys.stdout.write(w.to_text(list(ds.feature_names)))
    return 0


def cmd_cluster(args, s) -> int:
    raw = load_csv(args.data, s["task"], s["label_column"])
    ds = fit_standardizer(raw).apply(raw)
    f = build(ds)
    cc = cluster_config(s)
    w = compute_weights(f, ds, cc.cfg) if s["weighted"] else no_weight(ds.d)
    trace: list = []
    cluster_node(np.arange(ds.n), ds, f, w, cc, trace=trace)
    lines = ["iteration,objective,movement,repaired"]
    lines += [f"{it.iteration},{it.objective!r},{it.movement!r},{it.repaired}" for it in trace]
    lines.append("")
    lines.append("iteration,cluster," + ",".join(ds.feature_names))
    for it in trace:
        for j, c in enumerate(it.centroids):
            lines.append(f"{it.iteration},{j}," + ",".join(repr(float(v)) for v in c))
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_costmodel(args, s) -> int:
    ledgers = bench.costmodel_experiment(args.n, args.n_new, args.d, s["clusters"], s["depth"],
                                         s["method"], s["seed"], args.eps)
    sys.stdout.write(bench.cost_report(ledgers, reference="fresh_total"))
    return 0


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "retrain": cmd_retrain,
    "bench": cmd_bench,
    "weights": cmd_weights,
    "cluster": cmd_cluster,
    "costmodel": cmd_costmodel,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, resolve(args))
    except ConfigError as exc:
        print(f"desq: config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"desq: data error: {exc}", file=sys.stderr)
        return 3
    except (InvariantError, AssertionError) as exc:
        print(f"desq: internal error: {exc}", file=sys.stderr)
        return 4
    except DesqError as exc:
        print(f"desq: data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
