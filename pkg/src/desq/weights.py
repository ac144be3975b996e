"""Feature weights from label correlation.

Each feature gets the absolute Pearson correlation with the label (for
0/1 labels this is the point-biserial coefficient), rescaled to unit
length. The estimated route reads three inner products off the KP-tree
forest,

    s = <x, y>,   a = sqrt(N) * mean(x),   b = sqrt(N) * mean(y),

and rebuilds

    w = (s - a*b) / (sqrt(‖x‖² - a²) * sqrt(‖y‖² - b²)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import DegenerateError, LengthMismatch, ZeroNormError
from .kptree import KpForest
from .qestimate import (
    AE_SUCCESS,
    EstimatorConfig,
    Method,
    NoisyEstimate,
    chernoff_success,
    envelope,
    estimate_inner_products,
    stream,
)

WEIGHT_STREAM = 1
ETA_CONSTANT = 7.0


def pearson_exact(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"shapes {x.shape} and {y.shape} differ")
    if x.size < 2:
        raise ValueError("Pearson correlation needs at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.dot(xc, xc))
    sy = np.sqrt(np.dot(yc, yc))
    if sx == 0 or sy == 0:
        return 0.0
    return float(np.clip(np.dot(xc, yc) / (sx * sy), -1.0, 1.0))


def eta(col_norm: float, label_norm: float, n: int, sigma_x: float, sigma_y: float) -> float:
    """Error amplification of the weight reconstruction per unit inner-product error."""
    big = max(col_norm * label_norm, col_norm**2, label_norm**2)
    small = min(sigma_x * sigma_y, sigma_x**2, sigma_y**2)
    if small <= 0:
        return float("inf")
    return ETA_CONSTANT * big / (n * small)


@dataclass(frozen=True)
class FeatureStats:
    mean: float
    sigma: float
    norm: float
    s: float
    a: float


@dataclass(frozen=True)
class LabelStats:
    mean: float
    sigma: float
    norm: float
    b: float


def pearson_quantum(f: KpForest, j: int, cfg: EstimatorConfig, *,
                    literal_numerator: bool = False,
                    rng: np.random.Generator | None = None,
                    details: dict | None = None) -> NoisyEstimate:
    """Estimated correlation of feature ``j`` with the labels.

    ``literal_numerator`` multiplies ``a*b`` by ``(2 - 1/N)``, a diagnostic
    for a variant of the reconstruction that does not match the identity
    ``sum((x - mx)(y - my)) = s - a*b``.
    """
    n = f.n
    col = f.col_state(j)
    lab = f.label_state()
    uni = f.uniform_state()
    if rng is None:
        rng = stream(cfg.seed, WEIGHT_STREAM, j)
    cos = np.array([
        np.dot(col.amplitudes, lab.amplitudes),
        np.dot(col.amplitudes, uni.amplitudes),
        np.dot(lab.amplitudes, uni.amplitudes),
    ])
    norms_a = np.array([col.norm, col.norm, lab.norm])
    norms_b = np.array([lab.norm, uni.norm, uni.norm])
    vals, _ = estimate_inner_products(norms_a, norms_b, cos, cfg.eps1, cfg, rng, f.ledger)
    s, a, b = (float(v) for v in vals)
    nx2 = col.norm**2
    ny2 = lab.norm**2
    num = s - a * b * ((2.0 - 1.0 / n) if literal_numerator else 1.0)
    fx = nx2 - a * a
    fy = ny2 - b * b
    mean_x = a / np.sqrt(n)
    mean_y = b / np.sqrt(n)
    sigma_x = np.sqrt(max(fx, 0.0) / n)
    sigma_y = np.sqrt(max(fy, 0.0) / n)
    if details is not None:
        details["feature"] = FeatureStats(mean_x, sigma_x, col.norm, s, a)
        details["label"] = LabelStats(mean_y, sigma_y, lab.norm, b)
    # a vanishing factor means zero variance up to rounding or noise
    if fx <= 1e-12 * nx2 or fy <= 1e-12 * ny2:
        raise DegenerateError(f"feature {j}: variance factor vanished")
    w = float(np.clip(num / (np.sqrt(fx) * np.sqrt(fy)), -1.0, 1.0))
    if cfg.exact:
        return NoisyEstimate(w, 0.0, 1.0)
    amp = eta(col.norm, lab.norm, n, sigma_x, sigma_y)
    f.ledger.set_constant("eta", max(amp, f.ledger.constants.get("eta", 0.0)))
    if cfg.method is Method.AMPLITUDE_ESTIMATION:
        bound = amp * envelope(cfg.eps1)
        single = AE_SUCCESS
    else:
        bound = amp * cfg.eps1
        single = chernoff_success(cfg.chernoff_constant)
    # three independent estimates must all succeed
    success = (1.0 - cfg.delta_cap) ** 3 if cfg.boost else single**3
    return NoisyEstimate(w, float(bound), float(success))


@dataclass(frozen=True)
class FeatureWeights:
    raw: np.ndarray
    normalized: np.ndarray
    error_bounds: np.ndarray = field(default=None)
    degenerate: np.ndarray = field(default=None)
    feature_stats: tuple = ()
    label_stats: LabelStats | None = None

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=float)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "normalized", np.asarray(self.normalized, dtype=float))
        if self.error_bounds is None:
            object.__setattr__(self, "error_bounds", np.zeros_like(raw))
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", np.zeros(raw.shape, dtype=bool))

    @property
    def d(self) -> int:
        return self.raw.shape[0]

    def to_text(self, feature_names=None) -> str:
        names = feature_names or [f"x{j}" for j in range(self.d)]
        lines = ["feature,raw_w,normalized_w,error_bound"]
        for name, r, nw, e in zip(names, self.raw, self.normalized, self.error_bounds):
            lines.append(f"{name},{float(r)!r},{float(nw)!r},{float(e)!r}")
        return "\n".join(lines) + "\n"


def normalize(raw) -> np.ndarray:
    """|raw| scaled to unit length; an all-zero vector maps to the uniform vector."""
    mag = np.abs(np.asarray(raw, dtype=float))
    total = np.sqrt(np.dot(mag, mag))
    if total == 0:
        return np.full(mag.shape, 1.0 / np.sqrt(mag.size))
    return mag / total


def compute_weights(f: KpForest, ds: Dataset | None, cfg: EstimatorConfig, *,
                    literal_numerator: bool = False) -> FeatureWeights:
    """Per-feature correlation estimates, normalized once for the whole tree."""
    if ds is not None and (ds.d != f.d or ds.n != f.n):
        raise LengthMismatch(f"dataset {ds.n}x{ds.d} does not match forest {f.n}x{f.d}")
    d = f.d
    raw = np.zeros(d)
    bounds = np.zeros(d)
    degenerate = np.zeros(d, dtype=bool)
    stats = []
    label = None
    for j in range(d):
        info: dict = {}
        try:
            est = pearson_quantum(f, j, cfg, literal_numerator=literal_numerator, details=info)
            raw[j] = est.value
            bounds[j] = est.abs_error_bound
        except (DegenerateError, ZeroNormError):
            degenerate[j] = True
        stats.append(info.get("feature"))
        label = info.get("label", label)
    return FeatureWeights(raw, normalize(raw), bounds, degenerate, tuple(stats), label)


def no_weight(d: int) -> FeatureWeights:
    """Uniform weights (the unweighted ablation)."""
    return FeatureWeights(np.ones(d), np.full(d, 1.0 / np.sqrt(d)))


def as_vector(w) -> np.ndarray:
    """Normalized weight vector from FeatureWeights or any array-like."""
    return np.asarray(w.normalized if isinstance(w, FeatureWeights) else w, dtype=float)
