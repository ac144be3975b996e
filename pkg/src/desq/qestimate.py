"""Simulated quantum estimation primitives and the query ledger.

Inner products between amplitude-encoded vectors are estimated through
the swap-style test probability ``p1 = (1 - <a, b>) / 2``. Two noise
models are available:

* amplitude estimation: the normalized inner product is perturbed by a
  seeded uniform draw inside the envelope
  ``2*pi*sqrt(p1*(1 - p1))*eps + (pi*eps)**2`` and costs ``ceil(1/eps)``
  iterations;
* Chernoff sampling: ``p1`` is replaced by the empirical mean of
  ``ceil(c/eps**2)`` Bernoulli draws.

Exact mode returns the true value with a zero error bound.
"""
from __future__ import annotations

import contextlib
import enum
import io
import math
import threading
from collections import defaultdict
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, EmptyInput

AE_SUCCESS = 8.0 / math.pi**2


class Method(enum.Enum):
    EXACT = "exact"
    CHERNOFF = "chernoff"
    AMPLITUDE_ESTIMATION = "ae"

    @classmethod
    def parse(cls, text) -> "Method":
        if isinstance(text, Method):
            return text
        key = str(text).strip().lower().replace("-", "_")
        aliases = {
            "exact": cls.EXACT,
            "chernoff": cls.CHERNOFF,
            "ae": cls.AMPLITUDE_ESTIMATION,
            "amplitude_estimation": cls.AMPLITUDE_ESTIMATION,
            "amplitudeestimation": cls.AMPLITUDE_ESTIMATION,
        }
        if key not in aliases:
            raise ConfigError(f"unknown estimation method {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class EstimatorConfig:
    """Error budget and noise model shared by every estimation step.

    ``eps1`` governs inner products (weights and assignment), ``eps2`` the
    centroid coordinates and ``eps3`` the leaf labels. ``delta_cap`` is the
    majority-vote failure target used when ``boost`` is on.
    """

    eps1: float = 1e-2
    eps2: float = 1e-2
    eps3: float = 1e-2
    delta_cap: float = 0.05
    delta_kmeans: float = 0.0
    method: Method = Method.EXACT
    seed: int = 0
    chernoff_constant: float = 1.0
    register_bits: int = 16
    boost: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        for name in ("eps1", "eps2", "eps3"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0.0 < self.delta_cap < 0.5:
            raise ConfigError("delta_cap must lie in (0, 0.5)")
        if self.delta_kmeans < 0:
            raise ConfigError("delta_kmeans must be >= 0")
        if self.chernoff_constant <= 0:
            raise ConfigError("chernoff_constant must be > 0")
        if int(self.seed) < 0:
            raise ConfigError("seed must be a nonnegative integer")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def exact(self) -> bool:
        return self.method is Method.EXACT


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for one named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


class QueryLedger:
    """Thread-safe counters grouped by phase.

    Phases nest: entering ``"weights"`` inside ``"retrain"`` records under
    ``"retrain.weights"``. Counts made outside any phase go to ``"general"``.
    """

    COUNTERS = (
        "state_preps",
        "ae_iterations",
        "chernoff_samples",
        "majority_copies",
        "node_writes",
    )

    def __init__(self):
        self._lock = threading.Lock()
        self._local = threading.local()
        self._counts = defaultdict(lambda: defaultdict(int))
        self.constants: dict = {}

    def _stack(self) -> list:
        st = getattr(self._local, "stack", None)
        if st is None:
            st = self._local.stack = []
        return st

    @contextlib.contextmanager
    def phase(self, name: str):
        st = self._stack()
        st.append(name)
        try:
            yield self
        finally:
            st.pop()

    @property
    def current_phase(self) -> str:
        st = self._stack()
        return ".".join(st) if st else "general"

    def add(self, counter: str, amount: int = 1) -> None:
        amount = int(amount)
        if amount < 0:
            raise ValueError("ledger counters only increase")
        with self._lock:
            self._counts[self.current_phase][counter] += amount

    def set_constant(self, name: str, value) -> None:
        if isinstance(value, (int, float, np.number)) and not isinstance(value, bool):
            value = float(value)
        with self._lock:
            self.constants[name] = value

    def get(self, counter: str, phase: str) -> int:
        with self._lock:
            return self._counts.get(phase, {}).get(counter, 0)

    def phases(self) -> list:
        with self._lock:
            return sorted(self._counts)

    def total(self, counter: str, where: Callable[[str], bool] | None = None) -> int:
        with self._lock:
            return sum(
                c.get(counter, 0)
                for p, c in self._counts.items()
                if where is None or where(p)
            )

    def __getattr__(self, name):
        if name in QueryLedger.COUNTERS:
            return self.total(name)
        raise AttributeError(name)

    def snapshot(self) -> dict:
        with self._lock:
            return {p: dict(c) for p, c in self._counts.items()}

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("phase,counter,value\n")
        for p, c in sorted(self.snapshot().items()):
            for name in sorted(c):
                out.write(f"{p},{name},{c[name]}\n")
        for name in sorted(self.constants):
            out.write(f"constant,{name},{self.constants[name]!r}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "QueryLedger":
        led = cls()
        for line in text.splitlines()[1:]:
            if not line.strip():
                continue
            phase, name, value = line.split(",", 2)
            if phase == "constant":
                try:
                    led.constants[name] = float(value)
                except ValueError:
                    led.constants[name] = value.strip("'\"")
            else:
                led._counts[phase][name] += int(value)
        return led


@dataclass(frozen=True)
class NoisyEstimate:
    value: float
    abs_error_bound: float
    success_prob: float = 1.0

    def __post_init__(self):
        if self.abs_error_bound < 0:
            raise ValueError("abs_error_bound must be >= 0")
        if not 0.0 < self.success_prob <= 1.0:
            raise ValueError("success_prob must lie in (0, 1]")


def ae_error_bound(p, eps):
    """Amplitude-estimation additive error on a probability ``p`` after ``1/eps`` iterations."""
    p = np.clip(p, 0.0, 1.0)
    return 2.0 * math.pi * np.sqrt(p * (1.0 - p)) * eps + (math.pi * eps) ** 2


def envelope(eps: float) -> float:
    """Worst-case normalized inner-product error allowed for precision ``eps``."""
    return 2.0 * math.pi * eps + (math.pi * eps) ** 2


def precision_for(target: float, scale) -> np.ndarray:
    """Largest ``eps`` with ``scale * envelope(eps) <= target``."""
    scale = np.asarray(scale, dtype=float)
    ratio = np.where(scale > 0, target / np.where(scale > 0, scale, 1.0), np.inf)
    eps = (np.sqrt(1.0 + ratio) - 1.0) / math.pi
    return np.minimum(eps, 1.0)


def chernoff_samples(eps, constant: float = 1.0) -> np.ndarray:
    return np.ceil(constant / np.square(eps)).astype(np.int64)


def ae_iterations(eps) -> np.ndarray:
    return np.ceil(1.0 / np.asarray(eps, dtype=float)).astype(np.int64)


def chernoff_success(constant: float) -> float:
    # worst case p1 = 1/2: the normalized estimate has std 1/sqrt(m), so
    # P(|err| <= eps) ~ 2*Phi(sqrt(constant)) - 1
    return 2.0 * NormalDist().cdf(math.sqrt(constant)) - 1.0


def _noisy_cosines(cos, eps, cfg: EstimatorConfig, rng, copies: int):
    """Perturb normalized inner products; returns (estimates, per-entry bound)."""
    cos = np.clip(cos, -1.0, 1.0)
    p1 = 0.5 * (1.0 - cos)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), cos.shape)
    shape = (copies,) + cos.shape
    if cfg.method is Method.AMPLITUDE_ESTIMATION:
        bound = ae_error_bound(p1, eps)
        draws = cos + rng.uniform(-1.0, 1.0, size=shape) * bound
        draws = np.clip(draws, -1.0, 1.0)
    else:
        m = np.broadcast_to(chernoff_samples(eps, cfg.chernoff_constant), cos.shape)
        hits = rng.binomial(m, p1, size=shape)
        draws = 1.0 - 2.0 * hits / m
        bound = np.asarray(eps, dtype=float) * np.ones_like(cos)
    if copies == 1:
        return draws[0], bound
    # lower median: a failure needs at least half of the copies to be wrong
    return np.sort(draws, axis=0)[(copies - 1) // 2], bound


def estimate_inner_products(
    norm_a,
    norm_b,
    cos,
    eps,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
    ledger: QueryLedger | None = None,
):
    """Vectorized estimator for ``norm_a * norm_b * cos``.

    All array arguments broadcast together; ``eps`` may vary per entry.
    Returns ``(values, abs_error_bounds)``.
    """
    cos = np.asarray(cos, dtype=float)
    scale = np.asarray(norm_a, dtype=float) * np.asarray(norm_b, dtype=float)
    scale = np.broadcast_to(scale, np.broadcast_shapes(scale.shape, cos.shape))
    cos = np.broadcast_to(cos, scale.shape)
    count = int(np.prod(cos.shape))
    if cfg.method is Method.EXACT:
        if ledger is not None:
            ledger.add("state_preps", count)
        return scale * cos, np.zeros(cos.shape)
    if rng is None:
        rng = stream(cfg.seed)
    copies = majority_copies(AE_SUCCESS if cfg.method is Method.AMPLITUDE_ESTIMATION
                             else chernoff_success(cfg.chernoff_constant),
                             cfg.delta_cap) if cfg.boost else 1
    est, bound = _noisy_cosines(cos, eps, cfg, rng, copies)
    if ledger is not None:
        eps_b = np.broadcast_to(np.asarray(eps, dtype=float), cos.shape)
        ledger.add("state_preps", count * copies)
        if cfg.method is Method.AMPLITUDE_ESTIMATION:
            ledger.add("ae_iterations", int(ae_iterations(eps_b).sum()) * copies)
        else:
            ledger.add("chernoff_samples",
                       int(chernoff_samples(eps_b, cfg.chernoff_constant).sum()) * copies)
        if copies > 1:
            ledger.add("majority_copies", count * copies)
    return scale * est, scale * bound


def inner_product(a, b, eps: float, cfg: EstimatorConfig,
                  rng: np.random.Generator | None = None,
                  ledger: QueryLedger | None = None) -> NoisyEstimate:
    """Estimate ``‖a‖‖b‖<â, b̂>`` for two amplitude vectors."""
    if a.amplitudes.shape != b.amplitudes.shape:
        raise DimensionError(f"dimension mismatch {a.amplitudes.shape} vs {b.amplitudes.shape}")
    if not eps > 0:
        raise ConfigError("eps must be > 0")
    cos = float(np.dot(a.amplitudes, b.amplitudes))
    vals, bounds = estimate_inner_products(a.norm, b.norm, cos, eps, cfg, rng, ledger)
    if cfg.method is Method.EXACT:
        prob = 1.0
    elif cfg.boost:
        prob = 1.0 - cfg.delta_cap
    elif cfg.method is Method.AMPLITUDE_ESTIMATION:
        prob = AE_SUCCESS
    else:
        prob = chernoff_success(cfg.chernoff_constant)
    return NoisyEstimate(float(vals), float(bounds), prob)


def majority_copies(a: float, delta: float) -> int:
    """Copies needed so a median vote over estimators of success ``a`` fails w.p. <= ``delta``."""
    if not a > 0.5 or a > 1.0:
        raise DomainError(f"success probability must lie in (0.5, 1], got {a}")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return max(1, math.ceil(math.log(1.0 / delta) / (2.0 * (a - 0.5) ** 2)))


def boosted(est: Callable[[], NoisyEstimate], a: float, delta: float,
            ledger: QueryLedger | None = None) -> NoisyEstimate:
    """Median of ``majority_copies(a, delta)`` independent runs of ``est``."""
    copies = majority_copies(a, delta)
    runs = [est() for _ in range(copies)]
    vals = sorted(r.value for r in runs)
    if ledger is not None:
        ledger.add("majority_copies", copies)
    return NoisyEstimate(
        vals[(copies - 1) // 2],
        max(r.abs_error_bound for r in runs),
        1.0 - delta,
    )


class Extreme(enum.Enum):
    MAX = "max"
    MIN = "min"


def compare_and_argbest(estimates: Sequence, mode: Extreme | str) -> int:
    """Index of the largest (or smallest) estimate; ties go to the lowest index."""
    if len(estimates) == 0:
        raise EmptyInput("no estimates to compare")
    mode = Extreme(mode) if not isinstance(mode, Extreme) else mode
    vals = np.array([e.value if isinstance(e, NoisyEstimate) else float(e) for e in estimates])
    return int(np.argmax(vals) if mode is Extreme.MAX else np.argmin(vals))


def cost_per_estimate(eps: float, method: Method, chernoff_constant: float = 1.0) -> int:
    """Ledger cost of one estimate: AE iterations or Chernoff samples."""
    method = Method.parse(method)
    if method is Method.AMPLITUDE_ESTIMATION:
        return int(ae_iterations(eps))
    if method is Method.CHERNOFF:
        return int(chernoff_samples(eps, chernoff_constant))
    return 0
