"""Customizable link metric, rolling windows and Sharpe-ratio reliability.

Two metric kinds are supported:

* ``weighted-sum``: ``sum(w_i * t_i(a_i))`` where ``t_i`` is one of
  ``identity``, ``inverse`` or ``scale(k)``.
* ``eigrp-classic``: the 256-scaled composite
  ``(K1*S + K2*S/(256 - load') + K3*D) * (K5 / (rel' + K4))`` where the last
  factor is dropped when ``K5 == 0``. With throughput in Mbit/s and latency in
  ms: ``S = 256 * 1e7 / (throughput * 1000)``, ``D = 256 * latency * 100``
  (tens of microseconds), ``load' = 255 * load``, ``rel' = 255 * reliability``.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .errors import (
    EmptyAttributeSet,
    MissingAttribute,
    MissingLinkSample,
    NonFiniteInput,
    PresetMismatch,
    UnknownAttribute,
    WeightSumViolation,
    WindowTooShort,
)

KNOWN_ATTRIBUTES = frozenset({"throughput", "latency", "load", "reliability", "jitter"})
EIGRP_ATTRIBUTES = frozenset({"throughput", "load", "latency", "reliability"})
KINDS = ("weighted-sum", "eigrp-classic")
WEIGHT_TOLERANCE = 1e-6
EIGRP_SCALE = 256.0

DEFAULT_PARAMS: dict[str, float] = {
    "K1": 1.0,
    "K2": 0.0,
    "K3": 1.0,
    "K4": 0.0,
    "K5": 0.0,
    "alpha": 0.3,
    "window": 16,
    "risk_free": 0.0,
    "epsilon": 1e-12,
    "smoothing": 0.0,  # nonzero: rank on exponentially smoothed per-step scores
}

_SCALE_RE = re.compile(r"^scale\(\s*([-+0-9.eE]+)\s*\)$")


@dataclass(frozen=True)
class Transform:
    kind: str = "identity"  # identity | inverse | scale
    factor: float = 1.0

    def __call__(self, x: float) -> float:
        if self.kind == "identity":
            return x
        if self.kind == "inverse":
            if x == 0:
                raise NonFiniteInput("inverse transform of zero")
            return 1.0 / x
        return self.factor * x

    def __str__(self) -> str:
        return f"scale({self.factor!r})" if self.kind == "scale" else self.kind

    @classmethod
    def parse(cls, raw: Any) -> Transform:
        if isinstance(raw, Transform):
            return raw
        if isinstance(raw, Mapping) and "scale" in raw:
            return cls("scale", float(raw["scale"]))
        if raw in ("identity", "inverse"):
            return cls(raw)
        if isinstance(raw, str):
            m = _SCALE_RE.match(raw.strip())
            if m:
                return cls("scale", float(m.group(1)))
        raise UnknownAttribute(f"unknown transform {raw!r}")


@dataclass(frozen=True)
class MetricSpec:
    attributes: tuple[str, ...]
    weights: tuple[float, ...]
    transforms: tuple[Transform, ...] = ()
    kind: str = "weighted-sum"
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        transforms = tuple(Transform.parse(t) for t in self.transforms)
        if not transforms:
            transforms = tuple(Transform() for _ in self.attributes)
        object.__setattr__(self, "transforms", transforms)

    def param(self, key: str) -> float:
        return float(self.params.get(key, DEFAULT_PARAMS[key]))

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> MetricSpec:
        try:
            return cls(
                attributes=tuple(doc["attributes"]),
                weights=tuple(doc["weights"]),
                transforms=tuple(doc.get("transforms", ())),
                kind=doc.get("kind", "weighted-sum"),
                name=doc.get("name", "custom"),
                params=dict(doc.get("params", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise UnknownAttribute(f"malformed metric document: {exc}") from exc

    def to_document(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "attributes": list(self.attributes),
            "weights": list(self.weights),
            "transforms": [str(t) for t in self.transforms],
            "params": {k: self.params[k] for k in sorted(self.params)},
        }


def validate_metric_spec(spec: MetricSpec) -> MetricSpec:
    if not spec.attributes:
        raise EmptyAttributeSet(spec.name)
    if not (len(spec.attributes) == len(spec.weights) == len(spec.transforms)):
        raise EmptyAttributeSet(
            f"{spec.name}: attributes/weights/transforms lengths differ "
            f"({len(spec.attributes)}/{len(spec.weights)}/{len(spec.transforms)})"
        )
    unknown = [a for a in spec.attributes if a not in KNOWN_ATTRIBUTES]
    if unknown:
        raise UnknownAttribute(", ".join(unknown))
    if len(set(spec.attributes)) != len(spec.attributes):
        raise UnknownAttribute(f"{spec.name}: duplicate attributes")
    if spec.kind not in KINDS:
        raise PresetMismatch(f"unknown metric kind {spec.kind!r}")
    if any(not (0.0 <= w <= 1.0) for w in spec.weights):
        raise WeightSumViolation(f"{spec.name}: weights must lie in [0, 1]")
    total = math.fsum(spec.weights)
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise WeightSumViolation(f"{spec.name}: weights sum to {total!r}, expected 1")
    if spec.kind == "eigrp-classic" and set(spec.attributes) != EIGRP_ATTRIBUTES:
        raise PresetMismatch(
            f"eigrp-classic needs exactly {sorted(EIGRP_ATTRIBUTES)}, got {sorted(spec.attributes)}"
        )
    for key in spec.params:
        if key not in DEFAULT_PARAMS:
            raise PresetMismatch(f"unknown metric parameter {key!r}")
    return spec


def _values_of(sample: Any) -> Mapping[str, float]:
    return sample.values if hasattr(sample, "values") and not isinstance(sample, Mapping) else sample


def eigrp_terms(values: Mapping[str, float]) -> tuple[float, float, float, float]:
    """Return (S, D, load', rel') scaled terms for an attribute sample."""
    throughput = values["throughput"]
    if throughput <= 0:
        raise NonFiniteInput("throughput must be positive for eigrp-classic")
    s = EIGRP_SCALE * 1e7 / (throughput * 1000.0)
    d = EIGRP_SCALE * values["latency"] * 100.0
    return s, d, 255.0 * values["load"], 255.0 * values["reliability"]


def eigrp_composite(
    s: float, d: float, load_scaled: float, rel_scaled: float, k: Mapping[str, float]
) -> float:
    k1, k2, k3, k4, k5 = (float(k[f"K{i}"]) for i in range(1, 6))
    base = k1 * s + k2 * s / (256.0 - load_scaled) + k3 * d
    if k5 == 0:
        return base
    return base * (k5 / (rel_scaled + k4))


def evaluate_metric(spec: MetricSpec, sample: Any) -> float:
    values = _values_of(sample)
    for attr in spec.attributes:
        if attr not in values:
            raise MissingAttribute(attr)
        if not math.isfinite(values[attr]):
            raise NonFiniteInput(f"{attr}={values[attr]!r}")
    if spec.kind == "eigrp-classic":
        k = {f"K{i}": spec.param(f"K{i}") for i in range(1, 6)}
        cost = eigrp_composite(*eigrp_terms(values), k)
    else:
        cost = 0.0
        for attr, w, t in zip(spec.attributes, spec.weights, spec.transforms):
            cost += w * t(float(values[attr]))
    if not math.isfinite(cost):
        raise NonFiniteInput(f"{spec.name} produced {cost!r}")
    return cost


class RollingWindow:
    """Bounded FIFO of (timestamp, value) with strictly increasing timestamps."""

    def __init__(self, capacity: int = 16, samples: Iterable[tuple[float, float]] = ()) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._samples: deque[tuple[float, float]] = deque(maxlen=capacity)
        for ts, v in samples:
            self.push(ts, v)

    @classmethod
    def of(cls, values: Sequence[float], capacity: int | None = None) -> RollingWindow:
        return cls(capacity or max(1, len(values)), enumerate(values))

    def push(self, timestamp: float, value: float) -> None:
        if self._samples and timestamp <= self._samples[-1][0]:
            raise ValueError(
                f"timestamp {timestamp} not after previous {self._samples[-1][0]}"
            )
        self._samples.append((timestamp, float(value)))

    @property
    def samples(self) -> tuple[tuple[float, float], ...]:
        return tuple(self._samples)

    @property
    def values(self) -> list[float]:
        return [v for _, v in self._samples]

    @property
    def last_timestamp(self) -> float | None:
        return self._samples[-1][0] if self._samples else None

    def copy(self) -> RollingWindow:
        return RollingWindow(self.capacity, self._samples)

    def __len__(self) -> int:
        return len(self._samples)


@dataclass(frozen=True)
class Reliability:
    score: float
    window_len: int
    computed_at: float | None = None

    @property
    def defined(self) -> bool:
        return self.window_len >= 2


def _as_values(window: RollingWindow | Sequence[float]) -> tuple[list[float], float | None]:
    if isinstance(window, RollingWindow):
        return window.values, window.last_timestamp
    return [float(v) for v in window], None


def sharpe_reliability(
    window: RollingWindow | Sequence[float], risk_free: float = 0.0, epsilon: float = 1e-12
) -> Reliability:
    """(mean - risk_free) / population std, with signed infinity when std < epsilon."""
    values, ts = _as_values(window)
    if len(values) < 2:
        raise WindowTooShort(f"need at least 2 samples, got {len(values)}")
    # Welford single pass
    mean = 0.0
    m2 = 0.0
    for i, x in enumerate(values, 1):
        delta = x - mean
        mean += delta / i
        m2 += delta * (x - mean)
    sigma = math.sqrt(max(m2, 0.0) / len(values))
    excess = mean - risk_free
    if sigma < epsilon:
        score = math.inf if excess > 0 else -math.inf
    else:
        score = excess / sigma
    return Reliability(score, len(values), ts)


def predict_reliability(
    history: RollingWindow | Sequence[float],
    horizon: int = 1,
    alpha: float = 0.3,
    cap: float = 1e6,
) -> Reliability:
    """Exponentially smoothed per-step Sharpe score, extrapolated flat over ``horizon``.

    Infinite sentinel scores are clamped to +/- ``cap`` while smoothing; a
    result at the cap maps back to the sentinel.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    values, ts = _as_values(history)
    if len(values) < 2:
        raise WindowTooShort(f"need at least 2 samples, got {len(values)}")
    level = max(-cap, min(cap, values[0]))
    for x in values[1:]:
        level = alpha * max(-cap, min(cap, x)) + (1.0 - alpha) * level
    if level >= cap:
        level = math.inf
    elif level <= -cap:
        level = -math.inf
    return Reliability(level, len(values), ts)


def cost_reward(cost: float) -> float:
    """Map a cost onto a positive reward in (0, 1]; lower cost means higher reward."""
    if math.isinf(cost):
        return 0.0
    return 1.0 / (1.0 + cost)


def reliability_of_costs(
    costs: Sequence[float], risk_free: float = 0.0, epsilon: float = 1e-12
) -> Reliability:
    """Reliability of a cost series: Sharpe ratio of its reward series."""
    return sharpe_reliability([cost_reward(c) for c in costs], risk_free, epsilon)


def per_step_scores(
    costs: Sequence[float], risk_free: float = 0.0, epsilon: float = 1e-12
) -> list[float]:
    """Sharpe score of every expanding prefix of length >= 2."""
    return [
        reliability_of_costs(costs[:i], risk_free, epsilon).score for i in range(2, len(costs) + 1)
    ]


class CostHistory:
    """Rolling per-tick link cost table used for path reliability.

    Each tick records the cost of every telemetered link. A path's series is
    the per-tick sum of its link costs; links missing from a tick fall back to
    ``fixed`` costs (pseudo and split-internal links) or +inf.
    """

    def __init__(self, capacity: int = 16) -> None:
        self.capacity = capacity
        self._ticks: deque[tuple[float, dict[str, float]]] = deque(maxlen=capacity)

    def record(self, timestamp: float, costs: Mapping[str, float]) -> None:
        if self._ticks and timestamp <= self._ticks[-1][0]:
            raise ValueError("cost history timestamps must increase")
        self._ticks.append((timestamp, dict(costs)))

    def __len__(self) -> int:
        return len(self._ticks)

    @property
    def timestamps(self) -> list[float]:
        return [ts for ts, _ in self._ticks]

    def link_series(self, link_id: str) -> list[float]:
        return [tick[link_id] for _, tick in self._ticks if link_id in tick]

    def path_series(self, link_ids: Sequence[str], fixed: Mapping[str, float]) -> list[float]:
        series = []
        for _, tick in self._ticks:
            total = 0.0
            for lid in link_ids:
                c = tick.get(lid)
                if c is None:
                    c = fixed.get(lid, math.inf)
                total += c
            series.append(total)
        return series

    def copy(self) -> CostHistory:
        other = CostHistory(self.capacity)
        other._ticks = deque(((ts, dict(t)) for ts, t in self._ticks), maxlen=self.capacity)
        return other


@dataclass(frozen=True)
class WeightingReport:
    missing: tuple[str, ...] = ()
    unusable: tuple[str, ...] = ()


def weight_graph(g, spec: MetricSpec, snapshot: Mapping[str, Any], strict: bool = True):
    """Weight every telemetered link of ``g`` with ``evaluate_metric``.

    Pseudo and split-internal links keep their fixed costs. Links flagged
    ``usable=False`` get +inf. Returns ``(weighted_graph, WeightingReport)``.
    """
    updates: dict[str, float] = {}
    missing: list[str] = []
    unusable: list[str] = []
    for lk in g.links:
        if lk.kind != "link":
            continue
        if not lk.usable:
            updates[lk.link_id] = math.inf
            unusable.append(lk.link_id)
            continue
        sample = snapshot.get(lk.link_id)
        if sample is None:
            if strict:
                raise MissingLinkSample(lk.link_id)
            updates[lk.link_id] = math.inf
            missing.append(lk.link_id)
            continue
        updates[lk.link_id] = evaluate_metric(spec, sample)
    return g.with_costs(updates), WeightingReport(tuple(missing), tuple(unusable))


def with_params(spec: MetricSpec, **params: float) -> MetricSpec:
    return replace(spec, params={**spec.params, **params})
