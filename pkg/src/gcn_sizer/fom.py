"""Figure-of-merit computation and normalizer calibration.

FoM is a weighted sum of normalized metrics: for each metric,
w * (min(m, m_bound) - m_min) / (m_max - m_min), with the bound skipped when
absent. If any hard spec fails, the FoM is the (negative) violation penalty.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .circuit import CircuitTopology
from .errors import CalibrationError, ConfigError, EvaluationError
from .params import action_to_design, random_raw_actions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricSpec:
    name: str
    weight: float
    m_min: float = 0.0
    m_max: float = 1.0
    m_bound: float | None = None

    def __post_init__(self):
        if not self.m_max > self.m_min:
            raise ConfigError(f"metric '{self.name}': m_max must exceed m_min")
        if self.m_bound is not None and self.m_bound < self.m_min:
            raise ConfigError(f"metric '{self.name}': m_bound below m_min")


@dataclass(frozen=True)
class HardSpec:
    metric: str
    relation: str  # ">=" | "<="
    threshold: float

    def __post_init__(self):
        if self.relation not in (">=", "<="):
            raise ConfigError(f"spec on '{self.metric}': relation must be '>=' or '<='")

    def satisfied(self, value: float) -> bool:
        return value >= self.threshold if self.relation == ">=" else value <= self.threshold


@dataclass(frozen=True)
class FomConfig:
    metrics: tuple[MetricSpec, ...]
    specs: tuple[HardSpec, ...] = ()
    violation_penalty: float = -1.0

    def __post_init__(self):
        if self.violation_penalty >= 0:
            raise ConfigError("violation_penalty must be negative")
        names = [m.name for m in self.metrics]
        if len(set(names)) != len(names):
            raise ConfigError("metric names must be unique")
        for spec in self.specs:
            if spec.metric not in names:
                raise ConfigError(f"hard spec references unknown metric '{spec.metric}'")

    def metric(self, name: str) -> MetricSpec:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)


def compute_fom(measured: dict[str, float], config: FomConfig) -> float:
    """Weighted normalized sum, or the violation penalty if a hard spec fails."""
    for m in config.metrics:
        if m.name not in measured:
            raise ConfigError(f"measured metrics miss '{m.name}'")
        if not math.isfinite(measured[m.name]):
            raise EvaluationError(f"metric '{m.name}' is not finite: {measured[m.name]!r}")
    for spec in config.specs:
        if not spec.satisfied(measured[spec.metric]):
            return config.violation_penalty
    total = 0.0
    for m in config.metrics:
        value = measured[m.name]
        if m.m_bound is not None:
            value = min(value, m.m_bound)
        total += m.weight * (value - m.m_min) / (m.m_max - m.m_min)
    return total


def calibrate_normalizers(
    backend,
    topology: CircuitTopology,
    tech,
    sample_count: int,
    rng_seed: int,
) -> dict[str, tuple[float, float]]:
    """Min/max of each backend metric over uniformly random refined designs.

    Deterministic for a fixed seed. Fails when more than half of the samples
    cannot be evaluated or when a metric range is degenerate.
    """
    if sample_count < 2:
        raise ConfigError("sample_count must be at least 2")
    rng = np.random.default_rng(rng_seed)
    lo: dict[str, float] = {}
    hi: dict[str, float] = {}
    failures = 0
    for _ in range(sample_count):
        raw = random_raw_actions(topology, rng)
        design = action_to_design(raw, topology, tech)
        try:
            metrics = backend.evaluate(topology, design)
        except EvaluationError:
            failures += 1
            continue
        for name, value in metrics.items():
            lo[name] = value if name not in lo else min(lo[name], value)
            hi[name] = value if name not in hi else max(hi[name], value)
    if failures * 2 > sample_count:
        raise CalibrationError(f"{failures}/{sample_count} sample evaluations failed")
    ranges = {}
    for name in lo:
        if not (hi[name] > lo[name]):
            raise CalibrationError(f"metric '{name}' has degenerate range {lo[name]!r}")
        ranges[name] = (lo[name], hi[name])
    return ranges


def apply_normalizers(config: FomConfig, ranges: dict[str, tuple[float, float]]) -> FomConfig:
    """Copy of the config with calibrated m_min/m_max for every known metric."""
    metrics = []
    for m in config.metrics:
        if m.name not in ranges:
            raise ConfigError(f"calibration produced no range for metric '{m.name}'")
        m_min, m_max = ranges[m.name]
        metrics.append(replace(m, m_min=m_min, m_max=m_max))
    return replace(config, metrics=tuple(metrics))


def load_fom_config(path: str | Path) -> FomConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"fom config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"fom config {path}: expected a mapping")
    return fom_config_from_dict(doc)


def fom_config_from_dict(doc: dict) -> FomConfig:
    metrics = []
    for entry in doc.get("metrics", []):
        try:
            metrics.append(
                MetricSpec(
                    name=str(entry["name"]),
                    weight=float(entry["weight"]),
                    m_min=float(entry.get("m_min", 0.0)),
                    m_max=float(entry.get("m_max", 1.0)),
                    m_bound=None if entry.get("m_bound") is None else float(entry["m_bound"]),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"metric block misses {exc}") from None
    specs = tuple(
        HardSpec(metric=str(e["metric"]), relation=str(e["relation"]), threshold=float(e["threshold"]))
        for e in doc.get("specs", []) or []
    )
    if not metrics:
        raise ConfigError("fom config needs at least one metric")
    return FomConfig(
        metrics=tuple(metrics),
        specs=specs,
        violation_penalty=float(doc.get("violation_penalty", -1.0)),
    )


def fom_config_to_dict(config: FomConfig) -> dict:
    return {
        "metrics": [
            {
                "name": m.name,
                "weight": m.weight,
                "m_min": m.m_min,
                "m_max": m.m_max,
                **({"m_bound": m.m_bound} if m.m_bound is not None else {}),
            }
            for m in config.metrics
        ],
        "specs": [
            {"metric": s.metric, "relation": s.relation, "threshold": s.threshold}
            for s in config.specs
        ],
        "violation_penalty": config.violation_penalty,
    }


def save_fom_config(config: FomConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(fom_config_to_dict(config), sort_keys=False))
