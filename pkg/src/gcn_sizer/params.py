"""Mapping raw agent actions in [-1, 1] to legal device parameters.

Refinement order is fixed: matching first (group members take the values of
the lowest-id member), then rounding to the precision grid anchored at the
lower bound, then clamping to [lower, upper].
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .circuit import MAX_ARITY, CircuitTopology
from .errors import ConfigError

if TYPE_CHECKING:
    from .technology import TechnologyNode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParamSpec:
    """Bounds, grid step and scale for one searchable parameter."""

    name: str
    lower: float
    upper: float
    precision: float
    scale: str = "linear"  # "linear" | "log"

    def __post_init__(self):
        if self.name not in ("W", "L", "M", "r", "c"):
            raise ConfigError(f"unknown parameter name '{self.name}'")
        if not self.lower < self.upper:
            raise ConfigError(f"{self.name}: lower must be < upper")
        if self.precision <= 0:
            raise ConfigError(f"{self.name}: precision must be positive")
        if self.scale not in ("linear", "log"):
            raise ConfigError(f"{self.name}: scale must be 'linear' or 'log'")
        if self.scale == "log" and self.lower <= 0:
            raise ConfigError(f"{self.name}: log scale needs lower > 0")


@dataclass(frozen=True)
class DesignPoint:
    """Per-component parameter values, ordered like the topology components."""

    values: tuple[tuple[float, ...], ...]

    def as_dict(self, topology: CircuitTopology) -> dict[str, dict[str, float]]:
        out = {}
        for comp, vals in zip(topology.components, self.values):
            out[comp.name] = dict(zip(comp.kind.param_names, vals))
        return out

    @classmethod
    def from_dict(cls, doc: dict, topology: CircuitTopology) -> "DesignPoint":
        values = []
        for comp in topology.components:
            try:
                entry = doc[comp.name]
                values.append(tuple(float(entry[p]) for p in comp.kind.param_names))
            except KeyError as exc:
                raise ConfigError(f"design document misses {comp.name}/{exc}") from None
        return cls(values=tuple(values))

    def to_json(self, topology: CircuitTopology) -> str:
        return json.dumps(self.as_dict(topology), indent=2, sort_keys=True)


def denormalize(raw: float, spec: ParamSpec) -> float:
    """Map raw in [-1, 1] onto [lower, upper]; log scale interpolates in log space."""
    if raw < -1.0 or raw > 1.0:
        logger.warning("raw action %.6g outside [-1, 1]; clamping", raw)
        raw = min(1.0, max(-1.0, raw))
    t = (raw + 1.0) / 2.0
    if t == 0.0:  # exact endpoints, immune to exp/log round-off
        return spec.lower
    if t == 1.0:
        return spec.upper
    if spec.scale == "log":
        return math.exp(math.log(spec.lower) + t * (math.log(spec.upper) - math.log(spec.lower)))
    return spec.lower + t * (spec.upper - spec.lower)


def to_raw(value: float, spec: ParamSpec) -> float:
    """Inverse of denormalize (before grid rounding): parameter -> [-1, 1]."""
    if spec.scale == "log":
        t = (math.log(value) - math.log(spec.lower)) / (math.log(spec.upper) - math.log(spec.lower))
    else:
        t = (value - spec.lower) / (spec.upper - spec.lower)
    return 2.0 * t - 1.0


def _snap(value: float, spec: ParamSpec) -> float:
    k = np.round((value - spec.lower) / spec.precision)
    snapped = spec.lower + k * spec.precision
    return min(spec.upper, max(spec.lower, float(snapped)))


def refine(design: DesignPoint, topology: CircuitTopology, tech: "TechnologyNode") -> DesignPoint:
    """Enforce matching, snap to the precision grid, clamp to bounds."""
    values = [list(v) for v in design.values]
    for ids in topology.matching_groups().values():
        rep = min(ids)
        for cid in ids:
            values[cid] = list(values[rep])
    refined = []
    for comp, vals in zip(topology.components, values):
        specs = tech.kind_specs(comp.kind)
        refined.append(tuple(_snap(v, s) for v, s in zip(vals, specs)))
    return DesignPoint(values=tuple(refined))


def action_to_design(raw: np.ndarray, topology: CircuitTopology, tech: "TechnologyNode") -> DesignPoint:
    """Denormalize a raw (n, 3) action matrix per kind/parameter, then refine."""
    if raw.shape[0] != topology.n:
        raise ConfigError(f"action matrix has {raw.shape[0]} rows for {topology.n} components")
    values = []
    for comp in topology.components:
        specs = tech.kind_specs(comp.kind)
        values.append(tuple(denormalize(float(raw[comp.id, j]), s) for j, s in enumerate(specs)))
    return refine(DesignPoint(values=tuple(values)), topology, tech)


def normalized_coordinates(design: DesignPoint, topology: CircuitTopology, tech: "TechnologyNode") -> np.ndarray:
    """Design mapped back into [-1, 1], padded to (n, 3) with zeros."""
    out = np.zeros((topology.n, MAX_ARITY))
    for comp, vals in zip(topology.components, design.values):
        specs = tech.kind_specs(comp.kind)
        for j, (v, s) in enumerate(zip(vals, specs)):
            out[comp.id, j] = to_raw(v, s)
    return out


def action_mask(topology: CircuitTopology) -> np.ndarray:
    """(n, 3) 0/1 mask of action entries that are meaningful per kind arity."""
    mask = np.zeros((topology.n, MAX_ARITY))
    for comp in topology.components:
        mask[comp.id, : comp.kind.action_arity] = 1.0
    return mask


def random_raw_actions(topology: CircuitTopology, rng: np.random.Generator) -> np.ndarray:
    """Uniform raw action matrix in [-1, 1], zero outside each row's arity."""
    return rng.uniform(-1.0, 1.0, size=(topology.n, MAX_ARITY)) * action_mask(topology)
