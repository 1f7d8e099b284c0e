"""Technology-node device data and per-component state encoding.

A technology file is a YAML document with a ``features`` block per MOS kind
(five model values: v_sat, v_th0, v_fb, mu0, u_c) and a ``params`` block with
bounds/precision/scale per (kind, parameter). Resistor and capacitor feature
vectors are always zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from .circuit import KIND_ORDER, CircuitTopology, ComponentKind
from .errors import ConfigError
from .params import ParamSpec

FEATURE_NAMES = ("v_sat", "v_th0", "v_fb", "mu0", "u_c")


@dataclass(frozen=True)
class DeviceModelFeatures:
    """Per-kind model feature vector used in the component state."""

    v_sat: float
    v_th0: float
    v_fb: float
    mu0: float
    u_c: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v_sat, self.v_th0, self.v_fb, self.mu0, self.u_c])

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ConfigError("device model features must be finite")


ZERO_FEATURES = DeviceModelFeatures(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class TechnologyNode:
    """Named process node: device features plus parameter specs per kind."""

    name: str
    features: dict[ComponentKind, DeviceModelFeatures]
    param_specs: dict[tuple[ComponentKind, str], ParamSpec]

    def __post_init__(self):
        for kind in KIND_ORDER:
            if kind not in self.features:
                raise ConfigError(f"{self.name}: missing features for kind '{kind.value}'")
            if not kind.is_mos and np.any(self.features[kind].as_array() != 0.0):
                raise ConfigError(f"{self.name}: {kind.value} features must be zero")
            for pname in kind.param_names:
                if (kind, pname) not in self.param_specs:
                    raise ConfigError(f"{self.name}: missing param spec {kind.value}/{pname}")
        nmos = self.features[ComponentKind.NMOS].as_array()
        pmos = self.features[ComponentKind.PMOS].as_array()
        if not np.any(nmos) and not np.any(pmos):
            raise ConfigError(f"{self.name}: NMOS and PMOS features are both all-zero")

    def kind_specs(self, kind: ComponentKind) -> tuple[ParamSpec, ...]:
        return tuple(self.param_specs[(kind, p)] for p in kind.param_names)


def load_technology(path: str | Path) -> TechnologyNode:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"technology file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"technology file {path}: expected a mapping")
    return technology_from_dict(doc)


def technology_from_dict(doc: dict) -> TechnologyNode:
    name = doc.get("name")
    if not name:
        raise ConfigError("technology document needs a 'name'")
    features: dict[ComponentKind, DeviceModelFeatures] = {
        ComponentKind.RESISTOR: ZERO_FEATURES,
        ComponentKind.CAPACITOR: ZERO_FEATURES,
    }
    feat_block = doc.get("features", {})
    for kind in (ComponentKind.NMOS, ComponentKind.PMOS):
        block = feat_block.get(kind.value)
        if block is None:
            raise ConfigError(f"{name}: missing features for '{kind.value}'")
        try:
            features[kind] = DeviceModelFeatures(**{k: float(block[k]) for k in FEATURE_NAMES})
        except KeyError as exc:
            raise ConfigError(f"{name}: features for {kind.value} miss {exc}") from None
    for kind in (ComponentKind.RESISTOR, ComponentKind.CAPACITOR):
        block = feat_block.get(kind.value)
        if block and any(float(v) != 0.0 for v in block.values()):
            raise ConfigError(f"{name}: {kind.value} features must be zero")

    specs: dict[tuple[ComponentKind, str], ParamSpec] = {}
    param_block = doc.get("params", {})
    for kind in KIND_ORDER:
        kblock = param_block.get(kind.value)
        if kblock is None:
            raise ConfigError(f"{name}: missing params block for '{kind.value}'")
        for pname in kind.param_names:
            entry = kblock.get(pname)
            if entry is None:
                raise ConfigError(f"{name}: missing param spec {kind.value}/{pname}")
            specs[(kind, pname)] = ParamSpec(
                name=pname,
                lower=float(entry["lower"]),
                upper=float(entry["upper"]),
                precision=float(entry["precision"]),
                scale=str(entry.get("scale", "linear")),
            )
    return TechnologyNode(name=str(name), features=features, param_specs=specs)


class EncodingMode(Enum):
    """How the component index enters the state vector."""

    ONE_HOT_INDEX = "one-hot"
    SCALAR_INDEX = "scalar"


@dataclass(frozen=True)
class StateMatrix:
    """Per-component state rows, column-standardized across components."""

    matrix: np.ndarray
    mode: EncodingMode

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def state_dim(n: int, mode: EncodingMode) -> int:
    index_dim = n if mode is EncodingMode.ONE_HOT_INDEX else 1
    return index_dim + len(KIND_ORDER) + len(FEATURE_NAMES)


def raw_state_rows(topology: CircuitTopology, tech: TechnologyNode, mode: EncodingMode) -> np.ndarray:
    """Pre-normalization rows: index encoding, kind one-hot, model features."""
    n = topology.n
    rows = np.zeros((n, state_dim(n, mode)))
    for comp in topology.components:
        col = 0
        if mode is EncodingMode.ONE_HOT_INDEX:
            rows[comp.id, comp.id] = 1.0
            col = n
        else:
            rows[comp.id, 0] = comp.id / (n - 1) if n > 1 else 0.0
            col = 1
        rows[comp.id, col + KIND_ORDER.index(comp.kind)] = 1.0
        rows[comp.id, col + len(KIND_ORDER):] = tech.features[comp.kind].as_array()
    return rows


def encode_state(topology: CircuitTopology, tech: TechnologyNode, mode: EncodingMode) -> StateMatrix:
    """Standardize each raw state column across components; constant columns become zero."""
    if topology.n < 1:
        raise ConfigError("cannot encode an empty topology")
    rows = raw_state_rows(topology, tech, mode)
    out = np.zeros_like(rows)
    for j in range(rows.shape[1]):
        col = rows[:, j]
        if col.max() == col.min():
            continue  # absent kinds, shared features: zero, not 0/0
        out[:, j] = (col - col.mean()) / col.std()
    return StateMatrix(matrix=out, mode=mode)
