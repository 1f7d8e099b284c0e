"""Design evaluators: analytical amplifier surrogate, synthetic benchmarks
with a known optimum, and an external-process adapter for real simulators.

The analytical model is a deliberately simple square-law surrogate. Per MOS:

    gm = k_gm * sqrt((W/L) * M)
    ro = k_ro * L / (W * M * 1e-6)
    I  = (W/L) * M * 1e-6

Components are partitioned into ordered stages, each driven by one MOS.
Stage gain is gm(driver) in parallel-loaded form, total gain the product
over stages; bandwidth comes from the output stage resistance against the
load capacitance (plus any capacitors attached to the output stage).
Capacitors attached to interior stages do not move any surrogate metric.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np
import yaml

from .circuit import CircuitTopology, ComponentKind, parse_netlist
from .errors import ConfigError, EvaluationError
from .params import DesignPoint, normalized_coordinates, random_raw_actions, action_to_design
from .technology import TechnologyNode

MICRON = 1e-6
FORMULA_VERSION = 1


class SimulatorBackend:
    """Evaluates a refined design into a metrics map. Deterministic backends
    must return bit-identical metrics for identical designs."""

    metric_names: tuple[str, ...] = ()

    def evaluate(self, topology: CircuitTopology, design: DesignPoint) -> dict[str, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class Stage:
    """Ordered component group; the driver is the stage's lowest-id MOS."""

    driver: str
    members: tuple[str, ...]


def _parallel(resistances: list[float]) -> float:
    return 1.0 / sum(1.0 / r for r in resistances)


@dataclass(frozen=True)
class AnalyticalAmpModel(SimulatorBackend):
    """Square-law amplifier surrogate standing in for a circuit simulator."""

    stages: tuple[Stage, ...]
    k_gm: float = 1e-3
    k_ro: float = 1e6
    v_dd: float = 1.8
    c_load: float = 1e-12
    k_noise: float = 1e-9
    formula_version: int = FORMULA_VERSION
    metric_names: tuple[str, ...] = field(default=("BW", "Gain", "Power", "Noise", "GBW"), init=False)

    def __post_init__(self):
        for name, value in (("k_gm", self.k_gm), ("k_ro", self.k_ro), ("v_dd", self.v_dd),
                            ("c_load", self.c_load), ("k_noise", self.k_noise)):
            if value <= 0:
                raise ConfigError(f"analytical constant {name} must be positive")
        if not self.stages:
            raise ConfigError("analytical model needs at least one stage")
        for stage in self.stages:
            if not stage.members:
                raise ConfigError("empty stage")
            if stage.driver not in stage.members:
                raise ConfigError(f"driver {stage.driver} not in its stage")

    @classmethod
    def infer(cls, topology: CircuitTopology, **constants) -> "AnalyticalAmpModel":
        """Derive stages from the topology: one per MOS matching group or
        ungrouped MOS (ordered by lowest member id); R/C components attach to
        the neighbouring MOS stage with the largest lowest-id, falling back
        to the output stage."""
        cores: list[list[int]] = []
        grouped: dict[str, list[int]] = {}
        for comp in topology.components:
            if not comp.kind.is_mos:
                continue
            if comp.matching_group is not None:
                grouped.setdefault(comp.matching_group, []).append(comp.id)
            else:
                cores.append([comp.id])
        cores.extend(grouped.values())
        if not cores:
            raise ConfigError(f"topology '{topology.name}' has no MOS component to form a stage")
        cores.sort(key=min)
        stage_of = {cid: k for k, core in enumerate(cores) for cid in core}
        members: list[list[int]] = [list(core) for core in cores]
        for comp in topology.components:
            if comp.kind.is_mos:
                continue
            neighbour_stages = [stage_of[nb] for nb in topology.neighbours(comp.id) if nb in stage_of]
            target = max(neighbour_stages) if neighbour_stages else len(cores) - 1
            members[target].append(comp.id)
        names = [c.name for c in topology.components]
        stages = tuple(
            Stage(driver=names[min(core)], members=tuple(names[i] for i in sorted(ms)))
            for core, ms in zip(cores, members)
        )
        return cls(stages=stages, **constants)

    def _validate(self, topology: CircuitTopology) -> dict[str, int]:
        ids = {c.name: c.id for c in topology.components}
        assigned: set[str] = set()
        for stage in self.stages:
            for name in stage.members:
                if name not in ids:
                    raise ConfigError(f"stage member '{name}' not in topology '{topology.name}'")
                if name in assigned:
                    raise ConfigError(f"component '{name}' assigned to two stages")
                assigned.add(name)
            if not topology.components[ids[stage.driver]].kind.is_mos:
                raise ConfigError(f"stage driver '{stage.driver}' is not a MOS device")
        missing = set(ids) - assigned
        if missing:
            raise ConfigError(f"components not assigned to any stage: {sorted(missing)}")
        return ids

    def evaluate(self, topology: CircuitTopology, design: DesignPoint) -> dict[str, float]:
        ids = self._validate(topology)
        gm: dict[str, float] = {}
        ro: dict[str, float] = {}
        current: dict[str, float] = {}
        for comp, vals in zip(topology.components, design.values):
            if comp.kind.is_mos:
                w, l, m = vals
                gm[comp.name] = self.k_gm * math.sqrt((w / l) * m)
                ro[comp.name] = self.k_ro * l / (w * m * MICRON)
                current[comp.name] = (w / l) * m * MICRON
        gain = 1.0
        r_out = math.nan
        c_out = 0.0
        for stage in self.stages:
            loads = [ro[stage.driver]]
            for name in stage.members:
                comp = topology.components[ids[name]]
                if comp.kind.is_mos and name != stage.driver:
                    loads.append(ro[name])
                elif comp.kind is ComponentKind.RESISTOR:
                    loads.append(design.values[comp.id][0])
            r_stage = _parallel(loads)
            gain *= gm[stage.driver] * r_stage
            r_out = r_stage
            c_out = sum(
                design.values[ids[name]][0]
                for name in stage.members
                if topology.components[ids[name]].kind is ComponentKind.CAPACITOR
            )
        bw = 1.0 / (2.0 * math.pi * r_out * (self.c_load + c_out))
        power = self.v_dd * sum(current.values())
        noise = self.k_noise * math.sqrt(sum(1.0 / g for g in gm.values()))
        return {"BW": bw, "Gain": gain, "Power": power, "Noise": noise, "GBW": gain * bw}


@dataclass(frozen=True)
class SyntheticBenchmark(SimulatorBackend):
    """Concave score surface with a known on-grid optimum.

    Score(x) = -sum_k |x_k - x*_k|^2 - coupling * sum_(i,j) in E
               |(x_i - x_j) - (x*_i - x*_j)|^2
    over normalized [-1, 1] coordinates padded to three columns per
    component. coupling = 0 is the Sphere case. The maximum is 0, attained
    exactly at the target design; the technology node is bound in because
    scores live in its normalized coordinate system.
    """

    target: DesignPoint
    tech: TechnologyNode
    coupling: float = 0.5
    metric_names: tuple[str, ...] = field(default=("Score",), init=False)

    @property
    def kind(self) -> str:
        return "sphere" if self.coupling == 0.0 else "graph-quadratic"

    @classmethod
    def graph_quadratic(cls, topology: CircuitTopology, tech: TechnologyNode,
                        coupling: float = 0.5, target_seed: int = 0) -> "SyntheticBenchmark":
        rng = np.random.default_rng(target_seed)
        target = action_to_design(random_raw_actions(topology, rng), topology, tech)
        return cls(target=target, tech=tech, coupling=coupling)

    @classmethod
    def sphere(cls, topology: CircuitTopology, tech: TechnologyNode,
               target_seed: int = 0) -> "SyntheticBenchmark":
        return cls.graph_quadratic(topology, tech, coupling=0.0, target_seed=target_seed)

    def evaluate(self, topology: CircuitTopology, design: DesignPoint) -> dict[str, float]:
        x = normalized_coordinates(design, topology, self.tech)
        t = normalized_coordinates(self.target, topology, self.tech)
        diff = x - t
        score = -float(np.sum(diff * diff))
        for i, j in topology.edges:
            rel = diff[i] - diff[j]
            score -= self.coupling * float(np.dot(rel, rel))
        return {"Score": score}


def engineering_notation(value: float) -> str:
    """Shortest-round-trip decimal string with an exponent that is a
    multiple of three. Rewrites repr() digits, so float(result) == value."""
    if value == 0.0:
        return "0"
    d = Decimal(repr(float(value)))
    sign, digits, exp = d.as_tuple()
    digit_str = "".join(str(x) for x in digits)
    first_exp = exp + len(digit_str) - 1  # exponent of the leading digit
    e3 = 3 * math.floor(first_exp / 3)
    int_len = first_exp - e3 + 1
    digit_str = digit_str.ljust(int_len, "0")
    mantissa = digit_str[:int_len]
    frac = digit_str[int_len:]
    out = ("-" if sign else "") + mantissa + (f".{frac}" if frac else "")
    return out if e3 == 0 else f"{out}e{e3}"


def export_netlist(topology: CircuitTopology, design: DesignPoint, tech: TechnologyNode) -> str:
    """Netlist text with `param` lines carrying the design values.

    Lengths (W, L) are in meters, r in ohm, c in farad, all in engineering
    notation; M is a bare multiplier count. Parsing the output back yields
    the same topology and design.
    """
    lines = [f"# {topology.name} sized for {tech.name}"]
    for net in sorted(topology.global_nets):
        lines.append(f".global {net}")
    for comp in topology.components:
        line = f"{comp.name} {comp.kind.value} {' '.join(comp.nets)}"
        if comp.matching_group is not None:
            line += f" group={comp.matching_group}"
        lines.append(line)
    for comp, vals in zip(topology.components, design.values):
        parts = []
        for pname, v in zip(comp.kind.param_names, vals):
            parts.append(f"{pname}={repr(v) if pname == 'M' else engineering_notation(v)}")
        lines.append(f"param {comp.name} {' '.join(parts)}")
    return "\n".join(lines) + "\n"


def parse_design_netlist(text: str, name: str = "netlist") -> tuple[CircuitTopology, DesignPoint]:
    """Parse an exported netlist back into its topology and design."""
    topology = parse_netlist(text, name=name)
    params: dict[str, dict[str, float]] = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line or not line.startswith("param "):
            continue
        tokens = line.split()
        if len(tokens) < 3:
            raise ConfigError(f"line {line_no}: malformed param line")
        entry = {}
        for tok in tokens[2:]:
            if "=" not in tok:
                raise ConfigError(f"line {line_no}: malformed param token '{tok}'")
            key, _, val = tok.partition("=")
            try:
                entry[key] = float(val)
            except ValueError:
                raise ConfigError(f"line {line_no}: bad value '{val}'") from None
        params[tokens[1]] = entry
    return topology, DesignPoint.from_dict(params, topology)


@dataclass(frozen=True)
class AdapterConfig:
    """External simulator invocation: a command template with {netlist} and
    {out} placeholders and a timeout."""

    command: str
    timeout_s: float = 60.0
    metrics: tuple[str, ...] = ()

    @classmethod
    def load(cls, path: str | Path) -> "AdapterConfig":
        doc = yaml.safe_load(Path(path).read_text())
        if not isinstance(doc, dict) or "command" not in doc:
            raise ConfigError(f"adapter config {path}: needs a 'command' entry")
        return cls(
            command=str(doc["command"]),
            timeout_s=float(doc.get("timeout_s", 60.0)),
            metrics=tuple(doc.get("metrics", []) or []),
        )


class ExternalSimulator(SimulatorBackend):
    """Runs an external command per evaluation and parses its metrics file.

    Each call gets a fresh working directory holding the exported netlist
    and a design.json; the command must write `metric value` lines to the
    {out} path.
    """

    def __init__(self, config: AdapterConfig, tech: TechnologyNode):
        self.config = config
        self.tech = tech
        self.metric_names = config.metrics

    def evaluate(self, topology: CircuitTopology, design: DesignPoint) -> dict[str, float]:
        with tempfile.TemporaryDirectory(prefix="gcn_sizer_sim_") as workdir:
            netlist_path = Path(workdir) / "circuit.net"
            out_path = Path(workdir) / "metrics.txt"
            netlist_path.write_text(export_netlist(topology, design, self.tech))
            (Path(workdir) / "design.json").write_text(design.to_json(topology))
            argv = [
                tok.format(netlist=str(netlist_path), out=str(out_path))
                for tok in shlex.split(self.config.command)
            ]
            try:
                proc = subprocess.run(
                    argv, cwd=workdir, capture_output=True, text=True,
                    timeout=self.config.timeout_s,
                )
            except subprocess.TimeoutExpired as exc:
                raise EvaluationError(f"simulator timed out after {self.config.timeout_s}s") from exc
            except OSError as exc:
                raise EvaluationError(f"cannot run simulator: {exc}") from exc
            if proc.returncode != 0:
                raise EvaluationError(
                    f"simulator exited {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            if not out_path.exists():
                raise EvaluationError(f"simulator produced no metrics file {out_path.name}")
            metrics = _parse_metrics_file(out_path)
        for name in self.config.metrics:
            if name not in metrics:
                raise EvaluationError(f"metrics file misses advertised metric '{name}'")
        return metrics


def _parse_metrics_file(path: Path) -> dict[str, float]:
    metrics: dict[str, float] = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EvaluationError(f"metrics file line {line_no}: expected 'name value'")
        try:
            metrics[parts[0]] = float(parts[1])
        except ValueError:
            raise EvaluationError(f"metrics file line {line_no}: bad float '{parts[1]}'") from None
    if not metrics:
        raise EvaluationError("metrics file is empty")
    return metrics
