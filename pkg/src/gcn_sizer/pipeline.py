"""Shared refine -> evaluate -> FoM pipeline and search traces.

Every optimizer (RL agents, evolutionary strategy, random search) proposes
raw actions in [-1, 1] and funnels them through the same pipeline, so the
algorithms differ only in how proposals are generated.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import CircuitTopology
from .errors import ConfigError, EvaluationError
from .fom import FomConfig, compute_fom
from .params import DesignPoint, action_to_design
from .technology import TechnologyNode


def design_hash(design: DesignPoint, topology: CircuitTopology) -> str:
    payload = json.dumps(design.as_dict(topology), sort_keys=True)
    return hashlib.sha1(payload.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Evaluation:
    """Outcome of one pipeline pass for a single raw action matrix."""

    raw: np.ndarray
    design: DesignPoint
    metrics: dict[str, float] | None
    fom: float

    @property
    def failed(self) -> bool:
        return self.metrics is None


class SizingPipeline:
    """Binds topology, technology, backend and FoM config into one evaluator."""

    def __init__(self, topology: CircuitTopology, tech: TechnologyNode,
                 backend, fom_config: FomConfig):
        self.topology = topology
        self.tech = tech
        self.backend = backend
        self.fom_config = fom_config
        self.eval_count = 0

    def evaluate_raw(self, raw: np.ndarray) -> Evaluation:
        design = action_to_design(raw, self.topology, self.tech)
        self.eval_count += 1
        try:
            metrics = self.backend.evaluate(self.topology, design)
        except EvaluationError:
            # failed simulations count as spec violations so optimizers
            # learn to avoid the broken region
            return Evaluation(raw=raw, design=design, metrics=None,
                              fom=self.fom_config.violation_penalty)
        return Evaluation(raw=raw, design=design, metrics=metrics,
                          fom=compute_fom(metrics, self.fom_config))

    def hash(self, design: DesignPoint) -> str:
        return design_hash(design, self.topology)


@dataclass
class TracePoint:
    step: int
    fom: float
    best_fom: float
    design_hash: str


TRACE_HEADER = ("step", "fom", "best_fom", "design_hash")


class SearchTrace:
    """Per-step FoM log with a non-decreasing best-so-far column."""

    def __init__(self):
        self.points: list[TracePoint] = []

    def record(self, step: int, fom: float, digest: str) -> None:
        best = fom if not self.points else max(fom, self.points[-1].best_fom)
        self.points.append(TracePoint(step=step, fom=fom, best_fom=best, design_hash=digest))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def best_fom(self) -> float:
        return self.points[-1].best_fom if self.points else -math.inf

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            for p in self.points:
                writer.writerow([p.step, repr(p.fom), repr(p.best_fom), p.design_hash])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SearchTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != TRACE_HEADER:
                raise ConfigError(f"{path}: not a trace file (header {header})")
            for row in reader:
                if len(row) != 4:
                    raise ConfigError(f"{path}: malformed trace row {row}")
                trace.points.append(TracePoint(int(row[0]), float(row[1]), float(row[2]), row[3]))
        if not trace.points:
            raise ConfigError(f"{path}: trace has no data rows")
        return trace


@dataclass
class SearchResult:
    """Best design found by a search plus its full trace."""

    best_design: DesignPoint | None
    best_fom: float
    trace: SearchTrace
    extras: dict = field(default_factory=dict)
