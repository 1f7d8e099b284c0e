"""Non-RL optimizers over the raw [-1, 1] action space.

Both baselines consume the exact refine -> evaluate -> FoM pipeline the
agents use; only proposal generation differs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GcnSizerError
from .params import action_mask, random_raw_actions
from .pipeline import SearchResult, SearchTrace, SizingPipeline

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EsConfig:
    """(mu, lambda) evolutionary strategy settings."""

    parents: int = 8
    offspring: int = 32
    mutation_std: float = 0.2
    elitism: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.parents <= self.offspring:
            raise ConfigError("need 1 <= parents <= offspring")
        if self.mutation_std < 0:
            raise ConfigError("mutation_std must be non-negative")


def random_search(pipeline: SizingPipeline, steps: int, seed: int) -> SearchResult:
    """Uniform random sampling; argmax FoM wins."""
    if steps < 1:
        raise ConfigError("random search needs at least one step")
    rng = np.random.default_rng(seed)
    trace = SearchTrace()
    best_fom = -np.inf
    best_design = None
    any_success = False
    for step in range(1, steps + 1):
        outcome = pipeline.evaluate_raw(random_raw_actions(pipeline.topology, rng))
        any_success = any_success or not outcome.failed
        if outcome.fom > best_fom:
            best_fom = outcome.fom
            best_design = outcome.design
        trace.record(step, outcome.fom, pipeline.hash(outcome.design))
    if not any_success:
        raise GcnSizerError("random search: every evaluation failed")
    return SearchResult(best_design=best_design, best_fom=best_fom, trace=trace)


def es_optimize(pipeline: SizingPipeline, steps: int, config: EsConfig) -> SearchResult:
    """(mu, lambda) evolutionary strategy with Gaussian mutation and elitism.

    The evaluation budget is `steps`; the last generation is truncated to
    fit it exactly.
    """
    if steps < config.offspring:
        raise ConfigError(f"budget {steps} is below one generation ({config.offspring} offspring)")
    rng = np.random.default_rng(config.seed)
    mask = action_mask(pipeline.topology)
    trace = SearchTrace()
    best_fom = -np.inf
    best_design = None
    incumbent: tuple[float, np.ndarray] | None = None   # (fom, raw)
    population: list[tuple[float, np.ndarray]] = []
    any_success = False
    step = 0

    def propose() -> np.ndarray:
        if not population:
            return random_raw_actions(pipeline.topology, rng)
        parent = population[rng.integers(len(population))][1]
        child = parent + rng.normal(0.0, config.mutation_std, size=parent.shape) * mask
        return np.clip(child, -1.0, 1.0)

    while step < steps:
        generation: list[tuple[float, np.ndarray]] = []
        for _ in range(min(config.offspring, steps - step)):
            raw = propose()
            outcome = pipeline.evaluate_raw(raw)
            step += 1
            any_success = any_success or not outcome.failed
            if outcome.fom > best_fom:
                best_fom = outcome.fom
                best_design = outcome.design
            if incumbent is None or outcome.fom > incumbent[0]:
                incumbent = (outcome.fom, raw)
            generation.append((outcome.fom, raw))
            trace.record(step, outcome.fom, pipeline.hash(outcome.design))
        pool = generation + ([incumbent] if config.elitism and incumbent is not None else [])
        pool.sort(key=lambda item: item[0], reverse=True)
        population = pool[: config.parents]
    if not any_success:
        raise GcnSizerError("evolutionary strategy: every evaluation failed")
    return SearchResult(best_design=best_design, best_fom=best_fom, trace=trace)
