"""Command-line front end: sizing runs, calibration, transfer, reporting.

Exit codes: 0 success, 1 configuration error, 2 backend/calibration error.
Set GCN_SIZER_LOG=DEBUG (or INFO/WARNING/...) for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .agent import AgentConfig, SizingAgent, agent_from_checkpoint, read_checkpoint, run_search, write_checkpoint
from .backends import AdapterConfig, AnalyticalAmpModel, ExternalSimulator, SyntheticBenchmark
from .baselines import EsConfig, es_optimize, random_search
from .circuit import CircuitTopology, parse_netlist
from .errors import (CalibrationError, CheckpointError, ConfigError, EvaluationError,
                     GcnSizerError, NetlistError)
from .fom import apply_normalizers, calibrate_normalizers, load_fom_config, save_fom_config
from .pipeline import SearchResult, SearchTrace, SizingPipeline
from .technology import EncodingMode, TechnologyNode, load_technology

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2

RL_ALGOS = ("gcn-rl", "ng-rl")
ALGOS = RL_ALGOS + ("es", "random")
RESERVED_ALGOS = ("bo", "mace")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are config errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _resolve_input(value: str) -> Path:
    """Resolve a path argument; builtin:<name> maps to bundled data files."""
    if value.startswith("builtin:"):
        name = value[len("builtin:"):]
        path = resources.files("gcn_sizer.data") / name
        if not path.is_file():
            raise ConfigError(f"no builtin data file '{name}'")
        return Path(str(path))
    path = Path(value)
    if not path.is_file():
        raise ConfigError(f"file not found: {value}")
    return path


@dataclass
class RunConfig:
    """Validated settings for one sizing or transfer run."""

    netlist: Path
    tech: Path
    fom: Path
    algo: str
    steps: int
    warmup: int
    seed: int
    out: Path
    backend: str
    adapter: Path | None
    encoding: EncodingMode

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        algo = getattr(args, "algo", "gcn-rl")
        if algo in RESERVED_ALGOS:
            raise ConfigError(f"algorithm '{algo}' is not implemented")
        if algo not in ALGOS:
            raise ConfigError(f"unknown algorithm '{algo}'")
        if args.steps < 1:
            raise ConfigError("--steps must be at least 1")
        if algo in RL_ALGOS and args.steps <= args.warmup:
            raise ConfigError(f"--steps ({args.steps}) must exceed --warmup ({args.warmup})")
        if args.backend not in ("analytical", "synthetic", "external"):
            raise ConfigError(f"unknown backend '{args.backend}'")
        adapter = None
        if args.backend == "external":
            if not args.adapter:
                raise ConfigError("--backend external needs --adapter <config file>")
            adapter = _resolve_input(args.adapter)
        return cls(
            netlist=_resolve_input(args.netlist),
            tech=_resolve_input(args.tech),
            fom=_resolve_input(args.fom),
            algo=algo,
            steps=args.steps,
            warmup=args.warmup,
            seed=args.seed,
            out=Path(args.out),
            backend=args.backend,
            adapter=adapter,
            encoding=EncodingMode(args.encoding),
        )

    def as_dict(self) -> dict:
        return {
            "netlist": str(self.netlist), "tech": str(self.tech), "fom": str(self.fom),
            "algo": self.algo, "steps": self.steps, "warmup": self.warmup,
            "seed": self.seed, "out": str(self.out), "backend": self.backend,
            "adapter": None if self.adapter is None else str(self.adapter),
            "encoding": self.encoding.value,
        }


def _build_pipeline(config: RunConfig) -> SizingPipeline:
    topology = parse_netlist(config.netlist.read_text(), name=config.netlist.stem)
    tech = load_technology(config.tech)
    fom_config = load_fom_config(config.fom)
    backend = _build_backend(config, topology, tech)
    return SizingPipeline(topology, tech, backend, fom_config)


def _build_backend(config: RunConfig, topology: CircuitTopology, tech: TechnologyNode):
    if config.backend == "analytical":
        return AnalyticalAmpModel.infer(topology)
    if config.backend == "synthetic":
        # fixed target seed: every algorithm compared on a topology faces the same optimum
        return SyntheticBenchmark.graph_quadratic(topology, tech)
    return ExternalSimulator(AdapterConfig.load(config.adapter), tech)


def _write_run_meta(config: RunConfig, extra: dict | None = None) -> Path:
    config.out.mkdir(parents=True, exist_ok=True)
    meta_path = config.out / "run_meta.json"
    doc = {"config": config.as_dict(), "status": "running"}
    if extra:
        doc.update(extra)
    meta_path.write_text(json.dumps(doc, indent=2))
    return meta_path


def _write_artifacts(config: RunConfig, pipeline: SizingPipeline, result: SearchResult,
                     agent: SizingAgent | None, meta_path: Path, started: float) -> None:
    result.trace.to_csv(config.out / "trace.csv")
    if result.best_design is not None:
        (config.out / "best_design.json").write_text(result.best_design.to_json(pipeline.topology))
    if agent is not None:
        write_checkpoint(agent, config.out / "checkpoint.json")
    doc = json.loads(meta_path.read_text())
    doc.update({
        "status": "done",
        "wall_time_s": time.monotonic() - started,
        "best_fom": result.best_fom,
        "evaluations": pipeline.eval_count,
    })
    meta_path.write_text(json.dumps(doc, indent=2))


def cmd_size(args) -> int:
    config = RunConfig.from_args(args)
    pipeline = _build_pipeline(config)
    meta_path = _write_run_meta(config)
    started = time.monotonic()
    agent = None
    if config.algo in RL_ALGOS:
        agent_config = AgentConfig(episodes=config.steps, warmup=config.warmup,
                                   ng_mode=config.algo == "ng-rl", seed=config.seed)
        agent = SizingAgent(pipeline.topology, pipeline.tech, agent_config,
                            encoding=config.encoding)
        result = run_search(agent, pipeline, config.steps, config.warmup)
    elif config.algo == "es":
        result = es_optimize(pipeline, config.steps, EsConfig(seed=config.seed))
    else:
        result = random_search(pipeline, config.steps, config.seed)
    _write_artifacts(config, pipeline, result, agent, meta_path, started)
    logger.info("best FoM %.6g after %d evaluations", result.best_fom, pipeline.eval_count)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = RunConfig.from_args(args)
    if args.samples < 2:
        raise ConfigError("--samples must be at least 2")
    pipeline = _build_pipeline(config)
    ranges = calibrate_normalizers(pipeline.backend, pipeline.topology, pipeline.tech,
                                   args.samples, config.seed)
    calibrated = apply_normalizers(pipeline.fom_config, ranges)
    config.out.mkdir(parents=True, exist_ok=True)
    out_path = config.out / "fom_calibrated.yaml"
    save_fom_config(calibrated, out_path)
    logger.info("wrote %s", out_path)
    return EXIT_OK


def cmd_transfer(args) -> int:
    config = RunConfig.from_args(args)
    checkpoint_path = _resolve_input(args.checkpoint)
    checkpoint = read_checkpoint(checkpoint_path)
    pipeline = _build_pipeline(config)
    agent_config = AgentConfig(episodes=config.steps, warmup=config.warmup, seed=config.seed)
    agent = agent_from_checkpoint(checkpoint, pipeline.topology, pipeline.tech,
                                  config=agent_config)
    meta_path = _write_run_meta(config)
    (config.out / "transfer_meta.json").write_text(json.dumps({
        "source_checkpoint": str(checkpoint_path),
        "encoding_mode": checkpoint["encoding_mode"],
        "budget": {"steps": config.steps, "warmup": config.warmup},
    }, indent=2))
    started = time.monotonic()
    result = run_search(agent, pipeline, config.steps, config.warmup)
    _write_artifacts(config, pipeline, result, agent, meta_path, started)
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces = []
    for path in args.traces:
        traces.append((Path(path).stem, SearchTrace.from_csv(_resolve_input(path))))
    length = max(len(t) for _, t in traces)
    rows = []
    for i in range(length):
        bests = [t.points[i].best_fom for _, t in traces if i < len(t)]
        rows.append([i + 1] + [
            repr(t.points[i].best_fom) if i < len(t) else "" for _, t in traces
        ] + [repr(max(bests))])
    report_path = out_dir / "report.csv"
    with open(report_path, "w") as fh:
        names = [name for name, _ in traces]
        fh.write(",".join(["step"] + [f"best_fom_{n}" for n in names] + ["max_best_fom"]) + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    for name, trace in traces:
        _plot_trace(trace, out_dir / f"{name}.svg", name)
    logger.info("wrote %s and %d svg plots", report_path, len(traces))
    return EXIT_OK


def _plot_trace(trace: SearchTrace, path: Path, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [p.step for p in trace.points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [p.fom for p in trace.points], lw=0.6, alpha=0.4, label="FoM")
    ax.plot(steps, [p.best_fom for p in trace.points], lw=1.5, label="best so far")
    ax.set_xlabel("step")
    ax.set_ylabel("FoM")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _add_run_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--netlist", required=True, help="netlist file (or builtin:<name>)")
    sub.add_argument("--tech", required=True, help="technology node file (or builtin:<name>)")
    sub.add_argument("--fom", required=True, help="FoM config file (or builtin:<name>)")
    sub.add_argument("--steps", type=int, default=10000)
    sub.add_argument("--warmup", type=int, default=100)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default="runs/out", help="output directory")
    sub.add_argument("--backend", default="analytical",
                     choices=("analytical", "synthetic", "external"))
    sub.add_argument("--adapter", help="adapter config for --backend external")
    sub.add_argument("--encoding", default="one-hot", choices=("one-hot", "scalar"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gcn-sizer", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    size = subs.add_parser("size", help="run one sizing experiment")
    _add_run_args(size)
    size.add_argument("--algo", default="gcn-rl", choices=ALGOS + RESERVED_ALGOS)
    size.set_defaults(func=cmd_size)

    cal = subs.add_parser("calibrate", help="calibrate FoM normalizers by random sampling")
    _add_run_args(cal)
    cal.add_argument("--samples", type=int, default=5000)
    cal.set_defaults(func=cmd_calibrate)

    trans = subs.add_parser("transfer", help="fine-tune a checkpointed agent")
    _add_run_args(trans)
    trans.add_argument("--checkpoint", required=True)
    trans.set_defaults(func=cmd_transfer, steps=300, warmup=100)

    report = subs.add_parser("report", help="merge traces into curves and SVG plots")
    report.add_argument("traces", nargs="+")
    report.add_argument("--out", default="runs/report")
    report.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("GCN_SIZER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NetlistError, CheckpointError) as exc:
        print(f"gcn-sizer: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvaluationError, CalibrationError) as exc:
        print(f"gcn-sizer: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except GcnSizerError as exc:
        print(f"gcn-sizer: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
