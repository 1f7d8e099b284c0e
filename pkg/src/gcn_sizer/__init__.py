"""Graph-aware reinforcement-learning engine for automatic transistor sizing."""

from .agent import (AgentConfig, BaselineTracker, NoiseProcess, ReplayBuffer, ReplayRecord,
                    SizingAgent, agent_from_checkpoint, read_checkpoint, run_search,
                    save_checkpoint, transfer_run, write_checkpoint)
from .backends import (AdapterConfig, AnalyticalAmpModel, ExternalSimulator, SimulatorBackend,
                       Stage, SyntheticBenchmark, export_netlist, parse_design_netlist)
from .baselines import EsConfig, es_optimize, random_search
from .circuit import (CircuitTopology, Component, ComponentKind, adjacency_matrix,
                      parse_netlist)
from .errors import (CalibrationError, CheckpointError, ConfigError, EvaluationError,
                     GcnSizerError, NetlistError)
from .fom import (FomConfig, HardSpec, MetricSpec, apply_normalizers, calibrate_normalizers,
                  compute_fom, load_fom_config, save_fom_config)
from .params import (DesignPoint, ParamSpec, action_mask, action_to_design, denormalize,
                     normalized_coordinates, random_raw_actions, refine)
from .pipeline import Evaluation, SearchResult, SearchTrace, SizingPipeline, design_hash
from .technology import (DeviceModelFeatures, EncodingMode, StateMatrix, TechnologyNode,
                         encode_state, load_technology)

__version__ = "0.1.0"
