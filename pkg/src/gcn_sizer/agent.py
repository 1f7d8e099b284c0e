"""Graph actor-critic sizing agent with a one-step off-policy training loop.

One episode is one design evaluation: select an action matrix (uniform
random during warm-up, policy plus truncated decaying noise afterwards),
refine and evaluate it, store (state, raw action, reward) in the replay
buffer, then take one critic step regressing reward-minus-baseline and one
actor step ascending the critic. There is no next state and no discount;
the critic models the evaluator directly.

The non-graph ablation (ng_mode) replaces the normalized adjacency with the
identity matrix and shares every other code path.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .circuit import KIND_ORDER, MAX_ARITY, CircuitTopology, ComponentKind, adjacency_matrix
from .errors import AutodiffError, CheckpointError, ConfigError
from .nn import (Adam, DenseLayer, GcnLayer, Tensor, add, concat, gather_rows,
                 matmul, mean_all, mean_last, mul, normalize_adjacency, place_rows,
                 relu, scale, slice_cols, squeeze_last, sub, tanh)
from .params import action_mask, random_raw_actions
from .pipeline import SearchResult, SearchTrace, SizingPipeline
from .technology import EncodingMode, TechnologyNode, encode_state, state_dim

logger = logging.getLogger(__name__)

GRAPH_LAYER_COUNT = 7
CHECKPOINT_VERSION = 1


@dataclass
class AgentConfig:
    """Hyperparameters of the sizing agent; defaults match the shipped runs."""

    hidden_dim: int = 64
    action_hidden_dim: int = 64
    episodes: int = 10000
    warmup: int = 100
    batch_size: int = 64
    ng_mode: bool = False
    seed: int = 0
    noise_initial_std: float = 0.5
    noise_decay: float = 0.999
    noise_truncation_sigmas: float = 2.0
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    replay_capacity: int = 5000
    baseline_beta: float = 0.95

    def validate(self) -> None:
        if self.warmup >= self.episodes:
            raise ConfigError(f"warm-up ({self.warmup}) must be below episodes ({self.episodes})")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.noise_initial_std <= 0 or not (0 < self.noise_decay <= 1):
            raise ConfigError("noise std must be positive and decay in (0, 1]")
        if self.replay_capacity < 1:
            raise ConfigError("replay_capacity must be at least 1")


@dataclass
class NoiseProcess:
    """Truncated Gaussian exploration noise with exponentially decaying std."""

    initial_std: float = 0.5
    decay: float = 0.999
    truncation_sigmas: float = 2.0
    episodes_elapsed: int = 0

    @property
    def std(self) -> float:
        # computed from the episode count, not accumulated, so the
        # initial*decay^e invariant holds to the last bit
        return self.initial_std * self.decay ** self.episodes_elapsed

    @property
    def truncation(self) -> float:
        """Half-width of the support around the mean, in action units."""
        return self.truncation_sigmas * self.std

    def sample(self, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
        std = self.std
        bound = self.truncation
        out = rng.normal(0.0, std, size=shape)
        bad = np.abs(out) > bound
        while np.any(bad):
            out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
            bad = np.abs(out) > bound
        return out

    def advance(self) -> None:
        self.episodes_elapsed += 1


@dataclass
class BaselineTracker:
    """Exponential moving average of observed rewards."""

    beta: float = 0.95
    value: float | None = None

    def update(self, reward: float) -> float:
        self.value = reward if self.value is None else self.beta * self.value + (1.0 - self.beta) * reward
        return self.value


@dataclass(frozen=True)
class ReplayRecord:
    """One stored transition: state matrix, raw action matrix, reward."""

    state: np.ndarray
    action: np.ndarray
    reward: float

    def __post_init__(self):
        if self.state.shape[0] != self.action.shape[0]:
            raise ConfigError("state and action row counts differ")


class ReplayBuffer:
    """Bounded FIFO store sampled uniformly without replacement."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._records: list[ReplayRecord] = []
        self._next = 0

    def store(self, record: ReplayRecord) -> None:
        if len(self._records) < self.capacity:
            self._records.append(record)
        else:
            self._records[self._next] = record
            self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._records)

    def sample(self, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = min(batch_size, len(self._records))
        idx = rng.choice(len(self._records), size=k, replace=False)
        states = np.stack([self._records[i].state for i in idx])
        actions = np.stack([self._records[i].action for i in idx])
        rewards = np.array([self._records[i].reward for i in idx])
        return states, actions, rewards


class ActorNetwork:
    """Shared input layer, stacked graph convolutions, per-kind tanh decoders."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.input_layer = DenseLayer(input_dim, hidden_dim, rng)
        self.graph_layers = [GcnLayer(hidden_dim, hidden_dim, rng) for _ in range(GRAPH_LAYER_COUNT)]
        self.decoders = {k: DenseLayer(hidden_dim, k.action_arity, rng) for k in KIND_ORDER}

    def forward(self, state: Tensor, prop: np.ndarray,
                kind_rows: dict[ComponentKind, np.ndarray]) -> Tensor:
        h = relu(self.input_layer(state))
        for layer in self.graph_layers:
            h = relu(layer(h, prop))
        n = state.shape[-2]
        out = None
        for kind in KIND_ORDER:
            idx = kind_rows.get(kind)
            if idx is None:
                continue
            block = tanh(self.decoders[kind](gather_rows(h, idx)))
            placed = place_rows(block, idx, n, 0, MAX_ARITY)
            out = placed if out is None else add(out, placed)
        return out

    @property
    def params(self) -> list[Tensor]:
        out = list(self.input_layer.params)
        for layer in self.graph_layers:
            out.extend(layer.params)
        for kind in KIND_ORDER:
            out.extend(self.decoders[kind].params)
        return out


class CriticNetwork:
    """Per-kind action encoders, shared trunk, mean-pooled scalar output."""

    def __init__(self, state_dim_: int, hidden_dim: int, action_hidden_dim: int,
                 rng: np.random.Generator):
        self.state_dim = state_dim_
        self.hidden_dim = hidden_dim
        self.action_hidden_dim = action_hidden_dim
        self.encoders = {k: DenseLayer(k.action_arity, action_hidden_dim, rng) for k in KIND_ORDER}
        self.input_layer = DenseLayer(state_dim_ + action_hidden_dim, hidden_dim, rng)
        self.graph_layers = [GcnLayer(hidden_dim, hidden_dim, rng) for _ in range(GRAPH_LAYER_COUNT)]
        self.output_layer = DenseLayer(hidden_dim, 1, rng)

    def forward(self, state: Tensor, actions: Tensor, prop: np.ndarray,
                kind_rows: dict[ComponentKind, np.ndarray]) -> Tensor:
        n = state.shape[-2]
        encoded = None
        for kind in KIND_ORDER:
            idx = kind_rows.get(kind)
            if idx is None:
                continue
            rows = slice_cols(gather_rows(actions, idx), 0, kind.action_arity)
            block = relu(self.encoders[kind](rows))
            placed = place_rows(block, idx, n, 0, self.action_hidden_dim)
            encoded = placed if encoded is None else add(encoded, placed)
        h = relu(self.input_layer(concat([state, encoded])))
        for layer in self.graph_layers:
            h = relu(layer(h, prop))
        per_node = self.output_layer(h)  # identity output activation
        return mean_last(squeeze_last(per_node))

    @property
    def params(self) -> list[Tensor]:
        out = []
        for kind in KIND_ORDER:
            out.extend(self.encoders[kind].params)
        out.extend(self.input_layer.params)
        for layer in self.graph_layers:
            out.extend(layer.params)
        out.extend(self.output_layer.params)
        return out


class SizingAgent:
    """Actor-critic agent bound to one topology and technology node."""

    def __init__(self, topology: CircuitTopology, tech: TechnologyNode,
                 config: AgentConfig, encoding: EncodingMode = EncodingMode.ONE_HOT_INDEX,
                 _weights: dict | None = None):
        config.validate()
        self.topology = topology
        self.tech = tech
        self.config = config
        self.encoding = encoding
        self.state = encode_state(topology, tech, encoding).matrix
        self.kind_rows = topology.kind_rows()
        self.mask = action_mask(topology)
        a = adjacency_matrix(topology)
        self.prop = np.eye(topology.n) if config.ng_mode else normalize_adjacency(a)

        seeds = np.random.SeedSequence(config.seed).spawn(4)
        rng_init = np.random.default_rng(seeds[0])
        self.rng_warmup = np.random.default_rng(seeds[1])
        self.rng_noise = np.random.default_rng(seeds[2])
        self.rng_buffer = np.random.default_rng(seeds[3])

        dim = self.state.shape[1]
        self.actor = ActorNetwork(dim, config.hidden_dim, rng_init)
        self.critic = CriticNetwork(dim, config.hidden_dim, config.action_hidden_dim, rng_init)
        if _weights is not None:
            _load_network(self.actor, _weights["actor"])
            _load_network(self.critic, _weights["critic"])
        self.actor_opt = Adam(self.actor.params, lr=config.actor_lr)
        self.critic_opt = Adam(self.critic.params, lr=config.critic_lr)
        self.noise = NoiseProcess(config.noise_initial_std, config.noise_decay,
                                  config.noise_truncation_sigmas)
        self.baseline = BaselineTracker(beta=config.baseline_beta)
        self.buffer = ReplayBuffer(config.replay_capacity)

    def act(self, explore: bool = False) -> np.ndarray:
        """Policy action for the bound state; optionally with clamped noise."""
        out = self.actor.forward(Tensor(self.state), self.prop, self.kind_rows).data.copy()
        if explore:
            out += self.noise.sample(out.shape, self.rng_noise) * self.mask
            np.clip(out, -1.0, 1.0, out=out)
        return out

    def warmup_action(self) -> np.ndarray:
        return random_raw_actions(self.topology, self.rng_warmup)

    def observe(self, raw_action: np.ndarray, reward: float) -> None:
        self.buffer.store(ReplayRecord(state=self.state, action=raw_action.copy(), reward=reward))

    def update(self) -> tuple[float, float]:
        """One critic regression step and one actor ascent step.

        Returns (critic loss, mean predicted value) for diagnostics.
        """
        states, actions, rewards = self.buffer.sample(self.config.batch_size, self.rng_buffer)
        baseline = self.baseline.value if self.baseline.value is not None else 0.0
        targets = rewards - baseline

        s = Tensor(states)
        q = self.critic.forward(s, Tensor(actions), self.prop, self.kind_rows)
        diff = sub(q, Tensor(targets))
        loss = mean_all(mul(diff, diff))
        if not np.isfinite(loss.data):
            raise AutodiffError(
                f"critic loss is not finite (loss={loss.data!r}, baseline={baseline!r}, "
                f"rewards range [{rewards.min()!r}, {rewards.max()!r}])"
            )
        self.critic_opt.zero_grad()
        loss.backward()
        self.critic_opt.step()

        policy = self.actor.forward(s, self.prop, self.kind_rows)
        value = mean_all(self.critic.forward(s, policy, self.prop, self.kind_rows))
        if not np.isfinite(value.data):
            raise AutodiffError(f"actor objective is not finite ({value.data!r})")
        actor_loss = scale(value, -1.0)
        self.actor_opt.zero_grad()
        actor_loss.backward()
        self.actor_opt.step()
        return float(loss.data), float(value.data)

    def finish_episode(self, reward: float) -> None:
        self.baseline.update(reward)
        self.noise.advance()


def run_search(agent: SizingAgent, pipeline: SizingPipeline, episodes: int,
               warmup: int) -> SearchResult:
    """Run the one-step training loop for a fixed episode budget."""
    trace = SearchTrace()
    best_fom = -np.inf
    best_design = None
    for episode in range(1, episodes + 1):
        if episode <= warmup:
            raw = agent.warmup_action()
        else:
            raw = agent.act(explore=True)
        outcome = pipeline.evaluate_raw(raw)
        agent.observe(raw, outcome.fom)
        if episode > warmup:
            agent.update()
        agent.finish_episode(outcome.fom)
        if outcome.fom > best_fom:
            best_fom = outcome.fom
            best_design = outcome.design
        trace.record(episode, outcome.fom, pipeline.hash(outcome.design))
    return SearchResult(best_design=best_design, best_fom=best_fom, trace=trace)


def transfer_run(checkpoint: dict, topology: CircuitTopology, tech: TechnologyNode,
                 pipeline: SizingPipeline, episodes: int = 300, warmup: int = 100,
                 config: AgentConfig | None = None) -> tuple[SearchResult, SizingAgent]:
    """Fine-tune a checkpointed agent on a new topology/technology.

    The loop is identical to fresh training, warm-up included; only the
    actor/critic weights start from the checkpoint.
    """
    agent = agent_from_checkpoint(checkpoint, topology, tech, config=config)
    result = run_search(agent, pipeline, episodes, warmup)
    return result, agent


# --- checkpointing ---------------------------------------------------------

def _dump_tensor(t: Tensor) -> dict:
    return {"shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}


def _load_tensor(t: Tensor, doc: dict) -> None:
    shape = tuple(doc["shape"])
    if shape != t.data.shape:
        raise CheckpointError(f"weight shape mismatch: checkpoint {shape}, network {t.data.shape}")
    t.data = np.asarray(doc["data"], dtype=np.float64).reshape(shape)


def _dump_network(net) -> dict:
    doc = {"input": [_dump_tensor(p) for p in net.input_layer.params],
           "graph": [[_dump_tensor(p) for p in layer.params] for layer in net.graph_layers]}
    if isinstance(net, ActorNetwork):
        doc["decoders"] = {k.value: [_dump_tensor(p) for p in net.decoders[k].params]
                           for k in KIND_ORDER}
    else:
        doc["encoders"] = {k.value: [_dump_tensor(p) for p in net.encoders[k].params]
                           for k in KIND_ORDER}
        doc["output"] = [_dump_tensor(p) for p in net.output_layer.params]
    return doc


def _load_network(net, doc: dict) -> None:
    for p, entry in zip(net.input_layer.params, doc["input"]):
        _load_tensor(p, entry)
    for layer, entries in zip(net.graph_layers, doc["graph"]):
        for p, entry in zip(layer.params, entries):
            _load_tensor(p, entry)
    if isinstance(net, ActorNetwork):
        for k in KIND_ORDER:
            for p, entry in zip(net.decoders[k].params, doc["decoders"][k.value]):
                _load_tensor(p, entry)
    else:
        for k in KIND_ORDER:
            for p, entry in zip(net.encoders[k].params, doc["encoders"][k.value]):
                _load_tensor(p, entry)
        for p, entry in zip(net.output_layer.params, doc["output"]):
            _load_tensor(p, entry)


def save_checkpoint(agent: SizingAgent) -> dict:
    """Portable snapshot of the agent: encoding mode, dims, all weights."""
    return {
        "version": CHECKPOINT_VERSION,
        "encoding_mode": agent.encoding.value,
        "kinds": [k.value for k in KIND_ORDER],
        "hidden_dim": agent.config.hidden_dim,
        "action_hidden_dim": agent.config.action_hidden_dim,
        "state_dim": agent.state.shape[1],
        "ng_mode": agent.config.ng_mode,
        "actor": _dump_network(agent.actor),
        "critic": _dump_network(agent.critic),
    }


def write_checkpoint(agent: SizingAgent, path: str | Path) -> None:
    Path(path).write_text(json.dumps(save_checkpoint(agent)))


def read_checkpoint(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}") from exc


def agent_from_checkpoint(doc: dict, topology: CircuitTopology, tech: TechnologyNode,
                          config: AgentConfig | None = None) -> SizingAgent:
    """Rebuild an agent from a checkpoint for the given topology/technology."""
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version!r} unsupported (expected {CHECKPOINT_VERSION})")
    encoding = EncodingMode(doc["encoding_mode"])
    expected = state_dim(topology.n, encoding)
    if doc["state_dim"] != expected:
        raise CheckpointError(
            f"checkpoint state dim {doc['state_dim']} does not match topology "
            f"'{topology.name}' (n={topology.n}, {encoding.value} encoding needs {expected}); "
            f"one-hot checkpoints only load onto same-size topologies, use the "
            f"{EncodingMode.SCALAR_INDEX.value} encoding for cross-topology transfer"
        )
    missing = {k.value for k in topology.kind_rows()} - set(doc.get("kinds", []))
    if missing:
        raise CheckpointError(f"checkpoint lacks decoders for kinds {sorted(missing)}")
    config = replace(config) if config is not None else AgentConfig()
    config.hidden_dim = doc["hidden_dim"]
    config.action_hidden_dim = doc["action_hidden_dim"]
    config.ng_mode = bool(doc.get("ng_mode", False))
    return SizingAgent(topology, tech, config, encoding=encoding,
                       _weights={"actor": doc["actor"], "critic": doc["critic"]})
