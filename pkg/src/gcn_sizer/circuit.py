"""Circuit topologies as component graphs.

Netlist file format (line oriented):

    <name> <kind> <net> [<net> ...] [group=<label>]
    .global <net> [<net> ...]
    # comment

``kind`` is one of ``nmos``, ``pmos``, ``res``, ``cap``. Two components are
adjacent when they share at least one net that is not flagged ``.global``
(supply rails would otherwise make the graph near-complete). ``param`` lines
emitted by the netlist exporter are ignored here; they carry sizing values,
not connectivity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NetlistError

logger = logging.getLogger(__name__)

KIND_TOKENS = {"nmos", "pmos", "res", "cap"}


class ComponentKind(Enum):
    """The four supported component kinds, in state one-hot order."""

    NMOS = "nmos"
    PMOS = "pmos"
    RESISTOR = "res"
    CAPACITOR = "cap"

    @property
    def is_mos(self) -> bool:
        return self in (ComponentKind.NMOS, ComponentKind.PMOS)

    @property
    def action_arity(self) -> int:
        """Number of searched parameters: 3 for MOS (W, L, M), 1 for R and C."""
        return 3 if self.is_mos else 1

    @property
    def param_names(self) -> tuple[str, ...]:
        if self.is_mos:
            return ("W", "L", "M")
        return ("r",) if self is ComponentKind.RESISTOR else ("c",)


KIND_ORDER = tuple(ComponentKind)
MAX_ARITY = 3


@dataclass(frozen=True)
class Component:
    """One vertex of the topology graph."""

    id: int
    name: str
    kind: ComponentKind
    nets: tuple[str, ...]
    matching_group: str | None = None


@dataclass(frozen=True)
class CircuitTopology:
    """A fixed circuit graph: typed components joined by shared nets."""

    name: str
    components: tuple[Component, ...]
    edges: frozenset[tuple[int, int]]
    global_nets: frozenset[str] = frozenset()

    def __post_init__(self):
        n = len(self.components)
        for i, comp in enumerate(self.components):
            if comp.id != i:
                raise NetlistError(f"component ids must be dense 0..n-1, got {comp.id} at {i}")
        for a, b in self.edges:
            if a == b:
                raise NetlistError(f"self-edge on component {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise NetlistError(f"edge ({a},{b}) outside component range")
        groups: dict[str, ComponentKind] = {}
        for comp in self.components:
            if comp.matching_group is None:
                continue
            kind = groups.setdefault(comp.matching_group, comp.kind)
            if kind is not comp.kind:
                raise NetlistError(
                    f"matching group '{comp.matching_group}' mixes kinds {kind.value} and {comp.kind.value}"
                )
        if n and not self._connected():
            logger.warning("topology '%s' is not a connected graph", self.name)

    def _connected(self) -> bool:
        n = len(self.components)
        adj: list[list[int]] = [[] for _ in range(n)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        seen = {0}
        stack = [0]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == n

    @property
    def n(self) -> int:
        return len(self.components)

    def kind_rows(self) -> dict[ComponentKind, np.ndarray]:
        """Component ids per kind, only for kinds that occur, in enum order."""
        rows = {}
        for kind in KIND_ORDER:
            ids = [c.id for c in self.components if c.kind is kind]
            if ids:
                rows[kind] = np.asarray(ids, dtype=np.intp)
        return rows

    def matching_groups(self) -> dict[str, tuple[int, ...]]:
        groups: dict[str, list[int]] = {}
        for comp in self.components:
            if comp.matching_group is not None:
                groups.setdefault(comp.matching_group, []).append(comp.id)
        return {label: tuple(sorted(ids)) for label, ids in groups.items()}

    def component_by_name(self, name: str) -> Component:
        for comp in self.components:
            if comp.name == name:
                return comp
        raise KeyError(name)

    def neighbours(self, comp_id: int) -> tuple[int, ...]:
        out = set()
        for a, b in self.edges:
            if a == comp_id:
                out.add(b)
            elif b == comp_id:
                out.add(a)
        return tuple(sorted(out))


def parse_netlist(text: str, name: str = "netlist") -> CircuitTopology:
    """Parse netlist text into a topology; errors carry the offending line number."""
    raw_components: list[tuple[str, ComponentKind, tuple[str, ...], str | None]] = []
    global_nets: set[str] = set()
    seen_names: set[str] = set()

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == ".global":
            if len(tokens) < 2:
                raise NetlistError(".global needs at least one net name", line_no)
            global_nets.update(tokens[1:])
            continue
        if tokens[0] == "param":
            continue  # sizing annotations, handled by the design parser
        if tokens[0].startswith("."):
            raise NetlistError(f"unknown directive '{tokens[0]}'", line_no)
        if len(tokens) < 2:
            raise NetlistError(f"malformed line '{line}'", line_no)
        comp_name, kind_token, rest = tokens[0], tokens[1], tokens[2:]
        if "=" in comp_name or "=" in kind_token:
            raise NetlistError(f"malformed line '{line}'", line_no)
        if kind_token not in KIND_TOKENS:
            raise NetlistError(f"unknown kind token '{kind_token}'", line_no)
        if comp_name in seen_names:
            raise NetlistError(f"duplicate component name '{comp_name}'", line_no)
        group = None
        nets: list[str] = []
        for tok in rest:
            if tok.startswith("group="):
                group = tok[len("group="):]
                if not group:
                    raise NetlistError("empty group label", line_no)
            elif "=" in tok:
                raise NetlistError(f"unexpected token '{tok}'", line_no)
            else:
                if tok not in nets:
                    nets.append(tok)
        if not nets:
            raise NetlistError(f"component '{comp_name}' has no nets", line_no)
        seen_names.add(comp_name)
        raw_components.append((comp_name, ComponentKind(kind_token), tuple(nets), group))

    components = tuple(
        Component(id=i, name=cname, kind=kind, nets=nets, matching_group=group)
        for i, (cname, kind, nets, group) in enumerate(raw_components)
    )
    edges = set()
    net_members: dict[str, list[int]] = {}
    for comp in components:
        for net in comp.nets:
            if net in global_nets:
                continue
            net_members.setdefault(net, []).append(comp.id)
    for members in net_members.values():
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                edges.add((min(a, b), max(a, b)))
    return CircuitTopology(
        name=name,
        components=components,
        edges=frozenset(edges),
        global_nets=frozenset(global_nets),
    )


def adjacency_matrix(topology: CircuitTopology) -> np.ndarray:
    """Symmetric 0/1 adjacency matrix with zero diagonal."""
    n = topology.n
    a = np.zeros((n, n), dtype=np.float64)
    for i, j in topology.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a
