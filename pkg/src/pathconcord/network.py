"""Clinical activity network: split-node construction and the incidence system.

Each activity ``i`` becomes two nodes, ``i.start`` and ``i.end``, joined by an
intra-activity arc. Transitions between activities are arcs from an end node
to a start node. An artificial ``START`` node feeds the first activity and an
artificial ``END`` node absorbs the last one.

Node order is ``START``, then ``(i.start, i.end)`` per activity in declaration
order, then ``END``. Arcs are sorted by ``(tail, head)`` node index. Both orders
are fixed by the network file so solver output is reproducible.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateActivityId,
    InvalidNetworkSpec,
    MissingArc,
    TrivialNetwork,
    UnknownTransitionEndpoint,
)

START = "START"
END = "END"
RESERVED = (START, END)


@dataclass(frozen=True)
class ActivitySpec:
    id: str
    label: str = ""
    outcome_layer: bool = False
    allow_self_repeat: bool = False
    category: str | None = None

    @property
    def display(self) -> str:
        return self.label or self.id


@dataclass(frozen=True)
class NetworkSpec:
    activities: tuple[ActivitySpec, ...]
    transitions: tuple[tuple[str, str], ...] = ()
    reference_pathways: tuple[tuple[str, ...], ...] = ()
    complete: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        try:
            acts = tuple(
                ActivitySpec(
                    id=str(a["id"]),
                    label=str(a.get("label", "")),
                    outcome_layer=bool(a.get("outcome_layer", False)),
                    allow_self_repeat=bool(a.get("allow_self_repeat", False)),
                    category=a.get("category"),
                )
                for a in data["activities"]
            )
        except (KeyError, TypeError) as exc:
            raise InvalidNetworkSpec(f"malformed activity entry: {exc}") from exc
        transitions = []
        for t in data.get("transitions", []):
            if len(t) != 2:
                raise InvalidNetworkSpec(f"transition must be a [tail, head] pair, got {t!r}")
            transitions.append((str(t[0]), str(t[1])))
        refs = tuple(tuple(str(a) for a in r) for r in data.get("reference_pathways", []))
        return cls(acts, tuple(transitions), refs, bool(data.get("complete", False)))

    @classmethod
    def load(cls, path: str | Path) -> "NetworkSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        acts = []
        for a in self.activities:
            entry = {
                "id": a.id,
                "label": a.label,
                "outcome_layer": a.outcome_layer,
                "allow_self_repeat": a.allow_self_repeat,
            }
            if a.category is not None:
                entry["category"] = a.category
            acts.append(entry)
        out = {
            "activities": acts,
            "transitions": [list(t) for t in self.transitions],
            "reference_pathways": [list(r) for r in self.reference_pathways],
        }
        if self.complete:
            out["complete"] = True
        return out


@dataclass(frozen=True)
class IncidenceSystem:
    """Node-arc incidence matrix without the END row, and the unit-flow rhs."""

    A: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class FlowVector:
    counts: np.ndarray
    source_id: str | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).copy()
        if counts.ndim != 1:
            raise ValueError("flow counts must be one-dimensional")
        if (counts < 0).any():
            raise ValueError("flow counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def length(self) -> int:
        """Total number of arc traversals."""
        return int(self.counts.sum())

    def __len__(self) -> int:
        return len(self.counts)


@dataclass
class FlowReport:
    ok: bool
    residual: np.ndarray
    connected: bool
    messages: list[str] = field(default_factory=list)

    @property
    def violated_rows(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.residual)]


class ClinicalNetwork:
    """Compiled, immutable split-node network. Build with :func:`compile_network`."""

    def __init__(self, spec: NetworkSpec, node_names: Sequence[str], arcs: Sequence[tuple[int, int]]):
        self.spec = spec
        self.node_names: tuple[str, ...] = tuple(node_names)
        self.node_index: dict[str, int] = {name: i for i, name in enumerate(self.node_names)}
        self.arcs: tuple[tuple[int, int], ...] = tuple(arcs)
        self.arc_index: dict[tuple[int, int], int] = {a: k for k, a in enumerate(self.arcs)}
        self.start_index = 0
        self.end_index = len(self.node_names) - 1
        self.activities: dict[str, ActivitySpec] = {a.id: a for a in spec.activities}
        self.activity_ids: tuple[str, ...] = tuple(a.id for a in spec.activities)
        self._label_to_id = {a.label: a.id for a in spec.activities if a.label}
        out: list[list[int]] = [[] for _ in self.node_names]
        inc: list[list[int]] = [[] for _ in self.node_names]
        for k, (u, v) in enumerate(self.arcs):
            out[u].append(k)
            inc[v].append(k)
        self.out_arcs = tuple(tuple(x) for x in out)
        self.in_arcs = tuple(tuple(x) for x in inc)

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def reference_pathways(self) -> tuple[tuple[str, ...], ...]:
        return self.spec.reference_pathways

    def resolve_activity(self, key: str) -> str:
        """Accept an activity id or its display label."""
        if key in self.activities or key in RESERVED:
            return key
        if key in self._label_to_id:
            return self._label_to_id[key]
        raise KeyError(key)

    def start_node(self, activity: str) -> int:
        if activity == END:
            return self.end_index
        if activity == START:
            return self.start_index
        return self.node_index[f"{activity}.start"]

    def end_node(self, activity: str) -> int:
        if activity == START:
            return self.start_index
        if activity == END:
            return self.end_index
        return self.node_index[f"{activity}.end"]

    def node_activity(self, node: int) -> str:
        name = self.node_names[node]
        return name.rsplit(".", 1)[0] if "." in name else name

    def arc(self, tail: int, head: int) -> int | None:
        return self.arc_index.get((tail, head))

    def arc_name(self, k: int) -> str:
        u, v = self.arcs[k]
        return f"{self.node_names[u]}->{self.node_names[v]}"

    def intra_arc(self, activity: str) -> int:
        return self.arc_index[(self.start_node(activity), self.end_node(activity))]

    def transition_arc(self, a: str, b: str) -> int:
        """Arc from the end of activity ``a`` to the start of activity ``b``."""
        k = self.arc(self.end_node(a), self.start_node(b))
        if k is None:
            raise MissingArc(self.node_names[self.end_node(a)], self.node_names[self.start_node(b)])
        return k

    def is_intra(self, k: int) -> bool:
        u, v = self.arcs[k]
        name = self.node_names[u]
        return name.endswith(".start") and self.node_names[v] == name[: -len("start")] + "end"

    @cached_property
    def incidence_system(self) -> IncidenceSystem:
        m, n = self.n_nodes, self.n_arcs
        A = np.zeros((m - 1, n), dtype=np.int64)
        for k, (u, v) in enumerate(self.arcs):
            if u != self.end_index:
                A[u, k] += 1
            if v != self.end_index:
                A[v, k] -= 1
        b = np.zeros(m - 1, dtype=np.int64)
        b[self.start_index] = 1
        A.setflags(write=False)
        b.setflags(write=False)
        return IncidenceSystem(A, b)

    def describe(self) -> dict:
        return {
            "n_activities": len(self.activity_ids),
            "n_nodes": self.n_nodes,
            "n_arcs": self.n_arcs,
            "nodes": list(self.node_names),
            "arcs": [[self.node_names[u], self.node_names[v]] for u, v in self.arcs],
            "reference_pathways": [list(r) for r in self.reference_pathways],
        }


def _check_activity_ids(activities: Iterable[ActivitySpec]) -> None:
    seen = set()
    for a in activities:
        if not a.id or any(ch.isspace() for ch in a.id) or "." in a.id:
            raise InvalidNetworkSpec(f"activity id {a.id!r} must be a nonempty token without whitespace or dots")
        if a.id in RESERVED:
            raise InvalidNetworkSpec(f"{a.id} is a reserved node id")
        if a.id in seen:
            raise DuplicateActivityId(a.id)
        seen.add(a.id)


def _transition_set(spec: NetworkSpec) -> list[tuple[str, str]]:
    acts = {a.id: a for a in spec.activities}
    pairs: list[tuple[str, str]] = []
    if spec.complete:
        ordinary = [a.id for a in spec.activities if not a.outcome_layer]
        outcome = [a.id for a in spec.activities if a.outcome_layer]
        pairs += [(START, j) for j in ordinary]
        for i in ordinary:
            for j in ordinary + outcome:
                if i != j or acts[i].allow_self_repeat:
                    pairs.append((i, j))
            if not outcome:
                pairs.append((i, END))
    pairs += list(spec.transitions)
    for a in spec.activities:
        if a.allow_self_repeat:
            pairs.append((a.id, a.id))
        if a.outcome_layer:
            pairs.append((a.id, END))
    seen = set()
    unique = []
    for tail, head in pairs:
        for endpoint in (tail, head):
            if endpoint not in acts and endpoint not in RESERVED:
                raise UnknownTransitionEndpoint(f"transition {tail} -> {head}: unknown activity {endpoint!r}")
        if head == START or tail == END:
            raise InvalidNetworkSpec(f"transition {tail} -> {head} runs against START/END orientation")
        if tail == head and not acts[tail].allow_self_repeat:
            raise InvalidNetworkSpec(f"self-repeat {tail} -> {tail} declared but allow_self_repeat is false")
        if tail in acts and acts[tail].outcome_layer and head != END:
            raise InvalidNetworkSpec(f"outcome-layer activity {tail} may only exit to END")
        if (tail, head) not in seen:
            seen.add((tail, head))
            unique.append((tail, head))
    return unique


def count_paths(network: ClinicalNetwork, limit: int = 2) -> int:
    """Number of simple START->END paths, counting stops at ``limit``."""
    found = 0
    on_path = [False] * network.n_nodes
    stack = [(network.start_index, iter(network.out_arcs[network.start_index]))]
    on_path[network.start_index] = True
    while stack:
        node, it = stack[-1]
        k = next(it, None)
        if k is None:
            on_path[node] = False
            stack.pop()
            continue
        head = network.arcs[k][1]
        if head == network.end_index:
            found += 1
            if found >= limit:
                return found
        elif not on_path[head]:
            on_path[head] = True
            stack.append((head, iter(network.out_arcs[head])))
    return found


def compile_network(spec: NetworkSpec, *, check_references: bool = True) -> ClinicalNetwork:
    _check_activity_ids(spec.activities)
    pairs = _transition_set(spec)
    names = [START]
    for a in spec.activities:
        names += [f"{a.id}.start", f"{a.id}.end"]
    names.append(END)
    idx = {name: i for i, name in enumerate(names)}

    def tail_node(aid: str) -> int:
        return idx[START] if aid == START else idx[f"{aid}.end"]

    def head_node(aid: str) -> int:
        return idx[END] if aid == END else idx[f"{aid}.start"]

    arcs = {(idx[f"{a.id}.start"], idx[f"{a.id}.end"]) for a in spec.activities}
    arcs |= {(tail_node(t), head_node(h)) for t, h in pairs}
    network = ClinicalNetwork(spec, names, sorted(arcs))

    if count_paths(network, 2) < 2:
        raise TrivialNetwork("the network needs at least two distinct START->END paths")
    if check_references:
        for ref in spec.reference_pathways:
            if len(set(ref)) != len(ref):
                raise InvalidNetworkSpec(f"reference pathway {ref} repeats an activity")
            if any(a in RESERVED for a in ref):
                raise InvalidNetworkSpec("reference pathways list activities only, without START/END")
            sequence_to_flow(network, ref)
    return network


def load_network(path: str | Path) -> ClinicalNetwork:
    return compile_network(NetworkSpec.load(path))


def incidence(network: ClinicalNetwork) -> IncidenceSystem:
    return network.incidence_system


def strip_terminals(seq: Sequence[str]) -> list[str]:
    seq = list(seq)
    if seq and seq[0] == START:
        seq = seq[1:]
    if seq and seq[-1] == END:
        seq = seq[:-1]
    return seq


def sequence_arcs(network: ClinicalNetwork, seq: Sequence[str]) -> list[int]:
    """Arc indices traversed by the walk START, seq..., END, in order."""
    acts = strip_terminals(seq)
    path: list[int] = []
    prev = START
    for a in acts:
        if a not in network.activities:
            raise MissingArc(network.node_names[network.end_node(prev)], f"{a}.start")
        path.append(network.transition_arc(prev, a))
        path.append(network.intra_arc(a))
        prev = a
    path.append(network.transition_arc(prev, END))
    return path


def sequence_to_flow(network: ClinicalNetwork, seq: Sequence[str], source_id: str | None = None) -> FlowVector:
    counts = np.bincount(sequence_arcs(network, seq), minlength=network.n_arcs)
    return FlowVector(counts, source_id)


def validate_flow(network: ClinicalNetwork, x: FlowVector) -> FlowReport:
    inc = network.incidence_system
    counts = np.asarray(x.counts)
    if counts.shape != (network.n_arcs,):
        raise ValueError(f"flow has {counts.shape[0]} entries, network has {network.n_arcs} arcs")
    residual = inc.A @ counts - inc.b
    messages = []
    if residual.any():
        messages.append("flow balance violated at rows " + ", ".join(map(str, np.flatnonzero(residual))))

    # Balanced degrees plus one connected component containing START means a single walk.
    used = np.flatnonzero(counts)
    adj: dict[int, set[int]] = {}
    for k in used:
        u, v = network.arcs[k]
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    seen = {network.start_index}
    queue = deque([network.start_index])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    connected = network.end_index in seen and all(u in seen for u in adj)
    if not connected:
        messages.append("arcs do not form a single connected START->END walk")
    return FlowReport(ok=not residual.any() and connected, residual=residual, connected=connected, messages=messages)
