"""Seeded synthetic patient cohorts.

Each walk starts from a reference pathway and is perturbed: concordant
activities are dropped or repeated, discordant activities are inserted and
the outcome-layer exit may be swapped. The number of perturbations drives an
exponential event-time model, so discordance and hazard move together when
``beta > 0``. Every patient draws from its own substream of the seed, so the
cohort does not depend on generation order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import MissingArc, ValidationError
from .network import ClinicalNetwork, FlowVector, sequence_arcs, sequence_to_flow, strip_terminals

MAX_TRIES = 100


@dataclass
class CohortConfig:
    seed: int = 0
    n_patients: int = 1000
    delete_rate: float = 0.1  # per concordant activity
    repeat_rate: float = 0.05  # per concordant activity
    insert_rate: float = 0.15  # per gap, geometric number of insertions
    exit_rate: float = 0.1  # chance of leaving through another outcome node
    insert_weights: dict[str, float] = field(default_factory=dict)  # default: uniform over discordant activities
    exit_weights: dict[str, float] = field(default_factory=dict)
    reference_weights: list[float] = field(default_factory=list)
    protected: list[str] = field(default_factory=lambda: ["RESECTION"])
    beta: float = 0.0
    baseline_hazard: float = 0.1
    horizon: float = 5.0
    dropout_rate: float = 0.0

    def __post_init__(self):
        for name in ("delete_rate", "repeat_rate", "insert_rate", "exit_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if self.insert_rate >= 1.0:
            raise ValidationError("insert_rate must be below 1 so the number of insertions is finite")
        if self.n_patients < 1:
            raise ValidationError("n_patients must be at least 1")
        if self.baseline_hazard <= 0 or self.horizon <= 0 or self.dropout_rate < 0:
            raise ValidationError("hazard and horizon must be positive, dropout nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "CohortConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown cohort config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "CohortConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PatientRecord:
    patient_id: str
    sequence: tuple[str, ...]
    flow: FlowVector
    event_time: float
    event_observed: bool
    perturbations: int = 0


def _choice(rng, keys: Sequence[str], weights: dict[str, float]):
    w = np.array([weights.get(k, 1.0 if not weights else 0.0) for k in keys], dtype=float)
    if w.sum() <= 0:
        w = np.ones(len(keys))
    return keys[int(rng.choice(len(keys), p=w / w.sum()))]


def random_walk(network: ClinicalNetwork, reference: Sequence[str], cfg: CohortConfig, rng) -> tuple[list[str], int]:
    """One perturbed copy of ``reference`` and the number of perturbations applied."""
    ref = strip_terminals(reference)
    acts = network.activities
    outcome_nodes = [a for a in network.activity_ids if acts[a].outcome_layer]
    exit_node = ref[-1] if ref and acts[ref[-1]].outcome_layer else None
    body = ref[:-1] if exit_node else ref
    pool = [a for a in network.activity_ids if not acts[a].outcome_layer and a not in ref]
    if not pool:
        pool = [a for a in network.activity_ids if not acts[a].outcome_layer]

    count = 0
    out: list[str] = []

    def insertions():
        nonlocal count
        while cfg.insert_rate > 0 and rng.random() < cfg.insert_rate:
            out.append(_choice(rng, pool, cfg.insert_weights))
            count += 1

    insertions()
    for a in body:
        if a not in cfg.protected and rng.random() < cfg.delete_rate:
            count += 1
        else:
            out.append(a)
            if acts[a].allow_self_repeat and rng.random() < cfg.repeat_rate:
                out.append(a)
                count += 1
        insertions()
    if exit_node is not None:
        others = [o for o in outcome_nodes if o != exit_node]
        if others and rng.random() < cfg.exit_rate:
            exit_node = _choice(rng, others, cfg.exit_weights)
            count += 1
        out.append(exit_node)
    return out, count


def patient_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


def generate(network: ClinicalNetwork, references: Sequence[Sequence[str]] | None, cfg: CohortConfig) -> list[PatientRecord]:
    refs = [strip_terminals(r) for r in (network.reference_pathways if references is None else references)]
    if not refs:
        raise ValidationError("cohort generation needs at least one reference pathway")
    ref_w = np.array(cfg.reference_weights or [1.0] * len(refs), dtype=float)
    if ref_w.shape[0] != len(refs) or (ref_w < 0).any() or ref_w.sum() <= 0:
        raise ValidationError("reference_weights must give one nonnegative weight per reference pathway")
    ref_w = ref_w / ref_w.sum()
    width = len(str(cfg.n_patients - 1))
    records = []
    for i in range(cfg.n_patients):
        rng = patient_rng(cfg.seed, i)
        ref = refs[int(rng.choice(len(refs), p=ref_w))]
        for _ in range(MAX_TRIES):
            seq, count = random_walk(network, ref, cfg, rng)
            try:
                arcs = sequence_arcs(network, seq)
                break
            except MissingArc:
                continue
        else:
            seq, count = list(ref), 0
            arcs = sequence_arcs(network, seq)
        flow = FlowVector(np.bincount(arcs, minlength=network.n_arcs), f"P{i:0{width}d}")
        rate = cfg.baseline_hazard * np.exp(cfg.beta * count)
        t_event = rng.exponential(1.0 / rate)
        t_drop = rng.exponential(1.0 / cfg.dropout_rate) if cfg.dropout_rate > 0 else np.inf
        t = min(t_event, t_drop, cfg.horizon)
        records.append(PatientRecord(flow.source_id, tuple(seq), flow, float(t), bool(t_event <= min(t_drop, cfg.horizon)), count))
    return records


def flows_of(records: Sequence[PatientRecord], network: ClinicalNetwork | None = None) -> list[FlowVector]:
    if network is None:
        return [r.flow for r in records]
    return [sequence_to_flow(network, r.sequence, r.patient_id) for r in records]
