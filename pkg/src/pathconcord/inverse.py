"""Two-stage inverse shortest-path cost learning.

Stage 1 fits costs under which the reference pathways are as close to
shortest as possible (sum of squared duality gaps). Stage 2 keeps the stage-1
reference gaps fixed and, among the stage-1 optima, pushes the gaps of the
"died" walks up relative to the "survived" walks.

Decision vector layout for every subproblem is ``(c, p)`` with ``c`` the arc
costs (length n) and ``p`` the node potentials without END (length m-1);
stage 1 appends one gap variable per reference pathway.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    InfeasibleConstraints,
    InfeasibleStage2,
    NumericalFailure,
    TrivialNetwork,
    UnknownArcInConstraint,
    ValidationError,
)
from .network import END, START, ClinicalNetwork, FlowVector, count_paths, sequence_to_flow
from .solver import (
    DEFAULT_TOL,
    INFEASIBLE,
    OPTIMAL,
    LinearProgram,
    QuadraticProgram,
    is_feasible,
    solve_lp,
    solve_qp,
)

log = logging.getLogger(__name__)

PIN_SLACK = 1e-7


# ---------------------------------------------------------------------------
# constraint set


@dataclass(frozen=True)
class ConstraintSet:
    """Application constraints on the cost vector.

    Arc references are ``(tail, head)`` node names such as
    ``("RESECTION.end", "CHEMO_PARTIAL.start")``; activity labels may stand in
    for ids, and ``START``/``END`` name the terminals.
    """

    activity_rankings: tuple[tuple[str, str], ...] = ()
    subpath_rankings: tuple[tuple[tuple[tuple[str, str], ...], tuple[tuple[str, str], ...]], ...] = ()
    anchors: tuple[tuple[str, str, float], ...] = ()

    @classmethod
    def from_dict(cls, data: dict) -> "ConstraintSet":
        def arc(ref):
            if isinstance(ref, dict):
                return (str(ref["tail"]), str(ref["head"]))
            tail, head = ref
            return (str(tail), str(head))

        try:
            rankings = tuple((str(a), str(b)) for a, b in data.get("activity_rankings", []))
            subpaths = tuple(
                (tuple(arc(r) for r in item["preferred"]), tuple(arc(r) for r in item["other"]))
                for item in data.get("subpath_rankings", [])
            )
            anchors = tuple((*arc(a), float(a["value"])) for a in data.get("anchors", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed constraint document: {exc}") from exc
        return cls(rankings, subpaths, anchors)

    @classmethod
    def load(cls, path: str | Path) -> "ConstraintSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "activity_rankings": [list(r) for r in self.activity_rankings],
            "subpath_rankings": [
                {
                    "preferred": [{"tail": t, "head": h} for t, h in pref],
                    "other": [{"tail": t, "head": h} for t, h in other],
                }
                for pref, other in self.subpath_rankings
            ],
            "anchors": [{"tail": t, "head": h, "value": v} for t, h, v in self.anchors],
        }


def _resolve_node(network: ClinicalNetwork, ref: str) -> int:
    if ref in (START, END):
        return network.start_index if ref == START else network.end_index
    if "." not in ref:
        raise UnknownArcInConstraint(f"node reference {ref!r} must look like ID.start or ID.end")
    name, role = ref.rsplit(".", 1)
    try:
        aid = network.resolve_activity(name)
    except KeyError:
        raise UnknownArcInConstraint(f"unknown activity {name!r} in constraint") from None
    if role == "start":
        return network.start_node(aid)
    if role == "end":
        return network.end_node(aid)
    raise UnknownArcInConstraint(f"node role must be start or end, got {role!r}")


def resolve_arc(network: ClinicalNetwork, tail: str, head: str) -> int:
    k = network.arc(_resolve_node(network, tail), _resolve_node(network, head))
    if k is None:
        raise UnknownArcInConstraint(f"constraint refers to missing arc {tail} -> {head}")
    return k


@dataclass
class ConstraintRows:
    """Linear rows over ``c``: ``G_ub c <= h_ub`` and ``G_eq c = h_eq``; anchors listed separately."""

    G_ub: np.ndarray
    h_ub: np.ndarray
    G_eq: np.ndarray
    h_eq: np.ndarray
    anchors: list[tuple[int, float]]


def build_constraint_rows(cs: ConstraintSet, network: ClinicalNetwork) -> ConstraintRows:
    n = network.n_arcs
    ub = []
    for pref, other in cs.activity_rankings:
        try:
            i, j = network.resolve_activity(pref), network.resolve_activity(other)
            row = np.zeros(n)
            row[network.intra_arc(i)] += 1.0
            row[network.intra_arc(j)] -= 1.0
        except KeyError as exc:
            raise UnknownArcInConstraint(f"activity ranking names unknown activity {exc}") from None
        ub.append(row)
    for pref, other in cs.subpath_rankings:
        row = np.zeros(n)
        for t, h in pref:
            row[resolve_arc(network, t, h)] += 1.0
        for t, h in other:
            row[resolve_arc(network, t, h)] -= 1.0
        ub.append(row)
    eq = []
    anchors = []
    for t, h, v in cs.anchors:
        if v not in (-1.0, 1.0):
            raise ValidationError(f"anchor value must be -1 or +1, got {v}")
        k = resolve_arc(network, t, h)
        row = np.zeros(n)
        row[k] = 1.0
        eq.append(row)
        anchors.append((k, v))
    G_ub = np.array(ub).reshape(len(ub), n)
    G_eq = np.array(eq).reshape(len(eq), n)
    return ConstraintRows(G_ub, np.zeros(len(ub)), G_eq, np.array([v for _, v in anchors], dtype=float), anchors)


# ---------------------------------------------------------------------------
# instance and solutions


def _flow_matrix(flows, n: int) -> np.ndarray:
    rows = [np.asarray(f.counts if isinstance(f, FlowVector) else f, dtype=float) for f in flows]
    return np.array(rows).reshape(len(rows), n)


@dataclass
class InverseInstance:
    network: ClinicalNetwork
    references: np.ndarray  # R x n
    survived: np.ndarray  # S x n
    died: np.ndarray  # D x n
    constraints: ConstraintSet = field(default_factory=ConstraintSet)

    def __post_init__(self):
        n = self.network.n_arcs
        self.references = _flow_matrix(self.references, n)
        self.survived = _flow_matrix(self.survived, n)
        self.died = _flow_matrix(self.died, n)
        if self.references.shape[0] < 1:
            raise ValidationError("at least one reference pathway is required")
        inc = self.network.incidence_system
        for name in ("references", "survived", "died"):
            X = getattr(self, name)
            if X.shape[0] and np.abs(X @ inc.A.T - inc.b).max() > 0:
                raise ValidationError(f"a {name} flow violates flow balance")

    @classmethod
    def from_sequences(cls, network, references=None, survived=(), died=(), constraints=None) -> "InverseInstance":
        refs = network.reference_pathways if references is None else references
        return cls(
            network,
            [sequence_to_flow(network, r) for r in refs],
            [sequence_to_flow(network, s) for s in survived],
            [sequence_to_flow(network, s) for s in died],
            constraints or ConstraintSet(),
        )

    @property
    def R(self) -> int:
        return self.references.shape[0]

    @property
    def S(self) -> int:
        return self.survived.shape[0]

    @property
    def D(self) -> int:
        return self.died.shape[0]


@dataclass
class StageSolution:
    stage: int
    cost: np.ndarray
    dual: np.ndarray
    gaps: dict[str, np.ndarray]
    objective: float
    reports: list[dict]
    anchor: tuple[int, float]
    mode: str
    warnings: list[str] = field(default_factory=list)

    def to_dict(self, network: ClinicalNetwork | None = None) -> dict:
        out = {
            "stage": self.stage,
            "mode": self.mode,
            "objective": self.objective,
            "anchor": {"arc": int(self.anchor[0]), "value": float(self.anchor[1])},
            "cost": [float(v) for v in self.cost],
            "dual": [float(v) for v in self.dual],
            "gaps": {k: [float(v) for v in g] for k, g in self.gaps.items()},
            "reports": self.reports,
            "warnings": list(self.warnings),
        }
        if network is not None:
            out["anchor"]["name"] = network.arc_name(self.anchor[0])
            out["arcs"] = [network.arc_name(k) for k in range(network.n_arcs)]
        return out


def gaps_for(c, p, flows) -> np.ndarray:
    """Duality gap ``c'x - b'p`` of each flow (``b'p`` is the START potential)."""
    X = _flow_matrix(flows, len(c)) if not isinstance(flows, np.ndarray) or flows.ndim != 2 else flows
    return X @ np.asarray(c, dtype=float) - float(p[0])


def stage_invariants(inst: InverseInstance, sol: StageSolution) -> dict[str, float]:
    """Residuals of the conditions every stage solution must satisfy."""
    from .solver import detect_negative_cycle

    A = inst.network.incidence_system.A
    c, p = sol.cost, sol.dual
    return {
        "circulation": float(np.abs(A @ c).max(initial=0.0)),
        "norm_inf": float(np.abs(c).max()),
        "dual_feasibility": float((A.T @ p - c).max()),
        "min_reference_gap": float(gaps_for(c, p, inst.references).min()),
        "negative_cycle": detect_negative_cycle(inst.network, c) is not None,
    }


# ---------------------------------------------------------------------------
# problem assembly


def _base_rows(inst: InverseInstance, rows: ConstraintRows, extra: int):
    """Constraint blocks over (c, p, extra) shared by both stages."""
    net = inst.network
    A = net.incidence_system.A.astype(float)
    m1, n = A.shape
    zero = lambda r, k: np.zeros((r, k))  # noqa: E731
    # dual feasibility  A'p - c <= 0
    ub = [np.hstack([-np.eye(n), A.T, zero(n, extra)])]
    hub = [np.zeros(n)]
    if rows.G_ub.shape[0]:
        ub.append(np.hstack([rows.G_ub, zero(rows.G_ub.shape[0], m1 + extra)]))
        hub.append(rows.h_ub)
    # circulation  A c = 0, anchors
    eq = [np.hstack([A, zero(m1, m1 + extra)])]
    heq = [np.zeros(m1)]
    if rows.G_eq.shape[0]:
        eq.append(np.hstack([rows.G_eq, zero(rows.G_eq.shape[0], m1 + extra)]))
        heq.append(rows.h_eq)
    return ub, hub, eq, heq


def _bounds(inst: InverseInstance, extra: int, fixed: tuple[int, float] | None):
    n, m1 = inst.network.n_arcs, inst.network.n_nodes - 1
    lo = np.concatenate([-np.ones(n), np.full(m1 + extra, -np.inf)])
    hi = np.concatenate([np.ones(n), np.full(m1 + extra, np.inf)])
    if fixed is not None:
        k, s = fixed
        lo[k] = hi[k] = s
    return lo, hi


def stage1_problem(inst: InverseInstance, rows: ConstraintRows, fixed: tuple[int, float] | None) -> QuadraticProgram:
    n, m1, R = inst.network.n_arcs, inst.network.n_nodes - 1, inst.R
    ub, hub, eq, heq = _base_rows(inst, rows, R)
    # reference gaps  c'x_q - p_START - eps_q = 0
    G = np.zeros((R, n + m1 + R))
    G[:, :n] = inst.references
    G[:, n] = -1.0
    G[:, n + m1 :] = -np.eye(R)
    eq.append(G)
    heq.append(np.zeros(R))
    P = np.concatenate([np.zeros(n + m1), np.full(R, 2.0)])
    lo, hi = _bounds(inst, R, fixed)
    return QuadraticProgram(P, np.zeros(n + m1 + R), np.vstack(eq), np.concatenate(heq), np.vstack(ub), np.concatenate(hub), lo, hi)


def _clean(inst: InverseInstance, x: np.ndarray):
    n, m1 = inst.network.n_arcs, inst.network.n_nodes - 1
    c = np.clip(x[:n], -1.0, 1.0)
    p = x[n : n + m1].copy()
    return c, p


def _better(cand, best, tol) -> bool:
    """Lower objective wins; near-ties keep the earlier (lower arc, +1 first) candidate."""
    return best is None or cand < best - tol * max(1.0, abs(best))


def _normalization_candidates(inst: InverseInstance, rows: ConstraintRows, mode: str):
    if mode == "auto":
        mode = "anchored" if len(rows.anchors) == 1 else "full"
    if mode == "anchored":
        if len(rows.anchors) != 1:
            raise ValidationError("anchored mode needs exactly one anchor in the constraint set")
        return mode, [None]
    if mode != "full":
        raise ValidationError(f"unknown stage-1 mode {mode!r}")
    return mode, [(k, s) for k in range(inst.network.n_arcs) for s in (1.0, -1.0)]


def solve_stage1(inst: InverseInstance, mode: str = "auto", tol: float = DEFAULT_TOL) -> StageSolution:
    """Minimize the sum of squared reference gaps.

    ``mode`` is ``anchored`` (one QP; the single anchor fixes the scale),
    ``full`` (one QP per arc and sign, best kept) or ``auto`` (anchored when
    exactly one anchor is given).
    """
    if count_paths(inst.network, 2) < 2:
        raise TrivialNetwork("the network needs at least two distinct START->END paths")
    rows = build_constraint_rows(inst.constraints, inst.network)
    mode, candidates = _normalization_candidates(inst, rows, mode)
    # without anchors c = 0 always satisfies the homogeneous rows; with them, rule out an empty set once
    if rows.anchors and not is_feasible(stage1_problem(inst, rows, None)):
        raise InfeasibleConstraints("no cost vector satisfies the constraint set, circulation and the anchors together")
    best = None
    reports = []
    for fixed in candidates:
        qp = stage1_problem(inst, rows, fixed)
        rep = solve_qp(qp, tol=tol)
        summary = rep.summary()
        summary["fixed"] = None if fixed is None else [int(fixed[0]), fixed[1]]
        reports.append(summary)
        if rep.status == INFEASIBLE:
            continue
        if rep.status != OPTIMAL:
            raise NumericalFailure(f"stage-1 subproblem {fixed} ended with status {rep.status}")
        c, p = _clean(inst, rep.x)
        gaps = gaps_for(c, p, inst.references)
        obj = float(gaps @ gaps)
        if best is None or _better(obj, best[0], 1e-9):
            best = (obj, c, p, gaps, fixed if fixed is not None else rows.anchors[0])
    if best is None:
        raise InfeasibleConstraints("no cost vector satisfies the constraint set, circulation and normalization together")
    obj, c, p, gaps, anchor = best
    if mode == "full":
        reports = [r for r in reports if r["fixed"] == [int(anchor[0]), anchor[1]]] + [
            {"subproblems": len(candidates), "infeasible": sum(r["status"] == INFEASIBLE for r in reports)}
        ]
    return StageSolution(1, c, p, {"reference": gaps}, obj, reports, (int(anchor[0]), float(anchor[1])), mode)


def stage2_weights(S: int, D: int) -> tuple[float, float, list[str]]:
    """Weights (w_s, w_d) on the survived and died gap sums, and warnings."""
    if S and D:
        return float(Fraction(D, S)), 1.0, []
    if S:
        return 1.0, 0.0, ["no died walks: stage 2 minimizes the survived gaps only"]
    return 0.0, 1.0, ["no survived walks: stage 2 maximizes the died gaps only"]


def stage2_problem(inst, rows, stage1: StageSolution, fixed, slack: float) -> LinearProgram:
    n, m1 = inst.network.n_arcs, inst.network.n_nodes - 1
    w_s, w_d, _ = stage2_weights(inst.S, inst.D)
    g = w_s * inst.survived.sum(axis=0) - w_d * inst.died.sum(axis=0)
    obj = np.concatenate([g, np.zeros(m1)])
    obj[n] = -(w_s * inst.S - w_d * inst.D)
    ub, hub, eq, heq = _base_rows(inst, rows, 0)
    pin = np.zeros((inst.R, n + m1))
    pin[:, :n] = inst.references
    pin[:, n] = -1.0
    target = stage1.gaps["reference"]
    if slack:
        ub += [pin, -pin]
        hub += [target + slack, -(target - slack)]
    else:
        eq.append(pin)
        heq.append(target)
    lo, hi = _bounds(inst, 0, fixed)
    return LinearProgram(obj, np.vstack(eq), np.concatenate(heq), np.vstack(ub), np.concatenate(hub), lo, hi)


def stage2_objective(inst: InverseInstance, c, p) -> float:
    w_s, w_d, _ = stage2_weights(inst.S, inst.D)
    es = gaps_for(c, p, inst.survived) if inst.S else np.zeros(0)
    ed = gaps_for(c, p, inst.died) if inst.D else np.zeros(0)
    return float(w_s * np.sum(es) - w_d * np.sum(ed))


def solve_stage2(inst: InverseInstance, stage1: StageSolution, tol: float = DEFAULT_TOL) -> StageSolution:
    """Among stage-1 optima, minimize ``(D/S) sum eps_s - sum eps_d``.

    Reference gaps are pinned to their stage-1 values, first exactly and, if
    that is numerically infeasible, within an absolute slack of 1e-7.
    """
    if inst.S == 0 and inst.D == 0:
        return stage1
    _, _, warnings = stage2_weights(inst.S, inst.D)
    for w in warnings:
        log.warning(w)
    rows = build_constraint_rows(inst.constraints, inst.network)
    if stage1.mode == "full":
        candidates = [(k, s) for k in range(inst.network.n_arcs) for s in (1.0, -1.0)]
    else:
        candidates = [None]
    best = None
    reports = []
    for fixed in candidates:
        for slack in (0.0, PIN_SLACK):
            lp = stage2_problem(inst, rows, stage1, fixed, slack)
            rep = solve_lp(lp, tol=tol)
            if rep.status != INFEASIBLE:
                break
        summary = rep.summary()
        summary["fixed"] = None if fixed is None else [int(fixed[0]), fixed[1]]
        summary["pin_slack"] = slack
        reports.append(summary)
        if rep.status == INFEASIBLE:
            continue
        if rep.status != OPTIMAL:
            raise NumericalFailure(f"stage-2 subproblem {fixed} ended with status {rep.status}")
        c, p = _clean(inst, rep.x)
        obj = stage2_objective(inst, c, p)
        if _better(obj, None if best is None else best[0], 1e-9):
            best = (obj, c, p, fixed if fixed is not None else stage1.anchor)
    if best is None:
        raise InfeasibleStage2("stage-1 reference gaps cannot be reproduced by any stage-2 point")
    obj, c, p, anchor = best
    gaps = {"reference": gaps_for(c, p, inst.references)}
    if inst.S:
        gaps["survived"] = gaps_for(c, p, inst.survived)
    if inst.D:
        gaps["died"] = gaps_for(c, p, inst.died)
    if stage1.mode == "full":
        reports = [r for r in reports if r["fixed"] == [int(anchor[0]), anchor[1]]] + [{"subproblems": len(candidates)}]
    return StageSolution(2, c, p, gaps, obj, reports, (int(anchor[0]), float(anchor[1])), stage1.mode, warnings)


def fit(inst: InverseInstance, mode: str = "auto", tol: float = DEFAULT_TOL) -> tuple[StageSolution, StageSolution]:
    s1 = solve_stage1(inst, mode=mode, tol=tol)
    return s1, solve_stage2(inst, s1, tol=tol)


def separation(c, p, survived: Sequence, died: Sequence) -> float:
    """Mean died gap minus mean survived gap under ``(c, p)``."""
    return float(np.mean(gaps_for(c, p, died)) - np.mean(gaps_for(c, p, survived)))
