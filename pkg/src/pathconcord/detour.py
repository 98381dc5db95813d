"""Detour decomposition of discordance.

A walk is aligned against a reference pathway in one left-to-right pass. Each
stretch between two consecutive matched reference activities that either
carries extra activities or skips reference activities is a detour. The cost
of a detour is the cost of the walk's arcs on that stretch minus the cost of
the reference arcs it replaces, normalized like omega; detour costs add up
to ``1 - omega`` whenever the reference pathway is a shortest path.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IdentityViolation, MissingArcForDetour, NotAWalk, UnknownActivity
from .network import END, START, ClinicalNetwork, sequence_to_flow, strip_terminals
from .score import DEGENERATE_TOL, LongestWalkTable, omega

log = logging.getLogger(__name__)

MISSING = "missing activities"
CATEGORIES = (
    MISSING,
    "ED visit",
    "extra consultation",
    "extra endoscopy",
    "extra abdomen/pelvis imaging",
    "extra chest imaging",
    "other",
)

_KEYWORDS = (
    (("ed visit", "ed_visit", "emergency"), "ED visit"),
    (("consult",), "extra consultation"),
    (("endoscopy", "colonoscopy"), "extra endoscopy"),
    (("abd", "pelvis", "pelvic"), "extra abdomen/pelvis imaging"),
    (("chest", "thorax"), "extra chest imaging"),
)


@dataclass
class Alignment:
    reference: tuple[str, ...]  # START, gamma_1..gamma_K, END
    present: list[bool]
    deltas: list[list[str]]

    def reassemble(self) -> list[str]:
        out: list[str] = []
        for i, g in enumerate(self.reference):
            if self.present[i]:
                out.append(g)
                out.extend(self.deltas[i])
        return out


def align(walk: Sequence[str], reference: Sequence[str], network: ClinicalNetwork | None = None) -> Alignment:
    acts = strip_terminals(walk)
    ref = tuple([START, *strip_terminals(reference), END])
    if len(set(ref)) != len(ref):
        raise NotAWalk("reference pathway repeats an activity")
    if any(a in (START, END) for a in acts):
        raise NotAWalk("START/END may only delimit the walk")
    if network is not None:
        for a in acts:
            if a not in network.activities:
                raise UnknownActivity(a)
    where = {g: i for i, g in enumerate(ref)}
    present = [False] * len(ref)
    deltas: list[list[str]] = [[] for _ in ref]
    present[0] = True
    last = 0
    for a in acts:
        i = where.get(a)
        if i is not None and 0 < i < len(ref) - 1 and i > last:
            present[i] = True
            last = i
        else:
            deltas[last].append(a)
    present[-1] = True
    return Alignment(ref, present, deltas)


@dataclass
class Detour:
    from_concordant: int
    to_concordant: int
    extra: tuple[str, ...]
    skipped: tuple[str, ...]
    extra_arcs: list[int]
    missing_arcs: list[int]
    numerator: float
    cost: float
    # signed arc terms (arc, sign, origin activity, category); they sum to the numerator
    terms: list[tuple[int, int, str, str]] = field(default_factory=list)

    @property
    def kind(self) -> str:
        if self.extra and self.skipped:
            return "missing and extra"
        return "extra only" if self.extra else "missing only"


@dataclass
class DetourDecomposition:
    reference_index: int
    reference: tuple[str, ...]
    detours: list[Detour]
    total_discordance: float
    omega_check: float
    omega: float
    denominator: float

    @property
    def residual(self) -> float:
        return abs(self.omega_check - self.omega)


def category_of(network: ClinicalNetwork, activity: str) -> str:
    spec = network.activities.get(activity)
    if spec is not None and spec.category in CATEGORIES:
        return spec.category
    if spec is not None and spec.category:
        return "other"
    text = f"{activity} {spec.label if spec else ''}".lower()
    for words, cat in _KEYWORDS:
        if any(w in text for w in words):
            return cat
    return "other"


def _arc(network: ClinicalNetwork, a: str, b: str) -> int:
    k = network.arc(network.end_node(a), network.start_node(b))
    if k is None:
        raise MissingArcForDetour(f"detour needs arc {a}.end -> {b}.start, which the network lacks")
    return k


def _chain(network: ClinicalNetwork, left: str, body: Sequence[str], right: str):
    """Arcs of left -> body... -> right with the activity each arc belongs to.

    Entry and intra arcs belong to the activity they enter; the final exit arc
    belongs to the last body activity.
    """
    out = []
    prev = left
    for a in body:
        out.append((_arc(network, prev, a), a))
        out.append((network.intra_arc(a), a))
        prev = a
    out.append((_arc(network, prev, right), body[-1] if body else right))
    return out


def build_detours(network: ClinicalNetwork, al: Alignment, c, denominator: float, categories: Mapping[str, str] | None = None) -> list[Detour]:
    c = np.asarray(c, dtype=float)
    cat = (lambda a: categories.get(a, "other")) if categories is not None else (lambda a: category_of(network, a))
    ref = al.reference
    matched = [i for i, p in enumerate(al.present) if p]
    degenerate = denominator <= DEGENERATE_TOL
    detours = []
    for a, b in zip(matched, matched[1:]):
        extra = tuple(al.deltas[a])
        skipped = tuple(ref[a + 1 : b])
        if not extra and not skipped:
            continue
        ga, gb = ref[a], ref[b]
        terms: list[tuple[int, int, str, str]] = []
        if extra:
            ext = _chain(network, ga, extra, gb)
            terms += [(k, +1, who, cat(who)) for k, who in ext]
        else:
            bridge = _arc(network, ga, gb)
            ext = [(bridge, skipped[0])]
            terms.append((bridge, +1, skipped[0], MISSING))
        if skipped:
            mis = _chain(network, ga, skipped, gb)
            terms += [(k, -1, who, MISSING) for k, who in mis]
        else:
            bridge = _arc(network, ga, gb)
            mis = [(bridge, extra[0])]
            terms.append((bridge, -1, extra[0], cat(extra[0])))
        num = math.fsum(s * c[k] for k, s, _, _ in terms)
        cost = 0.0 if degenerate else num / denominator
        detours.append(Detour(a, b, extra, skipped, [k for k, _ in ext], [k for k, _ in mis], num, cost, terms))
    return detours


def arc_accounting(network: ClinicalNetwork, detours: Iterable[Detour]) -> tuple[int, int]:
    """(missing, extra) inter-activity arc counts after cancelling arcs common to both sides."""
    missing = extra = 0
    for d in detours:
        e = Counter(k for k in d.extra_arcs if not network.is_intra(k))
        m = Counter(k for k in d.missing_arcs if not network.is_intra(k))
        extra += sum((e - m).values())
        missing += sum((m - e).values())
    return missing, extra


def decompose(
    network: ClinicalNetwork,
    walk: Sequence[str],
    c,
    shortest_cost: float,
    table: LongestWalkTable,
    references: Sequence[Sequence[str]] | None = None,
    categories: Mapping[str, str] | None = None,
    tol: float = 1e-8,
) -> DetourDecomposition:
    """Split ``1 - omega`` of a walk into detour costs.

    The walk is aligned against a reference pathway whose cost equals the
    shortest-path cost; among those, the one with the smallest total detour
    cost, then the first declared, is used.
    """
    c = np.asarray(c, dtype=float)
    refs = [tuple(strip_terminals(r)) for r in (network.reference_pathways if references is None else references)]
    x = sequence_to_flow(network, walk)
    score = omega(network, x, c, shortest_cost, table)
    denom = score.longest_cost - shortest_cost
    shortest_refs = []
    for q, r in enumerate(refs):
        rc = float(sequence_to_flow(network, r).counts @ c)
        if abs(rc - shortest_cost) <= tol * max(1.0, abs(shortest_cost)):
            shortest_refs.append(q)
    if not shortest_refs:
        raise IdentityViolation(float("nan"), "no reference pathway attains the shortest-path cost under this cost vector")
    best = None
    for q in shortest_refs:
        al = align(walk, refs[q], network)
        dets = build_detours(network, al, c, denom, categories)
        total = math.fsum(d.cost for d in dets)
        if best is None or total < best[0] - 1e-12:
            best = (total, q, dets)
    total, q, dets = best
    if denom <= DEGENERATE_TOL and dets:
        log.warning("longest and shortest walk costs coincide; detour costs set to 0")
    if any(d.cost < -1e-12 for d in dets):
        log.warning("walk has a detour with negative cost")
    dec = DetourDecomposition(q, tuple([START, *refs[q], END]), dets, total, 1.0 - total, score.omega, denom)
    if dec.residual > tol:
        raise IdentityViolation(dec.residual)
    return dec


# ---------------------------------------------------------------------------
# attribution


@dataclass
class ActivityAttribution:
    shares: dict[tuple[str, str], float]
    total: float

    def by_category(self) -> dict[str, float]:
        out: dict[str, list[float]] = defaultdict(list)
        for (_, cat), v in self.shares.items():
            out[cat].append(v)
        return {cat: math.fsum(out[cat]) for cat in CATEGORIES if cat in out}

    def rows(self) -> list[dict]:
        return [{"origin_node": o, "category": cat, "share": v} for (o, cat), v in sorted(self.shares.items())]


def detour_shares(d: Detour, c, denominator: float) -> dict[tuple[str, str], float]:
    c = np.asarray(c, dtype=float)
    parts: dict[tuple[str, str], list[float]] = defaultdict(list)
    for k, s, who, cat in d.terms:
        parts[(who, cat)].append(s * c[k])
    if denominator <= DEGENERATE_TOL:
        return {key: 0.0 for key in parts}
    return {key: math.fsum(v) / denominator for key, v in parts.items()}


def attribute(dec: DetourDecomposition, c) -> ActivityAttribution:
    """Per (activity, category) share of the walk's discordance."""
    acc: dict[tuple[str, str], list[float]] = defaultdict(list)
    for d in dec.detours:
        for key, v in detour_shares(d, c, dec.denominator).items():
            acc[key].append(v)
    return ActivityAttribution({k: math.fsum(v) for k, v in acc.items()}, dec.total_discordance)


def population_attribution(attributions: Sequence[ActivityAttribution]) -> ActivityAttribution:
    """Mean attribution over a cohort; the shares add up to the mean of ``1 - omega``."""
    n = len(attributions)
    if n == 0:
        return ActivityAttribution({}, 0.0)
    acc: dict[tuple[str, str], list[float]] = defaultdict(list)
    for a in attributions:
        for k, v in a.shares.items():
            acc[k].append(v)
    return ActivityAttribution({k: math.fsum(v) / n for k, v in acc.items()}, math.fsum(a.total for a in attributions) / n)


def attribution_diff(a: ActivityAttribution, b: ActivityAttribution) -> ActivityAttribution:
    """Share differences ``a - b`` per key; they add up to the difference of totals."""
    keys = set(a.shares) | set(b.shares)
    return ActivityAttribution({k: a.shares.get(k, 0.0) - b.shares.get(k, 0.0) for k in keys}, a.total - b.total)


def _extra_bucket(k: int) -> str:
    if k <= 5:
        return "1-5"
    return "6-10" if k <= 10 else ">10"


def detour_type_table(decompositions: Sequence[DetourDecomposition]) -> list[dict]:
    """Per-patient pathway type with counts and mean discordance.

    A patient is "Concordant" without detours, else classified by whether it
    has missing activities, extra activities or both, with the extra
    activities bucketed by count.
    """
    groups: dict[str, list[float]] = defaultdict(list)
    for dec in decompositions:
        n_extra = sum(len(d.extra) for d in dec.detours)
        has_missing = any(d.skipped for d in dec.detours)
        if not dec.detours:
            label = "Concordant"
        elif n_extra == 0:
            label = "Missing only"
        elif not has_missing:
            label = f"Extra only {_extra_bucket(n_extra)}"
        else:
            label = f"Missing and extra {_extra_bucket(n_extra)}"
        groups[label].append(dec.total_discordance)
    order = ["Concordant", "Missing only"] + [f"{p} {b}" for p in ("Extra only", "Missing and extra") for b in ("1-5", "6-10", ">10")]
    total = sum(len(v) for v in groups.values())
    return [
        {"type": lab, "patients": len(groups[lab]), "fraction": len(groups[lab]) / total, "mean_discordance": math.fsum(groups[lab]) / len(groups[lab])}
        for lab in order
        if groups.get(lab)
    ]
