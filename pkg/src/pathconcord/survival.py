"""Kaplan-Meier curves, the k-group log-rank test and tercile binning."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from .errors import EmptyGroup, NoEvents

log = logging.getLogger(__name__)


def _counts(t, e, times):
    """At-risk and event counts at each of ``times``."""
    ts = np.sort(t)
    te = np.sort(t[e])
    at_risk = ts.size - np.searchsorted(ts, times, side="left")
    events = np.searchsorted(te, times, side="right") - np.searchsorted(te, times, side="left")
    return at_risk, events


def _arrays(group):
    """Accept ``(times, observed)`` or a sequence of records with event_time/event_observed."""
    if isinstance(group, tuple) and len(group) == 2:
        t, e = group
    else:
        t = [r.event_time for r in group]
        e = [r.event_observed for r in group]
    return np.asarray(t, dtype=float), np.asarray(e, dtype=bool)


@dataclass
class SurvivalCurve:
    times: np.ndarray  # distinct event times
    survival: np.ndarray  # S(t) just after each time
    at_risk: np.ndarray
    events: np.ndarray

    def at(self, t: float) -> float:
        """Estimated survival at time ``t`` (right-continuous step function)."""
        i = np.searchsorted(self.times, t, side="right")
        return 1.0 if i == 0 else float(self.survival[i - 1])


def km_curve(group) -> SurvivalCurve:
    t, e = _arrays(group)
    if t.size == 0:
        raise EmptyGroup("Kaplan-Meier needs at least one record")
    times = np.unique(t[e])
    at_risk, events = _counts(t, e, times)
    surv = np.cumprod(1.0 - events / at_risk) if times.size else np.zeros(0)
    return SurvivalCurve(times, surv, at_risk, events)


@dataclass
class LogRankResult:
    statistic: float
    dof: int
    p_value: float
    observed: np.ndarray
    expected: np.ndarray


def log_rank(groups: Sequence) -> LogRankResult:
    """Observed-minus-expected chi-square test that all groups share one survival curve."""
    data = [_arrays(g) for g in groups]
    if len(data) < 2:
        raise EmptyGroup("log-rank needs at least two groups")
    if any(t.size == 0 for t, _ in data):
        raise EmptyGroup("log-rank groups must be nonempty")
    all_t = np.concatenate([t for t, _ in data])
    all_e = np.concatenate([e for _, e in data])
    times = np.unique(all_t[all_e])
    if times.size == 0:
        raise NoEvents("every record is censored")
    k = len(data)
    # at-risk and event counts per group and time
    counts = [_counts(t, e, times) for t, e in data]
    n = np.array([c[0] for c in counts], dtype=float)
    d = np.array([c[1] for c in counts], dtype=float)
    N = n.sum(axis=0)
    Dt = d.sum(axis=0)
    E = (n * Dt / N).sum(axis=1)
    O = d.sum(axis=1)
    V = np.zeros((k, k))
    w = np.where(N > 1, Dt * (N - Dt) / np.maximum(N - 1, 1), 0.0)
    for j in range(k):
        for l in range(k):
            V[j, l] = np.sum(w * (n[j] / N) * ((j == l) - n[l] / N))
    diff = (O - E)[:-1]
    Vr = V[:-1, :-1]
    stat = float(diff @ np.linalg.pinv(Vr) @ diff) if np.abs(Vr).max() > 0 else 0.0
    stat = max(stat, 0.0)
    dof = k - 1
    return LogRankResult(stat, dof, float(chi2.sf(stat, dof)), O, E)


@dataclass
class TercileBins:
    labels: np.ndarray  # 0 = lowest scores, 2 = highest
    boundaries: tuple[float, float]
    degenerate: bool


def tercile_bins(scores, ids: Sequence | None = None) -> TercileBins:
    """Equal-count terciles by rank.

    Ties are ordered by patient id (or input position) and any remainder goes
    to the lowest bins, so 10 scores split 4/3/3.
    """
    s = np.asarray(scores, dtype=float)
    if s.size < 3:
        raise ValueError("tercile binning needs at least three scores")
    key = np.arange(s.size) if ids is None else np.array([str(i) for i in ids])
    order = np.lexsort((key, s))
    base, rem = divmod(s.size, 3)
    sizes = [base + (1 if i < rem else 0) for i in range(3)]
    labels = np.empty(s.size, dtype=np.int64)
    pos = 0
    for b, size in enumerate(sizes):
        labels[order[pos : pos + size]] = b
        pos += size
    cut1 = float(s[order[sizes[0] - 1]])
    cut2 = float(s[order[sizes[0] + sizes[1] - 1]])
    degenerate = bool(np.all(s == s[0]))
    if degenerate:
        log.warning("all scores are equal; tercile bins are arbitrary")
    return TercileBins(labels, (cut1, cut2), degenerate)
