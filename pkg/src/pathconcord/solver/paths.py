"""Bellman-Ford shortest paths and negative-cycle detection on a compiled network."""

from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import NegativeCycleDetected
from ..network import ClinicalNetwork, FlowVector

IMPROVE_TOL = 1e-9


def detect_negative_cycle(network: ClinicalNetwork, c, tol: float = 1e-9) -> list[int] | None:
    """Return the arc indices of a negative-cost directed cycle, or None.

    Label-correcting Bellman-Ford from a virtual source joined to every node
    at zero cost. Any node still improving after ``m`` rounds lies downstream
    of a negative cycle; walking its predecessor chain recovers the witness.
    """
    c = np.asarray(c, dtype=float)
    m = network.n_nodes
    dist = np.zeros(m)
    pred = np.full(m, -1)
    updated: list[int] = []
    for rnd in range(m + 1):
        updated = []
        for k, (u, v) in enumerate(network.arcs):
            cand = dist[u] + c[k]
            if cand < dist[v] - IMPROVE_TOL:
                dist[v] = cand
                pred[v] = k
                updated.append(v)
        if not updated:
            return None
    for v0 in updated:
        v = v0
        for _ in range(m):
            k = pred[v]
            if k < 0:
                break
            v = network.arcs[k][0]
        else:
            cycle = []
            w = v
            while True:
                k = int(pred[w])
                cycle.append(k)
                w = network.arcs[k][0]
                if w == v or len(cycle) > m:
                    break
            if w != v:
                continue
            cycle.reverse()
            if float(c[cycle].sum()) < -tol:
                return cycle
    return None


def shortest_distances(network: ClinicalNetwork, c) -> np.ndarray:
    """Cost-to-END from every node (``inf`` where END is unreachable).

    Raises NegativeCycleDetected if labels still improve after ``m`` rounds.
    """
    c = np.asarray(c, dtype=float)
    m = network.n_nodes
    d = np.full(m, np.inf)
    d[network.end_index] = 0.0
    for _ in range(m):
        changed = False
        for k, (u, v) in enumerate(network.arcs):
            if d[v] < np.inf and d[v] + c[k] < d[u] - IMPROVE_TOL:
                d[u] = d[v] + c[k]
                changed = True
        if not changed:
            return d
    cycle = detect_negative_cycle(network, c)
    if cycle is None:
        return d
    raise NegativeCycleDetected(cycle, float(c[cycle].sum()))


def shortest_path_cost(network: ClinicalNetwork, c, tol: float = 1e-9) -> tuple[float, FlowVector]:
    """Minimum-cost START->END path and its cost.

    Among cost-tight paths the one with the fewest arcs is chosen, and among
    those the lexicographically smallest sequence of arc indices. Preferring
    fewer arcs first keeps zero-cost cycles off the returned path.
    """
    c = np.asarray(c, dtype=float)
    d = shortest_distances(network, c)
    s, e = network.start_index, network.end_index
    if not np.isfinite(d[s]):
        raise ValueError("END is unreachable from START")
    tight = [
        k
        for k, (u, v) in enumerate(network.arcs)
        if np.isfinite(d[v]) and abs(c[k] + d[v] - d[u]) <= tol * (1 + abs(d[u]))
    ]
    rev: dict[int, list[int]] = {}
    for k in tight:
        u, v = network.arcs[k]
        rev.setdefault(v, []).append(u)
    hops = {e: 0}
    queue = deque([e])
    while queue:
        v = queue.popleft()
        for u in rev.get(v, ()):
            if u not in hops:
                hops[u] = hops[v] + 1
                queue.append(u)
    tight_out: dict[int, list[int]] = {}
    for k in tight:
        tight_out.setdefault(network.arcs[k][0], []).append(k)
    path = []
    u = s
    while u != e:
        k = min(k for k in tight_out[u] if hops.get(network.arcs[k][1], -1) == hops[u] - 1)
        path.append(k)
        u = network.arcs[k][1]
    counts = np.bincount(path, minlength=network.n_arcs)
    return float(c[path].sum()), FlowVector(counts, "shortest_path")
