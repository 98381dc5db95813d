"""Concordance scoring: duality gap and the normalized score omega.

The normalizer is the cost of the most expensive START->END walk that uses
no more arc traversals than the scored walk, found with a Bellman-Ford style
recursion over the number of arcs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleWalk, WalkTooLong
from .network import ClinicalNetwork, FlowVector, validate_flow

UNREACHABLE = -np.inf
EXACT_TOL = 1e-9
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class LongestWalkTable:
    """``C[k, v]``: largest cost of a walk from START to ``v`` using exactly ``k`` arcs.

    ``-inf`` marks unreachable cells. ``M[k]`` is the best complete
    (ending at END) walk with at most ``k`` arcs.
    """

    C: np.ndarray
    M: np.ndarray
    N: int

    def longest(self, steps: int) -> float:
        if steps > self.N:
            raise WalkTooLong(f"walk has {steps} arcs; table covers {self.N}")
        return float(self.M[steps])


def longest_walk_table(network: ClinicalNetwork, c, N: int) -> LongestWalkTable:
    if N < 1:
        raise ValueError("step cap must be at least 1")
    c = np.asarray(c, dtype=float)
    tails = np.array([u for u, _ in network.arcs])
    heads = np.array([v for _, v in network.arcs])
    m = network.n_nodes
    C = np.full((N + 1, m), UNREACHABLE)
    C[0, network.start_index] = 0.0
    for k in range(1, N + 1):
        cand = C[k - 1, tails] + c  # -inf stays -inf
        row = np.full(m, UNREACHABLE)
        np.maximum.at(row, heads, cand)
        C[k] = row
    M = np.maximum.accumulate(C[:, network.end_index])
    C.setflags(write=False)
    M.setflags(write=False)
    return LongestWalkTable(C, M, N)


@dataclass(frozen=True)
class ConcordanceScore:
    omega: float
    epsilon: float
    walk_length: int
    shortest_cost: float
    longest_cost: float

    def as_row(self) -> dict:
        return {
            "omega": self.omega,
            "epsilon": self.epsilon,
            "walk_length": self.walk_length,
            "shortest_cost": self.shortest_cost,
            "longest_cost": self.longest_cost,
        }


def epsilon(x: FlowVector, c, shortest_cost: float) -> float:
    """Unnormalized discordance ``c'x - c'x*``."""
    return float(np.asarray(x.counts, dtype=float) @ np.asarray(c, dtype=float) - shortest_cost)


def omega_from_parts(eps: float, walk_cost: float, shortest_cost: float, longest_cost: float) -> float:
    if abs(eps) <= EXACT_TOL:
        return 1.0
    denom = longest_cost - shortest_cost
    if denom <= DEGENERATE_TOL:
        return 1.0
    if longest_cost - walk_cost <= EXACT_TOL:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - eps / denom)))


def omega(network: ClinicalNetwork, x: FlowVector, c, shortest_cost: float, table: LongestWalkTable, check: bool = True) -> ConcordanceScore:
    """Score one walk. ``omega`` is 1 for a shortest path and 0 for a longest walk of its length."""
    if check:
        rep = validate_flow(network, x)
        if not rep.ok:
            raise InfeasibleWalk("; ".join(rep.messages))
    steps = x.length
    longest = table.longest(steps)
    if not np.isfinite(longest):
        raise InfeasibleWalk(f"no complete walk with at most {steps} arcs")
    eps = epsilon(x, c, shortest_cost)
    walk_cost = eps + shortest_cost
    return ConcordanceScore(omega_from_parts(eps, walk_cost, shortest_cost, longest), eps, steps, shortest_cost, longest)


def score_flows(network: ClinicalNetwork, flows, c, shortest_cost: float, table: LongestWalkTable | None = None):
    """Score many walks with one shared longest-walk table."""
    flows = list(flows)
    if table is None:
        table = longest_walk_table(network, c, max(f.length for f in flows))
    return [omega(network, f, c, shortest_cost, table) for f in flows], table
