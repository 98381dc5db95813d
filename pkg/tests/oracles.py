"""Independent brute-force oracles shared by the test modules."""

from collections import deque
from itertools import product

import numpy as np


def edit_neighbors(s, alphabet, variant, max_len):
    out = set()
    n = len(s)
    for i in range(n):  # deletion
        out.add(s[:i] + s[i + 1 :])
    if n < max_len:  # insertion
        for i in range(n + 1):
            for ch in alphabet:
                out.add(s[:i] + ch + s[i:])
    if variant in ("LD", "DLD"):  # substitution
        for i in range(n):
            for ch in alphabet:
                if ch != s[i]:
                    out.add(s[:i] + ch + s[i + 1 :])
    if variant == "DLD":  # adjacent transposition
        for i in range(n - 1):
            if s[i] != s[i + 1]:
                out.add(s[:i] + s[i + 1] + s[i] + s[i + 2 :])
    return out


def edit_script_distances(source, alphabet, variant, max_len):
    """Fewest unit edits from ``source`` to every string of length <= max_len.

    Breadth-first search over edit scripts whose intermediate strings never
    exceed ``max_len``; with deletions ordered first, some optimal script for
    every target of length <= max_len stays inside this space.
    """
    dist = {source: 0}
    queue = deque([source])
    while queue:
        s = queue.popleft()
        for t in edit_neighbors(s, alphabet, variant, max_len):
            if t not in dist:
                dist[t] = dist[s] + 1
                queue.append(t)
    return dist


def all_strings(alphabet, max_len):
    for L in range(max_len + 1):
        for t in product(alphabet, repeat=L):
            yield "".join(t)


def enumerate_walks(net, max_arcs):
    """All complete START->END walks with at most ``max_arcs`` arcs, as arc lists."""
    out = []
    stack = [(net.start_index, [])]
    while stack:
        node, arcs = stack.pop()
        if node == net.end_index:
            out.append(arcs)
            continue
        if len(arcs) == max_arcs:
            continue
        for k in net.out_arcs[node]:
            stack.append((net.arcs[k][1], arcs + [k]))
    return out


def brute_force_M(net, c, N):
    best = np.full(N + 1, -np.inf)
    for arcs in enumerate_walks(net, N):
        best[len(arcs)] = max(best[len(arcs)], c[arcs].sum())
    return np.maximum.accumulate(best)
