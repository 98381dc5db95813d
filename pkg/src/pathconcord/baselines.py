"""Edit-distance concordance baselines with unit operation costs.

Variants:

* ``LCSD``: insertions and deletions only (longest-common-subsequence distance);
* ``LD``: Levenshtein, adding substitutions;
* ``DLD``: Damerau-Levenshtein, adding transpositions of adjacent symbols. This
  is the unrestricted (Lowrance-Wagner) distance, which is a metric; the
  restricted optimal-string-alignment variant is available as ``OSA`` but
  violates the triangle inequality.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .network import strip_terminals

VARIANTS = ("LCSD", "LD", "DLD", "OSA")


@dataclass(frozen=True)
class EditConfig:
    variant: str = "LD"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown edit-distance variant {self.variant!r}; choose from {VARIANTS}")


def _lcsd(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1]
            else:
                cur[j] = 1 + min(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _levenshtein(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1]))
        prev = cur
    return prev[-1]


def _osa(a, b) -> int:
    n, m = len(a), len(b)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = a[i - 1] != b[j - 1]
            d[i, j] = min(d[i - 1, j] + 1, d[i, j - 1] + 1, d[i - 1, j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                d[i, j] = min(d[i, j], d[i - 2, j - 2] + 1)
    return int(d[n, m])


def _damerau(a, b) -> int:
    """Unrestricted Damerau-Levenshtein distance (Lowrance-Wagner recursion)."""
    n, m = len(a), len(b)
    big = n + m
    last_row: dict[Hashable, int] = {}
    d = np.zeros((n + 2, m + 2), dtype=np.int64)
    d[0, :] = big
    d[:, 0] = big
    d[1:, 1] = np.arange(n + 1)
    d[1, 1:] = np.arange(m + 1)
    for i in range(1, n + 1):
        last_col = 0
        for j in range(1, m + 1):
            k = last_row.get(b[j - 1], 0)
            l = last_col
            if a[i - 1] == b[j - 1]:
                cost = 0
                last_col = j
            else:
                cost = 1
            d[i + 1, j + 1] = min(
                d[i, j] + cost,
                d[i + 1, j] + 1,
                d[i, j + 1] + 1,
                d[k, l] + (i - k - 1) + 1 + (j - l - 1),
            )
        last_row[a[i - 1]] = i
    return int(d[n + 1, m + 1])


_IMPL = {"LCSD": _lcsd, "LD": _levenshtein, "DLD": _damerau, "OSA": _osa}


def edit_distance(a: Sequence, b: Sequence, cfg: EditConfig | str = "LD") -> int:
    variant = cfg.variant if isinstance(cfg, EditConfig) else EditConfig(cfg).variant
    return _IMPL[variant](tuple(a), tuple(b))


@dataclass(frozen=True)
class BaselineScore:
    raw: int
    normalized: float
    reference_index: int


def baseline_score(walk: Sequence[str], references: Sequence[Sequence[str]], cfg: EditConfig | str = "LD") -> BaselineScore:
    """Smallest distance to any reference, normalized by the summed lengths.

    ``normalized = 1 - raw / (|walk| + |reference|)`` for the minimizing
    reference (the first declared one on ties), clamped to [0, 1].
    """
    if not references:
        raise ValueError("at least one reference pathway is required")
    w = strip_terminals(walk)
    best = None
    for q, ref in enumerate(references):
        r = strip_terminals(ref)
        raw = edit_distance(w, r, cfg)
        if best is None or raw < best[0]:
            best = (raw, q, len(r))
    raw, q, lr = best
    total = len(w) + lr
    norm = 1.0 if total == 0 else min(1.0, max(0.0, 1.0 - raw / total))
    return BaselineScore(raw, norm, q)
