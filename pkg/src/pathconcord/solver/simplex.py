"""Dense two-phase primal simplex with Dantzig pricing and a Bland anti-cycling fallback.

Used as the exact fallback for small, degenerate LPs. The general form of
:class:`~.problems.LinearProgram` is mapped to standard form
``min c's  s.t.  Ms = r, s >= 0, r >= 0`` by shifting finite lower bounds,
flipping variables bounded only above, splitting free variables and adding
slacks for inequality rows and two-sided boxes.
"""

from __future__ import annotations

import numpy as np

from .problems import INFEASIBLE, OPTIMAL, UNBOUNDED, MAX_ITER, LinearProgram

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9
STALL_LIMIT = 50


class _StandardForm:
    def __init__(self, lp: LinearProgram):
        n = lp.n
        cols = []  # each entry: (original var, sign)
        shift = np.zeros(n)
        box_rows = []
        for j in range(n):
            lo, hi = lp.lo[j], lp.hi[j]
            if np.isfinite(lo):
                shift[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    box_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                shift[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nv = len(cols)
        T = np.zeros((n, nv))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s
        self.T, self.shift, self.nv = T, shift, nv

        Aeq = lp.A_eq @ T
        beq = lp.b_eq - lp.A_eq @ shift
        Aub = lp.A_ub @ T
        bub = lp.b_ub - lp.A_ub @ shift
        n_slack = Aub.shape[0] + len(box_rows)
        rows = []
        rhs = []
        for i in range(Aeq.shape[0]):
            rows.append(np.concatenate([Aeq[i], np.zeros(n_slack)]))
            rhs.append(beq[i])
        for i in range(Aub.shape[0]):
            r = np.concatenate([Aub[i], np.zeros(n_slack)])
            r[nv + i] = 1.0
            rows.append(r)
            rhs.append(bub[i])
        for k, (col, width) in enumerate(box_rows):
            r = np.zeros(nv + n_slack)
            r[col] = 1.0
            r[nv + Aub.shape[0] + k] = 1.0
            rows.append(r)
            rhs.append(width)
        width = nv + n_slack
        self.M = np.array(rows).reshape(len(rows), width)
        self.r = np.array(rhs, dtype=float)
        self.cost = np.concatenate([T.T @ lp.c, np.zeros(n_slack)])
        self.offset = float(lp.c @ shift)

    def recover(self, s: np.ndarray) -> np.ndarray:
        return self.T @ s[: self.nv] + self.shift


def _pivot(tab, basis, row, col):
    tab[row] /= tab[row, col]
    factor = tab[:, col].copy()
    factor[row] = 0.0
    tab -= np.outer(factor, tab[row])
    basis[row] = col


def _run(tab, basis, allowed, max_iter):
    """Iterate on a tableau whose last row is the reduced-cost row.

    Entering columns follow Dantzig's most-negative reduced cost; after
    ``STALL_LIMIT`` consecutive degenerate pivots the rule switches to Bland's
    (smallest index enters and leaves) until the objective moves again, which
    keeps the anti-cycling guarantee.
    """
    it = 0
    stall = 0
    while it < max_iter:
        red = np.where(allowed, tab[-1, :-1], 0.0)
        candidates = np.flatnonzero(red < -PIVOT_TOL)
        if candidates.size == 0:
            return OPTIMAL, it
        bland = stall >= STALL_LIMIT
        entering = int(candidates[0]) if bland else int(candidates[np.argmin(red[candidates])])
        col = tab[:-1, entering]
        pos = col > PIVOT_TOL
        if not pos.any():
            return UNBOUNDED, it
        ratios = np.full(col.size, np.inf)
        ratios[pos] = tab[:-1, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * (1 + abs(best)))
        if bland:
            leave = min(ties, key=lambda i: basis[i])
        else:
            leave = int(ties[np.argmax(col[ties])])  # largest pivot among ties, for stability
        stall = stall + 1 if best <= 1e-12 else 0
        _pivot(tab, basis, leave, entering)
        it += 1
    return MAX_ITER, it


def simplex_solve(lp: LinearProgram, max_iter: int = 200_000):
    """Returns ``(status, x, iterations)``; ``x`` is None unless optimal."""
    sf = _StandardForm(lp)
    M, r = sf.M.copy(), sf.r.copy()
    neg = r < 0
    M[neg] *= -1
    r[neg] *= -1
    k, w = M.shape
    if k == 0:
        if np.any(sf.cost < -PIVOT_TOL):
            return UNBOUNDED, None, 0
        return OPTIMAL, sf.recover(np.zeros(w)), 0

    # phase 1: artificials on every row
    tab = np.zeros((k + 1, w + k + 1))
    tab[:k, :w] = M
    tab[:k, w : w + k] = np.eye(k)
    tab[:k, -1] = r
    tab[-1, :w] = -M.sum(axis=0)
    tab[-1, -1] = -r.sum()
    basis = list(range(w, w + k))
    allowed = np.ones(w + k, dtype=bool)
    status, it1 = _run(tab, basis, allowed, max_iter)
    if status == MAX_ITER:
        return MAX_ITER, None, it1
    if -tab[-1, -1] > FEAS_TOL * (1 + r.max(initial=0.0)):
        return INFEASIBLE, None, it1

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for i in range(k):
        if basis[i] >= w:
            nz = np.flatnonzero(np.abs(tab[i, :w]) > 1e-9)
            if nz.size:
                _pivot(tab, basis, i, int(nz[0]))
                keep.append(i)
        else:
            keep.append(i)
    tab = np.vstack([tab[keep], tab[-1:]])
    basis = [basis[i] for i in keep]
    tab = np.delete(tab, np.s_[w : w + k], axis=1)

    # phase 2
    tab[-1, :] = 0.0
    tab[-1, :w] = sf.cost
    for i, b in enumerate(basis):
        if tab[-1, b] != 0.0:
            tab[-1] -= tab[-1, b] * tab[i]
    status, it2 = _run(tab, basis, np.ones(w, dtype=bool), max_iter - it1)
    if status != OPTIMAL:
        return status, None, it1 + it2
    s = np.zeros(w)
    for i, b in enumerate(basis):
        s[b] = tab[i, -1]
    s = np.maximum(s, 0.0)
    return OPTIMAL, sf.recover(s), it1 + it2
