"""Embedded LP/QP solvers and shortest-path routines.

``solve_qp`` runs the ADMM engine with active-set polishing. ``solve_lp`` uses
the same engine with a zero quadratic term and falls back to an exact Bland
simplex when ADMM cannot certify a solution or reports a certificate of
infeasibility/unboundedness (which the simplex then confirms).
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import nnls

from ..errors import NumericalFailure
from .admm import admm_solve, duality_gap, kkt_residuals
from .paths import detect_negative_cycle, shortest_distances, shortest_path_cost
from .problems import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    QuadraticProgram,
    SolveReport,
)
from .simplex import simplex_solve

__all__ = [
    "DEFAULT_MAX_ITER",
    "DEFAULT_TOL",
    "INFEASIBLE",
    "MAX_ITER",
    "OPTIMAL",
    "UNBOUNDED",
    "LinearProgram",
    "QuadraticProgram",
    "SolveReport",
    "detect_negative_cycle",
    "shortest_distances",
    "shortest_path_cost",
    "solve_lp",
    "solve_qp",
    "recover_duals",
    "is_feasible",
]

# ADMM is tried first on LPs but given a short leash; simplex is exact on the sizes used here.
LP_ADMM_BUDGET = 4000
# QPs that have not converged after this many ADMM iterations get an exact feasibility check.
QP_PROBE_ITER = 20_000


def recover_duals(qp: QuadraticProgram, x: np.ndarray, active_tol: float = 1e-9):
    """Range-form multipliers for ``qp.stacked()`` at a primal point ``x``.

    Solves the stationarity condition ``Px + q + A'y = 0`` over active rows
    with sign restrictions (``y >= 0`` on active upper bounds, ``y <= 0`` on
    active lower bounds, free on equalities) as a nonnegative least-squares
    problem. Returns ``(y, stationarity_residual)``.
    """
    A, l, u = qp.stacked()
    Ax = A @ x
    g = -(qp.P @ x + qp.q)
    eq = np.isfinite(l) & (l == u)
    scale = 1.0 + np.abs(Ax)
    up = ~eq & np.isfinite(u) & (np.abs(u - Ax) <= active_tol * scale)
    lo = ~eq & np.isfinite(l) & (np.abs(Ax - l) <= active_tol * scale)
    blocks = [(np.flatnonzero(up), 1.0), (np.flatnonzero(lo), -1.0), (np.flatnonzero(eq), 1.0), (np.flatnonzero(eq), -1.0)]
    cols = [sign * A[idx].T for idx, sign in blocks]
    M = np.hstack(cols) if cols else np.zeros((qp.n, 0))
    y = np.zeros(A.shape[0])
    if M.shape[1] == 0:
        return y, float(np.abs(g).max(initial=0.0))
    z, _ = nnls(M, g, maxiter=50 * M.shape[1] + 100)
    pos = 0
    for idx, sign in blocks:
        y[idx] += sign * z[pos : pos + idx.size]
        pos += idx.size
    resid = float(np.abs(M @ z - g).max(initial=0.0))
    return y, resid


def _report(qp, status, x, y, iterations, method, messages=None) -> SolveReport:
    rep = SolveReport(status=status, x=x, iterations=iterations, method=method, y=y, messages=list(messages or []))
    if x is not None:
        rep.objective = qp.objective(x)
        rep.primal_residual = qp.violation(x)
        if y is not None:
            A, l, u = qp.stacked()
            kk = kkt_residuals(qp.P, qp.q, A, l, u, x, y)
            rep.dual_residual = kk.dual
            rep.duality_gap = duality_gap(A, l, u, x, y)
    return rep


def _admm(qp: QuadraticProgram, tol: float, max_iter: int):
    A, l, u = qp.stacked()
    return admm_solve(qp.P, qp.q, A, l, u, tol=tol, max_iter=max_iter)


def is_feasible(qp: QuadraticProgram, max_iter: int = DEFAULT_MAX_ITER) -> bool:
    """Whether the constraint set of ``qp`` is nonempty, decided by phase one of the simplex."""
    lp = LinearProgram(np.zeros(qp.n), qp.A_eq, qp.b_eq, qp.A_ub, qp.b_ub, qp.lo, qp.hi)
    status, _, _ = simplex_solve(lp, max_iter=max_iter)
    return status != INFEASIBLE


def solve_qp(qp: QuadraticProgram, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """Solve a convex QP; ``status == "optimal"`` means KKT residuals are within ``tol``.

    ADMM certificates of infeasibility can be slow to emerge, so a run that
    stalls past ``QP_PROBE_ITER`` iterations is checked for feasibility with
    the simplex before the full iteration budget is spent.
    """
    res = _admm(qp, tol, min(max_iter, QP_PROBE_ITER))
    if res.status == MAX_ITER and max_iter > QP_PROBE_ITER:
        if not is_feasible(qp):
            return _report(qp, INFEASIBLE, None, None, res.iterations, "admm+simplex", ["simplex phase one found no feasible point"])
        probe = res.iterations
        res = _admm(qp, tol, max_iter)
        res.iterations += probe
    if res.status == OPTIMAL:
        return _report(qp, OPTIMAL, res.x, res.y, res.iterations, "admm+polish" if res.polished else "admm")
    if res.status in (INFEASIBLE, UNBOUNDED):
        return _report(qp, res.status, None, None, res.iterations, "admm")
    return _report(qp, MAX_ITER, res.x, res.y, res.iterations, "admm", ["iteration cap reached"])


def solve_lp(lp: LinearProgram, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, method: str = "auto") -> SolveReport:
    """Solve an LP. ``method`` is ``auto`` (ADMM then simplex), ``admm`` or ``simplex``."""
    if method not in ("auto", "admm", "simplex"):
        raise ValueError(f"unknown LP method {method!r}")
    iters = 0
    notes = []
    if method in ("auto", "admm"):
        budget = max_iter if method == "admm" else min(max_iter, LP_ADMM_BUDGET)
        res = _admm(lp, tol, budget)
        iters = res.iterations
        if res.status == OPTIMAL:
            rep = _report(lp, OPTIMAL, res.x, res.y, iters, "admm+polish" if res.polished else "admm")
            if rep.duality_gap <= tol * (1 + abs(rep.objective)):
                return rep
            notes.append("admm point failed the duality-gap check")
        elif method == "admm":
            return _report(lp, res.status, res.x if res.status == MAX_ITER else None, None, iters, "admm")
        else:
            notes.append(f"admm status {res.status}; falling back to simplex")
    status, x, it = simplex_solve(lp, max_iter=max_iter)
    iters += it
    if status != OPTIMAL:
        return _report(lp, status, None, None, iters, "simplex", notes)
    y, stat_res = recover_duals(lp, x, active_tol=max(tol, 1e-9))
    rep = _report(lp, OPTIMAL, x, y, iters, "simplex", notes)
    if rep.primal_residual > max(tol, 1e-9) * 10:
        raise NumericalFailure(f"simplex solution violates constraints by {rep.primal_residual:.2e}")
    if stat_res > 1e-6:
        rep.messages.append(f"dual certificate residual {stat_res:.2e}")
    return rep
