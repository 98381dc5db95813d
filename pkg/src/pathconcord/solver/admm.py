"""Operator-splitting (ADMM) engine for convex QPs in range form.

Solves ``min 0.5 x'Px + q'x  s.t.  l <= Ax <= u`` by alternating a proximal
linear-system step in ``x`` with a projection of ``z = Ax`` onto the box
``[l, u]``. Once the iterates settle, a polish step fixes the guessed active
set and solves the equality-constrained KKT system directly, which lifts the
modest ADMM accuracy to machine precision on well-posed problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..errors import NumericalFailure

SIGMA = 1e-6
ALPHA = 1.6
RHO0 = 0.1
RHO_MIN, RHO_MAX = 1e-6, 1e6
EQ_RHO_FACTOR = 1e3
CHECK_EVERY = 25
RUIZ_ITERS = 15


@dataclass
class KKTResiduals:
    primal: float
    dual: float
    complementarity: float

    def within(self, tol: float) -> bool:
        return self.primal <= tol and self.dual <= tol and self.complementarity <= tol


def kkt_residuals(P, q, A, l, u, x, y) -> KKTResiduals:
    Ax = A @ x
    prim = max(
        float(np.max(l - Ax, initial=0.0)),
        float(np.max(Ax - u, initial=0.0)),
    )
    ypos = np.maximum(y, 0.0)
    yneg = np.minimum(y, 0.0)
    # a multiplier on an infinite bound is a sign error; charge it to the dual residual
    bad = np.concatenate([ypos[~np.isfinite(u)], -yneg[~np.isfinite(l)]])
    dual = float(np.abs(P @ x + q + A.T @ y).max(initial=0.0))
    dual = max(dual, float(bad.max(initial=0.0)))
    fu = np.isfinite(u)
    fl = np.isfinite(l)
    comp = max(
        float(np.abs(ypos[fu] * (u[fu] - Ax[fu])).max(initial=0.0)),
        float(np.abs(yneg[fl] * (Ax[fl] - l[fl])).max(initial=0.0)),
    )
    return KKTResiduals(prim, dual, comp)


def duality_gap(A, l, u, x, y) -> float:
    Ax = A @ x
    ypos = np.maximum(y, 0.0)
    yneg = np.minimum(y, 0.0)
    fu = np.isfinite(u) & (ypos > 0)
    fl = np.isfinite(l) & (yneg < 0)
    return float(np.sum(ypos[fu] * (u[fu] - Ax[fu])) + np.sum(yneg[fl] * (l[fl] - Ax[fl])))


@dataclass
class ADMMResult:
    status: str  # optimal | infeasible | unbounded | max_iter
    x: np.ndarray
    y: np.ndarray
    iterations: int
    polished: bool
    residuals: KKTResiduals


def _ruiz(P, q, A):
    n, m = P.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, qs, As = P.copy(), q.copy(), A.copy()
    for _ in range(RUIZ_ITERS):
        col = np.maximum(np.abs(Ps).max(axis=0, initial=0.0), np.abs(As).max(axis=0, initial=0.0))
        dk = 1.0 / np.sqrt(np.where(col < 1e-4, 1.0, np.minimum(col, 1e4)))
        row = np.abs(As).max(axis=1, initial=0.0) if m else np.zeros(0)
        ek = 1.0 / np.sqrt(np.where(row < 1e-4, 1.0, np.minimum(row, 1e4)))
        Ps = dk[:, None] * Ps * dk[None, :]
        As = ek[:, None] * As * dk[None, :]
        qs = dk * qs
        D *= dk
        E *= ek
    scale = max(np.abs(Ps).max(axis=0, initial=0.0).mean() if n else 0.0, np.abs(qs).max(initial=0.0))
    c = 1.0 / min(max(scale, 1e-4), 1e4)
    return D, E, c


def _factor(P, A, rho, sigma):
    K = P + sigma * np.eye(P.shape[0]) + A.T @ (rho[:, None] * A)
    try:
        return sla.cho_factor(K, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"KKT factorization failed: {exc}") from exc


def polish(P, q, A, l, u, x, y, z, tol):
    """Solve the KKT system on the active set guessed from ``(z, y)``.

    Returns ``(x, y)`` if the polished point satisfies the KKT conditions to
    ``tol``, otherwise ``None``.
    """
    n = P.shape[0]
    lower = (z - l < -y) & np.isfinite(l)
    upper = (u - z < y) & np.isfinite(u)
    eq = np.isfinite(l) & (l == u)
    lower |= eq
    upper &= ~eq
    act = np.flatnonzero(lower | upper)
    target = np.where(lower, l, u)[act]
    Aa = A[act]
    K = np.block([[P, Aa.T], [Aa, np.zeros((act.size, act.size))]])
    sol = np.concatenate([x, y[act]])
    rhs = np.concatenate([-q, target])
    for _ in range(3):
        res = rhs - K @ sol
        if np.abs(res).max(initial=0.0) <= 1e-14 * (1 + np.abs(rhs).max(initial=0.0)):
            break
        delta, *_ = np.linalg.lstsq(K, res, rcond=None)
        sol = sol + delta
    xp = sol[:n]
    yp = np.zeros_like(y)
    yp[act] = sol[n:]
    # drop multipliers with the wrong sign only if they are numerically zero
    kk = kkt_residuals(P, q, A, l, u, xp, yp)
    if kk.within(tol):
        return xp, yp, kk
    return None


def admm_solve(P, q, A, l, u, *, tol=1e-8, max_iter=200_000, polish_tol=None) -> ADMMResult:
    n, m = P.shape[0], A.shape[0]
    polish_tol = tol if polish_tol is None else polish_tol
    D, E, c = _ruiz(P, q, A)
    Ps = c * (D[:, None] * P * D[None, :])
    qs = c * D * q
    As = E[:, None] * A * D[None, :]
    ls = np.where(np.isfinite(l), E * l, -np.inf)
    us = np.where(np.isfinite(u), E * u, np.inf)

    eq_rows = np.isfinite(ls) & (ls == us)
    free_rows = ~np.isfinite(ls) & ~np.isfinite(us)

    def rho_vector(rho):
        r = np.full(m, rho)
        r[eq_rows] = min(rho * EQ_RHO_FACTOR, RHO_MAX)
        r[free_rows] = RHO_MIN
        return r

    rho = RHO0
    rvec = rho_vector(rho)
    fac = _factor(Ps, As, rvec, SIGMA)

    xs = np.zeros(n)
    zs = np.clip(np.zeros(m), ls, us)
    ys = np.zeros(m)

    def unscale(xs, ys, zs):
        return D * xs, E * ys / c, zs / E

    stage_eps = 1e-4
    last = None
    for it in range(1, max_iter + 1):
        x_prev, y_prev = xs, ys
        rhs = SIGMA * xs - qs + As.T @ (rvec * zs - ys)
        xt = sla.cho_solve(fac, rhs)
        zt = As @ xt
        xs = ALPHA * xt + (1 - ALPHA) * xs
        zr = ALPHA * zt + (1 - ALPHA) * zs
        zs = np.clip(zr + ys / rvec, ls, us)
        ys = ys + rvec * (zr - zs)

        if it % CHECK_EVERY and it != max_iter:
            continue
        if not np.all(np.isfinite(xs)) or not np.all(np.isfinite(ys)):
            raise NumericalFailure("ADMM iterates diverged")

        x, y, z = unscale(xs, ys, zs)
        Ax = A @ x
        r_prim = np.abs(Ax - z).max(initial=0.0)
        Px = P @ x
        Aty = A.T @ y
        r_dual = np.abs(Px + q + Aty).max(initial=0.0)
        n_prim = max(np.abs(Ax).max(initial=0.0), np.abs(z).max(initial=0.0))
        n_dual = max(np.abs(Px).max(initial=0.0), np.abs(Aty).max(initial=0.0), np.abs(q).max(initial=0.0))

        if r_prim <= stage_eps * (1 + n_prim) and r_dual <= stage_eps * (1 + n_dual):
            pol = polish(P, q, A, l, u, x, y, z, polish_tol)
            if pol is not None:
                xp, yp, kk = pol
                return ADMMResult("optimal", xp, yp, it, True, kk)
            kk = kkt_residuals(P, q, A, l, u, x, y)
            if kk.within(tol):
                return ADMMResult("optimal", x, y, it, False, kk)
            stage_eps = max(stage_eps * 0.1, 1e-13)

        # infeasibility certificates (scaled space, as in OSQP)
        dy = ys - y_prev
        dx = xs - x_prev
        ndy = np.abs(dy).max(initial=0.0)
        if ndy > 1e-12:
            Atdy = As.T @ dy
            yp_, yn_ = np.maximum(dy, 0), np.minimum(dy, 0)
            if (not np.any(yp_[~np.isfinite(us)] > 1e-12 * ndy)) and (not np.any(yn_[~np.isfinite(ls)] < -1e-12 * ndy)):
                support = np.sum(yp_[np.isfinite(us)] * us[np.isfinite(us)]) + np.sum(yn_[np.isfinite(ls)] * ls[np.isfinite(ls)])
                if np.abs(Atdy).max(initial=0.0) <= 1e-6 * ndy and support <= -1e-6 * ndy:
                    x, y, _ = unscale(xs, ys, zs)
                    return ADMMResult("infeasible", x, y, it, False, KKTResiduals(np.inf, np.inf, np.inf))
        ndx = np.abs(dx).max(initial=0.0)
        if ndx > 1e-12:
            Adx = As @ dx
            ok_dir = np.abs(Ps @ dx).max(initial=0.0) <= 1e-6 * ndx and qs @ dx <= -1e-6 * ndx
            fin_u, fin_l = np.isfinite(us), np.isfinite(ls)
            ok_dir = ok_dir and np.all(Adx[fin_u] <= 1e-6 * ndx) and np.all(Adx[fin_l] >= -1e-6 * ndx)
            if ok_dir:
                x, y, _ = unscale(xs, ys, zs)
                return ADMMResult("unbounded", x, y, it, False, KKTResiduals(np.inf, np.inf, np.inf))

        # residual balancing
        rp = r_prim / (n_prim + 1e-30)
        rd = r_dual / (n_dual + 1e-30)
        new_rho = float(np.clip(rho * np.sqrt(rp / (rd + 1e-30)), RHO_MIN, RHO_MAX))
        if new_rho > 5 * rho or new_rho < 0.2 * rho:
            rho = new_rho
            rvec = rho_vector(rho)
            fac = _factor(Ps, As, rvec, SIGMA)
        last = (x, y)

    x, y, z = unscale(xs, ys, zs)
    pol = polish(P, q, A, l, u, x, y, z, polish_tol)
    if pol is not None:
        xp, yp, kk = pol
        return ADMMResult("optimal", xp, yp, max_iter, True, kk)
    return ADMMResult("max_iter", x, y, max_iter, False, kkt_residuals(P, q, A, l, u, x, y))
