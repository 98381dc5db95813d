"""Problem containers and the solve report shared by the LP/QP engines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"


def _as_matrix(M, ncols: int) -> np.ndarray:
    if M is None:
        return np.zeros((0, ncols))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, ncols))
    return M


def _as_vector(v, n: int, fill: float) -> np.ndarray:
    if v is None:
        return np.full(n, fill)
    out = np.asarray(v, dtype=float).reshape(-1)
    if out.shape[0] != n:
        raise ValidationError(f"expected a vector of length {n}, got {out.shape[0]}")
    return out


@dataclass
class QuadraticProgram:
    """minimize 0.5 x'Px + q'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi.

    ``P`` may be given as a dense matrix or as a 1-D diagonal.
    """

    P: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.shape[0]
        P = np.asarray(self.P, dtype=float)
        if P.ndim == 1:
            P = np.diag(P)
        if P.shape != (n, n):
            raise ValidationError(f"quadratic term must be {n}x{n}, got {P.shape}")
        if not np.allclose(P, P.T, atol=1e-12):
            raise ValidationError("quadratic term must be symmetric")
        self.P = P
        self.A_eq = _as_matrix(self.A_eq, n)
        self.A_ub = _as_matrix(self.A_ub, n)
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0], 0.0)
        self.b_ub = _as_vector(self.b_ub, self.A_ub.shape[0], 0.0)
        self.lo = _as_vector(self.lo, n, -np.inf)
        self.hi = _as_vector(self.hi, n, np.inf)
        for name in ("A_eq", "A_ub"):
            if getattr(self, name).shape[1] != n:
                raise ValidationError(f"{name} has {getattr(self, name).shape[1]} columns, expected {n}")
        for name in ("P", "q", "A_eq", "b_eq", "A_ub", "b_ub"):
            if np.isnan(getattr(self, name)).any():
                raise ValidationError(f"{name} contains NaN")
        if np.isnan(self.lo).any() or np.isnan(self.hi).any():
            raise ValidationError("bounds contain NaN")
        if (self.lo > self.hi).any():
            raise ValidationError("a lower bound exceeds its upper bound")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constraints in range form ``l <= A x <= u``: equalities, inequalities, then finite bounds."""
        n = self.n
        bounded = np.flatnonzero(np.isfinite(self.lo) | np.isfinite(self.hi))
        I = np.zeros((bounded.size, n))
        I[np.arange(bounded.size), bounded] = 1.0
        A = np.vstack([self.A_eq, self.A_ub, I])
        l = np.concatenate([self.b_eq, np.full(self.A_ub.shape[0], -np.inf), self.lo[bounded]])
        u = np.concatenate([self.b_eq, self.b_ub, self.hi[bounded]])
        return A, l, u

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint violation (infinity norm)."""
        parts = [0.0]
        if self.A_eq.shape[0]:
            parts.append(np.abs(self.A_eq @ x - self.b_eq).max())
        if self.A_ub.shape[0]:
            parts.append(np.maximum(self.A_ub @ x - self.b_ub, 0).max())
        parts.append(np.maximum(self.lo - x, 0).max(initial=0.0))
        parts.append(np.maximum(x - self.hi, 0).max(initial=0.0))
        return float(max(parts))


class LinearProgram(QuadraticProgram):
    """minimize c'x under the same constraint layout as :class:`QuadraticProgram`."""

    def __init__(self, c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, lo=None, hi=None):
        c = np.asarray(c, dtype=float).reshape(-1)
        super().__init__(np.zeros(c.shape[0]), c, A_eq, b_eq, A_ub, b_ub, lo, hi)

    @property
    def c(self) -> np.ndarray:
        return self.q


@dataclass
class SolveReport:
    status: str
    x: np.ndarray | None
    objective: float = float("nan")
    primal_residual: float = float("inf")
    dual_residual: float = float("inf")
    iterations: int = 0
    method: str = ""
    # multipliers for the range-form rows of QuadraticProgram.stacked(); positive on upper bounds
    y: np.ndarray | None = None
    duality_gap: float = float("nan")
    messages: list[str] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "duality_gap": self.duality_gap,
            "iterations": self.iterations,
            "method": self.method,
        }
