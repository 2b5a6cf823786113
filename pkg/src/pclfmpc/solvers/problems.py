from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"


def _mat(a, ncols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, ncols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.shape[1] != ncols:
        raise DimensionMismatch(f"expected {ncols} columns, got {a.shape[1]}")
    return a


def _vec(b, nrows: int) -> np.ndarray:
    if b is None:
        b = np.zeros(0)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != nrows:
        raise DimensionMismatch(f"expected {nrows} entries, got {b.shape[0]}")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand sides must be finite")
    return b


@dataclass
class LpProblem:
    """min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi.

    Bounds default to free variables.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.shape[0]
        self.A_ub = _mat(self.A_ub, n)
        self.b_ub = _vec(self.b_ub, self.A_ub.shape[0])
        self.A_eq = _mat(self.A_eq, n)
        self.b_eq = _vec(self.b_eq, self.A_eq.shape[0])
        self.lo = np.full(n, -np.inf) if self.lo is None else np.asarray(self.lo, float).reshape(-1)
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, float).reshape(-1)
        if self.lo.shape != (n,) or self.hi.shape != (n,):
            raise DimensionMismatch("bound vectors must match the cost length")
        if np.any(self.lo > self.hi):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass
class QpProblem:
    """min 0.5 x'Hx + g'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq."""

    H: np.ndarray
    g: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    const: float = 0.0

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = self.g.shape[0]
        self.H = np.asarray(self.H, dtype=float).reshape(n, n)
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10 * max(1.0, np.abs(self.H).max(initial=0.0)):
            raise ValueError("Hessian must be symmetric")
        self.H = 0.5 * (self.H + self.H.T)
        if n and np.linalg.eigvalsh(self.H).min() < -1e-8:
            raise ValueError("Hessian must be positive semidefinite")
        self.A_ub = _mat(self.A_ub, n)
        self.b_ub = _vec(self.b_ub, self.A_ub.shape[0])
        self.A_eq = _mat(self.A_eq, n)
        self.b_eq = _vec(self.b_eq, self.A_eq.shape[0])

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x + self.const)


@dataclass
class SolveStatus:
    status: Status
    x: np.ndarray | None = None
    objective: float | None = None
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    iterations: int = 0
    # multipliers: ineq >= 0, eq free; sign convention grad + A_ub' mu + A_eq' nu (+ bound terms) = 0
    mu: np.ndarray | None = None
    nu: np.ndarray | None = None

    def __post_init__(self):
        if (self.x is not None) != (self.status is Status.OPTIMAL):
            raise ValueError("solution present iff status is Optimal")

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL
