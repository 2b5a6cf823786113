"""Maximal lambda-contractive polytopes and the polyhedral Lyapunov function
``V_p(x) = max(F x)^2`` built on them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import (
    DimensionMismatch,
    EmptyDoa,
    NotControlledInvariant,
    OutsideDoa,
    SingularSector,
    Unsupported,
)
from .geometry import HPolytope, VPolytope
from .solvers import LpProblem, Status, solve_lp

ROW_CAP = 512


@dataclass(frozen=True)
class LinearSystem:
    """``x+ = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch("A must be square")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch("B must have as many rows as A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u):
        return self.A @ x + self.B @ u

    def stabilizable(self) -> bool:
        """True when the LQR gain (Q = I, R = I) makes ``A + B K`` Schur."""
        from .terminal import solve_dare
        from .errors import NotStabilizable, IterLimit

        try:
            solve_dare(self, np.eye(self.n), np.eye(self.m))
        except (NotStabilizable, IterLimit):
            return False
        return True


@dataclass
class Pclf:
    """Gauge ``max(F x)`` of the polytope ``{x | F x <= 1}``.

    ``lam`` is the contraction factor the set was built for; ``converged``
    and ``iterations`` describe the construction.
    """

    F: np.ndarray
    lam: float = np.nan
    iterations: int = 0
    converged: bool = True
    _set: HPolytope | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))

    @property
    def r(self) -> int:
        return self.F.shape[0]

    @property
    def n(self) -> int:
        return self.F.shape[1]

    @property
    def set(self) -> HPolytope:
        if self._set is None:
            self._set = HPolytope(self.F, np.ones(self.r))
        return self._set

    def vertices(self) -> np.ndarray:
        return self.set.vertices()

    def first_order(self, x):
        return eval_vp_first_order(self, x)

    def value(self, x):
        return eval_vp(self, x)

    def to_dict(self) -> dict:
        return {
            "F": self.F.tolist(),
            "lam": self.lam,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pclf":
        return cls(np.asarray(d["F"], float), d["lam"], d["iterations"], d["converged"])


def eval_vp_first_order(p: Pclf, x):
    """``max(F x)``; vectorized over the rows of a 2-D ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(np.max(p.F @ x))
    return (x @ p.F.T).max(axis=1)


def eval_vp(p: Pclf, x):
    return eval_vp_first_order(p, x) ** 2


# ---------------------------------------------------------------------------
# maximal contractive set


def pre_set(sys: LinearSystem, S: HPolytope, U: HPolytope | None, lam: float = 1.0,
            tol: float = geo.TOL) -> HPolytope:
    """``{x | exists u in U: A x + B u in lam * S}``."""
    HA = S.H @ sys.A
    if sys.m == 0 or U is None:
        return HPolytope(HA, lam * S.h, validate=False, tol=tol)
    H = np.vstack([
        np.hstack([HA, S.H @ sys.B]),
        np.hstack([np.zeros((U.q, sys.n)), U.H]),
    ])
    h = np.concatenate([lam * S.h, U.h])
    H, h = geo._normalize(H, h, tol)
    return geo.project(HPolytope(H, h, validate=False, tol=tol), sys.n, tol)


def _inside(P: HPolytope, Q: HPolytope, tol: float) -> bool:
    """``P`` subset of ``Q`` within ``tol`` (vertices for small d)."""
    return geo.contains_set(Q, P, tol)


def max_contractive_set(sys: LinearSystem, X: HPolytope, U: HPolytope | None, eps: float,
                        max_iter: int = 500, tol: float = 1e-8,
                        row_cap: int = ROW_CAP, history: list | None = None) -> Pclf:
    """Largest ``(1 - eps)``-contractive subset of ``X`` as a :class:`Pclf`.

    Iterates ``S <- S & Pre_lam(S)`` from ``S = X`` until consecutive
    iterates contain each other within ``tol``. When ``history`` is a list,
    every iterate is appended to it.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if X.d != sys.n:
        raise DimensionMismatch("X dimension differs from the state dimension")
    lam = 1.0 - eps
    S = HPolytope(X.H, X.h, validate=False)
    if history is not None:
        history.append(S)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        P = pre_set(sys, S, U, lam)
        H, h = geo._prune(np.vstack([S.H, P.H]), np.concatenate([S.h, P.h]))
        S_next = HPolytope(H, h, validate=False)
        try:
            _, radius = geo.chebyshev_center(S_next)
        except geo.EmptySet as exc:
            raise EmptyDoa("contractive iteration became empty") from exc
        if radius <= 1e-9:
            raise EmptyDoa("contractive iteration lost its interior")
        if history is not None:
            history.append(S_next)
        done = _inside(S, S_next, tol)
        S = S_next
        if done:
            converged = True
            break
        if S.q > row_cap:
            break
    if np.any(S.h <= 0):
        raise EmptyDoa("origin is not interior to the contractive set")
    F = S.H / S.h[:, None]
    return Pclf(F, lam=lam, iterations=it, converged=converged)


# ---------------------------------------------------------------------------
# decay-rate LP


@dataclass
class LambdaTestResult:
    lambda_star: float
    U: np.ndarray  # m x v vertex controls
    W: np.ndarray  # v x v, A X + B U = X W, 1'W = lambda* 1'
    per_vertex: np.ndarray

    def __iter__(self):
        yield self.lambda_star
        yield self.U
        yield self.W


def _zero_combination(X):
    v = X.shape[1]
    lp = LpProblem(np.zeros(v), A_eq=np.vstack([X, np.ones((1, v))]),
                   b_eq=np.concatenate([np.zeros(X.shape[0]), [1.0]]), lo=np.zeros(v))
    res = solve_lp(lp)
    if not res.ok:
        raise NotControlledInvariant("origin is not inside the polytope")
    return res.x


def lambda_test(V: VPolytope, sys: LinearSystem, U: HPolytope | None,
                tol: float = 1e-9) -> LambdaTestResult:
    """Smallest common decay rate of the polytope with vertex matrix ``X``.

    The joint LP ``min lam : A X + B U = X W, W >= 0, 1'W = lam 1', U_j in U``
    splits by columns: each vertex gets ``min 1'w : X w - B u = A x_j``.
    The joint optimum is the largest per-vertex value; the other columns
    are padded up to it with a nonnegative combination ``c`` of vertices
    summing to the origin.
    """
    X = V.vertices
    n, v = X.shape
    if n != sys.n:
        raise DimensionMismatch("vertex dimension differs from the state dimension")
    m = sys.m if U is not None else 0
    AX = sys.A @ X
    lam = np.zeros(v)
    W = np.zeros((v, v))
    Um = np.zeros((m, v))
    cost = np.concatenate([np.ones(v), np.zeros(m)])
    lo = np.concatenate([np.zeros(v), np.full(m, -np.inf)])
    A_eq = np.hstack([X, -sys.B[:, :m]]) if m else X
    A_ub = np.hstack([np.zeros((U.q, v)), U.H]) if m else np.zeros((0, v))
    b_ub = U.h if m else np.zeros(0)
    for j in range(v):
        res = solve_lp(LpProblem(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=AX[:, j], lo=lo),
                       tol=tol)
        if res.status is Status.INFEASIBLE:
            raise NotControlledInvariant(f"vertex {j} cannot be mapped into the set")
        if not res.ok:
            raise NotControlledInvariant(f"decay LP at vertex {j}: {res.status.value}")
        W[:, j] = res.x[:v]
        Um[:, j] = res.x[v:]
        lam[j] = res.objective
    lam_star = float(lam.max())
    if lam_star > 1.0 + 1e3 * tol:
        raise NotControlledInvariant(f"decay rate {lam_star:.6g} exceeds one")
    gap = lam_star - lam
    if np.any(gap > 0):
        c = _zero_combination(X)
        W += np.outer(c, gap)
    return LambdaTestResult(lam_star, Um, W, lam)


# ---------------------------------------------------------------------------
# certificate constants


def alpha_bounds(p: Pclf):
    """``(alpha1, alpha2)`` with ``alpha1 |x|^2 <= V_p(x) <= alpha2 |x|^2``."""
    V = p.vertices()
    alpha1 = 1.0 / float(np.max(np.sum(V * V, axis=0)))
    alpha2 = float(np.max(np.sum(p.F * p.F, axis=1)))
    return alpha1, alpha2


@dataclass
class PclfCertificate:
    lam: float
    alpha1: float
    alpha2: float
    alpha3: float
    c: float
    beta_star: float
    lam_q: float
    lam_r: float
    level_table: list = field(default_factory=list)  # (s, lambda*(s), beta*(s)), s ascending
    lam_verified: float = np.nan

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["level_table"] = [list(map(float, row)) for row in self.level_table]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PclfCertificate":
        d = dict(d)
        d["level_table"] = [tuple(row) for row in d["level_table"]]
        return cls(**d)


def certificate(p: Pclf, sys: LinearSystem, U: HPolytope | None, Q, R,
                c_override: float | None = 1.0, levels: int = 20,
                smallest_level: float = 1e-3) -> PclfCertificate:
    """Homogeneity, decay and terminal-weight constants for ``p``.

    With ``c_override=None`` the vertex-gain bound is used for ``c``.
    """
    Q = np.atleast_2d(np.asarray(Q, float))
    R = np.atleast_2d(np.asarray(R, float))
    lam = p.lam
    alpha1, alpha2 = alpha_bounds(p)
    alpha3 = (1.0 - lam ** 2) * alpha1
    c = vertex_gain_bound(p, sys, U) if c_override is None else float(c_override)
    lam_q = float(np.linalg.eigvalsh(Q).max())
    lam_r = float(np.linalg.eigvalsh(R).max()) if R.size else 0.0
    num = lam_q + c ** 2 * lam_r
    beta_star = num / alpha3

    V = VPolytope(p.vertices())
    scales = np.geomspace(smallest_level, 1.0, levels)
    raw = np.array([lambda_test(V.scaled(s), sys, U).lambda_star for s in scales])
    mono = np.maximum.accumulate(raw)
    table = [(float(s), float(l), float(num / (alpha1 * (1.0 - l ** 2))))
             for s, l in zip(scales, mono)]
    return PclfCertificate(
        lam=lam, alpha1=alpha1, alpha2=alpha2, alpha3=alpha3, c=c,
        beta_star=beta_star, lam_q=lam_q, lam_r=lam_r, level_table=table,
        lam_verified=float(raw[-1]),
    )


def vertex_gain_bound(p: Pclf, sys: LinearSystem, U: HPolytope | None) -> float:
    """Largest spectral norm of the sector gains ``U_h X_h^-1``.

    Sectors are the simplices spanned by the origin and consecutive vertices.
    """
    if p.n > 2:
        raise Unsupported("sector gains are implemented for n <= 2")
    V = p.vertices()
    res = lambda_test(VPolytope(V), sys, U)
    Um = res.U
    if p.n == 1:
        return float(np.max(np.abs(Um[:, :] / V[0][None, :]).max(axis=0)))
    ang = np.arctan2(V[1], V[0])
    order = np.argsort(ang)
    V, Um = V[:, order], Um[:, order]
    c = 0.0
    v = V.shape[1]
    for k in range(v):
        j = (k + 1) % v
        Xh = V[:, [k, j]]
        if abs(np.linalg.det(Xh)) <= 1e-12 * max(1.0, np.abs(Xh).max() ** 2):
            raise SingularSector(f"vertices {k} and {j} are collinear with the origin")
        K = Um[:, [k, j]] @ np.linalg.inv(Xh)
        c = max(c, float(np.linalg.norm(K, 2)))
    return c


def beta_star_at(cert: PclfCertificate, p: Pclf, x, tol: float = 1e-6) -> float:
    """Table weight for the smallest level at or above ``max(F x)``."""
    t = eval_vp_first_order(p, x)
    if t > 1.0 + tol:
        raise OutsideDoa(f"max(Fx) = {t:.6g} > 1")
    for s, _, beta in cert.level_table:
        if s >= t - 1e-12:
            return beta
    return cert.level_table[-1][2]
