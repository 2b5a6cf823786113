"""Riccati terminal ingredients and N-step controllable sets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import IterLimit, NotStabilizable, Unsupported, ZeroTerminalSet
from .geometry import HPolytope, VPolytope
from .pclf import LinearSystem, pre_set


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray  # u = K x
    residual: float
    iterations: int = 0


def dare_residual(A, B, Q, R, P) -> float:
    S = B.T @ P @ B + R
    M = A.T @ P @ A - P + Q - A.T @ P @ B @ np.linalg.solve(S, B.T @ P @ A)
    return float(np.abs(M).max())


def solve_dare(sys: LinearSystem, Q, R, tol: float = 1e-12, max_iter: int = 100_000,
               blowup: float = 1e12) -> RiccatiSolution:
    """Value iteration on the Riccati map from ``P = Q``."""
    A, B = sys.A, sys.B
    Q = np.atleast_2d(np.asarray(Q, float))
    R = np.atleast_2d(np.asarray(R, float))
    if np.linalg.eigvalsh(R).min() <= 0:
        raise ValueError("R must be positive definite")
    P = Q.copy()
    for it in range(1, max_iter + 1):
        BtPA = B.T @ P @ A
        Pn = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(B.T @ P @ B + R, BtPA)
        Pn = 0.5 * (Pn + Pn.T)
        if not np.all(np.isfinite(Pn)) or np.abs(Pn).max() > blowup:
            raise NotStabilizable("Riccati iteration diverges")
        step = np.abs(Pn - P).max()
        P = Pn
        if step <= tol * max(1.0, np.abs(P).max()):
            break
    else:
        raise IterLimit("Riccati iteration did not converge")
    K = -np.linalg.solve(B.T @ P @ B + R, B.T @ P @ A)
    rho = np.max(np.abs(np.linalg.eigvals(A + B @ K)))
    if rho >= 1.0:
        raise NotStabilizable(f"closed loop spectral radius {rho:.6g} >= 1")
    return RiccatiSolution(P, K, dare_residual(A, B, Q, R, P), it)


def restricted_dare(sys: LinearSystem, Q, R, active_input_columns) -> RiccatiSolution:
    """Riccati solution using only the selected input columns (0-based).

    The gain is padded with zero rows for the unused inputs.
    """
    cols = sorted(int(c) for c in active_input_columns)
    R = np.atleast_2d(np.asarray(R, float))
    sub = LinearSystem(sys.A, sys.B[:, cols])
    sol = solve_dare(sub, Q, R[np.ix_(cols, cols)])
    K = np.zeros((sys.m, sys.n))
    K[cols] = sol.K
    return RiccatiSolution(sol.P, K, sol.residual, sol.iterations)


@dataclass
class TerminalSet:
    """Ellipsoid ``{x' P x <= alpha}`` with its feedback, or a polytope."""

    kind: str
    P: np.ndarray | None = None
    alpha: float = np.nan
    K: np.ndarray | None = None
    polytope: HPolytope | None = None

    def contains(self, x, tol: float = 1e-9):
        x = np.asarray(x, float)
        if self.kind == "polytope":
            return geo.contains(self.polytope, x, tol)
        if x.ndim == 1:
            return bool(x @ self.P @ x <= self.alpha * (1 + tol))
        return np.einsum("ij,jk,ik->i", x, self.P, x) <= self.alpha * (1 + tol)

    def support(self, g) -> float:
        """``max g'x`` over the ellipsoid."""
        g = np.asarray(g, float)
        return float(np.sqrt(self.alpha * g @ np.linalg.solve(self.P, g)))


def terminal_ellipsoid(sol: RiccatiSolution, X: HPolytope, U: HPolytope,
                       within: HPolytope | None = None) -> TerminalSet:
    """Largest level set of ``x'Px`` on which ``x`` in X and ``K x`` in U.

    ``within`` adds further state rows (for instance a set the ellipsoid
    must lie inside).
    """
    G = [X.H, U.H @ sol.K]
    g = [X.h, U.h]
    if within is not None:
        G.append(within.H)
        g.append(within.h)
    G = np.vstack(G)
    off = np.concatenate(g)
    Pinv = np.linalg.inv(sol.P)
    quad = np.einsum("ij,jk,ik->i", G, Pinv, G)
    live = quad > 1e-14 * max(1.0, np.abs(G).max() ** 2)
    if np.any(off[live] <= 0):
        raise ZeroTerminalSet("a constraint excited by the feedback passes through the origin")
    alpha = float(np.min(off[live] ** 2 / quad[live]))
    return TerminalSet("ellipsoid", P=sol.P, alpha=alpha, K=sol.K)


def ellipse_boundary(ts: TerminalSet, points: int) -> np.ndarray:
    """``points`` boundary points at equal angles in whitened coordinates (k x 2)."""
    L = np.linalg.cholesky(ts.P / ts.alpha)
    th = 2 * np.pi * np.arange(points) / points
    circle = np.vstack([np.cos(th), np.sin(th)])
    return np.linalg.solve(L.T, circle).T


def polytopic_inner_approx(ts: TerminalSet, points: int = 1000) -> HPolytope:
    """Inscribed polygon through equally spaced ellipse boundary points."""
    if ts.kind != "ellipsoid":
        raise ValueError("needs an ellipsoidal terminal set")
    if ts.P.shape[0] != 2:
        raise Unsupported("inner approximation is implemented for n = 2")
    pts = ellipse_boundary(ts, points)
    poly = geo.hrep_from_vrep(VPolytope(pts.T))
    poly._vertices = pts.T.copy()
    return poly


def controllable_set_N(sys: LinearSystem, X: HPolytope, U: HPolytope, target: HPolytope,
                       N: int, history: list | None = None) -> HPolytope:
    """States that can be steered into ``target`` in ``N`` admissible steps."""
    T = target
    if history is not None:
        history.append(T)
    for _ in range(N):
        P = pre_set(sys, T, U)
        H, h = geo._prune(np.vstack([X.H, P.H]), np.concatenate([X.h, P.h]))
        T = HPolytope(H, h, validate=False)
        if history is not None:
            history.append(T)
    return T


def tilde_set_membership(controller, x) -> bool:
    """Whether the PCLF-constrained Riccati problem ends inside the ellipsoid.

    ``controller`` must provide ``solve_tilde(x)`` and an ellipsoidal
    ``xf`` terminal set.
    """
    res = controller.solve_tilde(x)
    if not res.ok:
        return False
    return bool(controller.xf.contains(res.phi[-1]))


def tilde_grid(controller, lo, hi, size: int = 200):
    """Evaluate :func:`tilde_set_membership` on a ``size x size`` grid.

    Returns ``(xs, ys, mask)`` with ``mask[i, j]`` for the point
    ``(xs[j], ys[i])``. Points outside the PCLF set are reported as False
    without solving.
    """
    xs = np.linspace(lo[0], hi[0], size)
    ys = np.linspace(lo[1], hi[1], size)
    F = controller.F
    mask = np.zeros((size, size), dtype=bool)
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            p = np.array([x, y])
            if np.max(F @ p) <= 1.0:
                mask[i, j] = tilde_set_membership(controller, p)
    return xs, ys, mask
