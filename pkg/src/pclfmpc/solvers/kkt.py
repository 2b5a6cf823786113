"""Independent optimality checker.

Multipliers are recomputed from scratch by nonnegative least squares on the
constraints that are active at the candidate point, so this shares no code
with the solvers it audits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .problems import LpProblem, QpProblem


@dataclass
class KktReport:
    stationarity: float
    primal: float
    complementarity: float

    def ok(self, tol: float) -> bool:
        return max(self.stationarity, self.primal, self.complementarity) <= tol


def _check(grad, G, h, E, e, x, active_tol):
    slack = h - G @ x if G.shape[0] else np.zeros(0)
    primal = max(
        float(np.maximum(-slack, 0).max(initial=0.0)),
        float(np.abs(E @ x - e).max(initial=0.0)) if E.shape[0] else 0.0,
    )
    act = np.flatnonzero(slack <= active_tol)
    # grad + G_act' mu + E' (nu+ - nu-) = 0, mu >= 0
    cols = [G[act].T, E.T, -E.T]
    Amat = np.hstack(cols) if (act.size or E.shape[0]) else np.zeros((x.shape[0], 0))
    if Amat.shape[1]:
        mult, _ = nnls(Amat, -grad, maxiter=50 * Amat.shape[1])
        resid = grad + Amat @ mult
        mu = mult[: act.size]
        comp = float(np.abs(mu * slack[act]).max(initial=0.0))
    else:
        resid = grad
        comp = 0.0
    scale = 1.0 + np.abs(grad).max(initial=0.0)
    return KktReport(float(np.abs(resid).max(initial=0.0)) / scale, primal, comp)


def check_qp(p: QpProblem, x, active_tol: float = 1e-7) -> KktReport:
    x = np.asarray(x, dtype=float)
    grad = p.H @ x + p.g
    G, h = p.A_ub, p.b_ub
    norms = np.linalg.norm(G, axis=1) if G.shape[0] else np.ones(0)
    norms = np.where(norms > 0, norms, 1.0)
    return _check(grad, G / norms[:, None], h / norms, p.A_eq, p.b_eq, x, active_tol)


def check_lp(p: LpProblem, x, active_tol: float = 1e-7) -> KktReport:
    """Bounds are folded into the inequality block before checking."""
    x = np.asarray(x, dtype=float)
    n = p.n
    rows = [p.A_ub]
    rhs = [p.b_ub]
    fin_hi = np.isfinite(p.hi)
    fin_lo = np.isfinite(p.lo)
    rows.append(np.eye(n)[fin_hi])
    rhs.append(p.hi[fin_hi])
    rows.append(-np.eye(n)[fin_lo])
    rhs.append(-p.lo[fin_lo])
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    norms = np.linalg.norm(G, axis=1) if G.shape[0] else np.ones(0)
    norms = np.where(norms > 0, norms, 1.0)
    return _check(p.c.copy(), G / norms[:, None], h / norms, p.A_eq, p.b_eq, x, active_tol)
