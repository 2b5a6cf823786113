"""Primal active-set method for dense convex QPs.

Each iteration solves the equality-constrained subproblem on the current
working set with a null-space method (QR of the working-set normals). The
reduced Hessian gets a ``1e-10`` regularization floor. Directions of zero
curvature along which the objective decreases are followed as rays, cut back
by the ratio test; an uncut ray means the problem is unbounded.

A feasible starting point comes from a phase-1 problem solved by the same
engine:  min t  s.t.  A_ub x - t <= b_ub,  A_eq x = b_eq,  t >= 0.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular, cho_factor, cho_solve, LinAlgError

from .problems import QpProblem, SolveStatus, Status

REG_FLOOR = 1e-10
BLAND_AFTER = 30
FLAT_TOL = 1e-9


def _subproblem_step(Z, H, grad, hzero):
    """Step in the null space of the working set.

    Returns ``(p, ray)``. If the reduced objective decreases along a direction
    of zero curvature, ``p`` is that descent ray (to be scaled by the ratio
    test); otherwise ``p`` is the regularized Newton step.
    """
    rz = -(Z.T @ grad)
    gscale = 1.0 + np.abs(grad).max(initial=0.0)
    if hzero:
        if np.abs(rz).max() > FLAT_TOL * gscale:
            return Z @ rz, True
        return np.zeros(Z.shape[0]), False
    Hz = Z.T @ H @ Z
    hscale = max(1.0, np.abs(Hz).max())
    try:
        c, low = cho_factor(Hz, check_finite=False)
        if np.abs(np.diag(c)).min() ** 2 > FLAT_TOL * hscale:
            Hr = Hz + REG_FLOOR * np.eye(Hz.shape[0])
            return Z @ cho_solve(cho_factor(Hr, check_finite=False), rz, check_finite=False), False
    except LinAlgError:
        pass
    w, V = np.linalg.eigh(Hz)
    flat = w <= FLAT_TOL * hscale
    rf = V[:, flat].T @ rz
    if flat.any() and np.abs(rf).max() > FLAT_TOL * gscale:
        return Z @ (V[:, flat] @ rf), True
    curved = ~flat
    pz = V[:, curved] @ ((V[:, curved].T @ rz) / (w[curved] + REG_FLOOR))
    return Z @ pz, False


class _Result:
    def __init__(self, status, x, work, lam, iterations):
        self.status = status
        self.x = x
        self.work = work
        self.lam = lam
        self.iterations = iterations


def _active_set(H, g, G, h, E, e, x, work, tol, max_iter) -> _Result:
    """Run the primal active-set iteration from the feasible point ``x``.

    ``work`` lists inequality indices whose normals, together with ``E``, are
    linearly independent. The regularization enters the reduced Hessian only;
    gradients use the true ``H`` so the fixed point is the exact optimum.
    """
    n = x.shape[0]
    n_eq = E.shape[0]
    hzero = not np.any(H)
    work = list(work)
    degenerate = 0
    at_min = False  # x minimizes over the current working set
    for it in range(max_iter + 1):
        Aw = np.vstack([E, G[work]]) if work else E
        k = Aw.shape[0]
        grad = H @ x + g
        if k:
            Qf, Rf = np.linalg.qr(Aw.T, mode="complete")
            Y, Z, R = Qf[:, :k], Qf[:, k:], Rf[:k, :k]
        else:
            Y, Z, R = np.zeros((n, 0)), np.eye(n), np.zeros((0, 0))

        ray = False
        if Z.shape[1] and not at_min:
            p, ray = _subproblem_step(Z, H, grad, hzero)
        else:
            p = np.zeros(n)

        xscale = 1.0 + np.abs(x).max(initial=0.0)
        if at_min or (not ray and np.abs(p).max(initial=0.0) <= 1e-11 * xscale):
            at_min = False
            lam = solve_triangular(R, -(Y.T @ grad)) if k else np.zeros(0)
            lam_in = lam[n_eq:]
            neg = np.flatnonzero(lam_in < -tol * (1.0 + np.abs(grad).max(initial=0.0)))
            if neg.size == 0:
                return _Result(Status.OPTIMAL, x, work, lam, it)
            if it >= max_iter:
                break
            if degenerate >= BLAND_AFTER:
                drop = min(neg, key=lambda j: work[j])
            else:
                drop = neg[np.argmin(lam_in[neg])]
            work.pop(int(drop))
            continue
        at_min = False

        if it >= max_iter:
            break
        Gp = G @ p
        slack = np.maximum(h - G @ x, 0.0)
        in_work = np.zeros(G.shape[0], dtype=bool)
        in_work[work] = True
        pn = np.abs(p).max()
        block = (~in_work) & (Gp > 1e-12 * pn * (1.0 + np.abs(G).max(initial=0.0)))
        alpha = np.inf if ray else 1.0
        hit = None
        if block.any():
            idx = np.flatnonzero(block)
            ratios = slack[idx] / Gp[idx]
            amin = ratios.min()
            if amin < alpha:
                ties = idx[ratios <= amin + 1e-14 * max(1.0, amin)]
                if degenerate >= BLAND_AFTER:
                    hit = int(ties[0])
                else:
                    hit = int(ties[np.argmax(Gp[ties] / np.linalg.norm(G[ties], axis=1))])
                alpha = max(amin, 0.0)
        if hit is None and ray:
            return _Result(Status.UNBOUNDED, x, work, None, it)
        x = x + alpha * p
        if hit is not None:
            work.append(hit)
            degenerate = degenerate + 1 if alpha * pn < 1e-12 * xscale else 0
        else:
            degenerate = 0
            at_min = True
    return _Result(Status.ITER_LIMIT, x, work, None, max_iter)


def _independent_subset(E, G, rows, tol=1e-9):
    """Greedily pick rows of ``G`` that stay linearly independent of ``E``."""
    keep = []
    basis = E.copy()
    rank = np.linalg.matrix_rank(basis) if basis.shape[0] else 0
    for i in rows:
        trial = np.vstack([basis, G[i]])
        r = np.linalg.matrix_rank(trial, tol=tol)
        if r > rank:
            keep.append(i)
            basis = trial
            rank = r
    return keep


def find_feasible(G, h, E, e, x0=None, tol=1e-9, max_iter=5000):
    """Phase 1: return ``(x, working_set)`` or ``(None, None)`` if infeasible.

    Rows of ``G`` should be normalized so that ``tol`` is an absolute distance.
    """
    n = G.shape[1] if G.size else E.shape[1]
    if x0 is None:
        x0 = np.linalg.lstsq(E, e, rcond=None)[0] if E.shape[0] else np.zeros(n)
    x0 = np.asarray(x0, dtype=float)
    if E.shape[0] and np.abs(E @ x0 - e).max() > tol:
        x0 = x0 + np.linalg.lstsq(E, e - E @ x0, rcond=None)[0]
        if np.abs(E @ x0 - e).max() > 1e3 * tol * (1 + np.abs(e).max()):
            return None, None
    viol = (G @ x0 - h) if G.shape[0] else np.zeros(0)
    if viol.size == 0 or viol.max() <= tol:
        active = np.flatnonzero(viol >= -tol) if viol.size else []
        return x0, _independent_subset(E, G, active)

    m = G.shape[0]
    G1 = np.zeros((m + 1, n + 1))
    G1[:m, :n] = G
    G1[:m, n] = -1.0
    G1[m, n] = -1.0
    h1 = np.concatenate([h, [0.0]])
    E1 = np.hstack([E, np.zeros((E.shape[0], 1))])
    t0 = viol.max()
    z = np.concatenate([x0, [t0]])
    H1 = np.zeros((n + 1, n + 1))
    g1 = np.zeros(n + 1)
    g1[n] = 1.0
    w0 = [int(np.argmax(viol))]
    res = _active_set(H1, g1, G1, h1, E1, e, z, w0, tol, max_iter)
    if res.status is not Status.OPTIMAL or res.x[n] > tol:
        return None, None
    x = res.x[:n]
    active = [i for i in res.work if i < m]
    return x, _independent_subset(E, G, active)


def solve_qp(p: QpProblem, tol: float = 1e-9, max_iter: int = 5000, x0=None) -> SolveStatus:
    """Solve ``p`` with the primal active-set method.

    ``x0`` is an optional warm start; if it is feasible phase 1 is skipped.
    """
    G, h, E, e = p.A_ub, p.b_ub, p.A_eq, p.b_eq
    norms = np.linalg.norm(G, axis=1) if G.shape[0] else np.zeros(0)
    zero = norms <= 1e-14
    if np.any(h[zero] < -tol):
        return SolveStatus(Status.INFEASIBLE)
    scale = np.where(zero, 1.0, norms)
    Gs = G / scale[:, None]
    hs = h / scale
    Gs[zero] = 0.0
    hs[zero] = np.maximum(hs[zero], 0.0)

    x, work = find_feasible(Gs, hs, E, e, x0=x0, tol=tol, max_iter=max_iter)
    if x is None:
        return SolveStatus(Status.INFEASIBLE)

    res = _active_set(p.H, p.g, Gs, hs, E, e, x, work, tol, max_iter)
    if res.status is not Status.OPTIMAL:
        return SolveStatus(res.status, iterations=res.iterations)

    x = res.x
    n_eq = E.shape[0]
    mu = np.zeros(G.shape[0])
    if res.work:
        mu[res.work] = np.maximum(res.lam[n_eq:], 0.0) / scale[res.work]
    nu = res.lam[:n_eq].copy() if n_eq else np.zeros(0)
    return SolveStatus(
        Status.OPTIMAL,
        x=x,
        objective=p.objective(x),
        active=np.array(sorted(res.work), dtype=int),
        iterations=res.iterations,
        mu=mu,
        nu=nu,
    )
