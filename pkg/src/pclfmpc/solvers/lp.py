"""Dense bounded-variable revised simplex.

The problem is brought to the form ``M y = rhs, lo <= y <= hi`` by adding one
slack per inequality row. Nonbasic variables sit at a finite bound (or at zero
when free). A crash basis uses slacks wherever they are feasible and
artificial columns elsewhere; phase 1 drives the artificials to zero.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve, LinAlgWarning
import warnings

from .problems import LpProblem, SolveStatus, Status

PIVOT_TOL = 1e-9
BLAND_AFTER = 50  # consecutive degenerate pivots before switching to Bland's rule


class _Tableau:
    def __init__(self, M, rhs, cost, lo, hi, x, basis):
        self.M = M
        self.rhs = rhs
        self.cost = cost
        self.lo = lo
        self.hi = hi
        self.x = x
        self.basis = basis
        self.iterations = 0

    def _factor(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            try:
                return lu_factor(self.M[:, self.basis], check_finite=False)
            except (LinAlgWarning, ValueError):
                return None

    def _recompute_basic(self, lu):
        nonbasic = np.ones(self.M.shape[1], dtype=bool)
        nonbasic[self.basis] = False
        r = self.rhs - self.M[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = lu_solve(lu, r, check_finite=False)

    def run(self, tol: float, max_iter: int) -> Status:
        m, ntot = self.M.shape
        degenerate = 0
        while True:
            lu = self._factor()
            if lu is None:
                raise np.linalg.LinAlgError("singular basis")
            self._recompute_basic(lu)
            y = lu_solve(lu, self.cost[self.basis], trans=1, check_finite=False)
            d = self.cost - self.M.T @ y
            d[self.basis] = 0.0
            can_up = self.x < self.hi - tol
            can_down = self.x > self.lo + tol
            elig = ((d < -tol) & can_up) | ((d > tol) & can_down)
            elig[self.basis] = False
            if not elig.any():
                self.y = y
                self.d = d
                return Status.OPTIMAL
            if self.iterations >= max_iter:
                return Status.ITER_LIMIT
            self.iterations += 1
            cand = np.flatnonzero(elig)
            if degenerate >= BLAND_AFTER:
                q = cand[0]
            else:
                q = cand[np.argmax(np.abs(d[cand]))]
            sigma = 1.0 if d[q] < 0 else -1.0
            col = lu_solve(lu, self.M[:, q], check_finite=False)
            delta = -sigma * col  # change of basic vars per unit step
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            ratios = np.full(m, np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lob[dec]) / (-delta[dec])
                ratios[inc] = (hib[inc] - xb[inc]) / delta[inc]
            ratios = np.where(np.isnan(ratios), np.inf, np.maximum(ratios, 0.0))
            t_flip = self.hi[q] - self.lo[q]
            t_min = ratios.min() if m else np.inf
            if not np.isfinite(t_min) and not np.isfinite(t_flip):
                return Status.UNBOUNDED
            if t_flip <= t_min:
                self.x[q] += sigma * t_flip
                self.x[self.basis] += t_flip * delta
                degenerate = 0
                continue
            ties = np.flatnonzero(ratios <= t_min + 1e-12)
            if degenerate >= BLAND_AFTER:
                r = ties[np.argmin(self.basis[ties])]
            else:
                r = ties[np.argmax(np.abs(delta[ties]))]
            leave = self.basis[r]
            self.x[q] += sigma * t_min
            self.x[self.basis] += t_min * delta
            self.x[leave] = self.lo[leave] if delta[r] < 0 else self.hi[leave]
            self.basis[r] = q
            degenerate = degenerate + 1 if t_min < 1e-12 else 0


def _initial_point(lo, hi):
    x = np.zeros(lo.shape[0])
    fin_lo = np.isfinite(lo)
    fin_hi = np.isfinite(hi)
    x[fin_lo] = lo[fin_lo]
    only_hi = ~fin_lo & fin_hi
    x[only_hi] = hi[only_hi]
    return x


def solve_lp(p: LpProblem, tol: float = 1e-9, max_iter: int = 20000) -> SolveStatus:
    """Solve ``p`` and return a :class:`SolveStatus`.

    On optimality the reduced costs are sign-feasible within ``tol`` and the
    primal residual is below ``tol`` (relative to the right-hand side scale).
    """
    n = p.n
    m_ub, m_eq = p.A_ub.shape[0], p.A_eq.shape[0]
    m = m_ub + m_eq
    if m == 0:
        return _solve_bounds_only(p, tol)

    x0 = _initial_point(p.lo, p.hi)
    r_ub = p.b_ub - p.A_ub @ x0
    r_eq = p.b_eq - p.A_eq @ x0

    slack_basic = r_ub >= 0
    art_rows = np.concatenate([np.flatnonzero(~slack_basic), m_ub + np.arange(m_eq)])
    n_art = art_rows.shape[0]
    ntot = n + m_ub + n_art

    M = np.zeros((m, ntot))
    M[:m_ub, :n] = p.A_ub
    M[m_ub:, :n] = p.A_eq
    M[:m_ub, n:n + m_ub] = np.eye(m_ub)
    r_all = np.concatenate([r_ub, r_eq])
    for k, row in enumerate(art_rows):
        M[row, n + m_ub + k] = 1.0 if r_all[row] >= 0 else -1.0
    rhs = np.concatenate([p.b_ub, p.b_eq])

    lo = np.concatenate([p.lo, np.zeros(m_ub), np.zeros(n_art)])
    hi = np.concatenate([p.hi, np.full(m_ub, np.inf), np.full(n_art, np.inf)])
    x = np.concatenate([x0, np.zeros(m_ub + n_art)])

    basis = np.empty(m, dtype=int)
    basis[np.flatnonzero(slack_basic)] = n + np.flatnonzero(slack_basic)
    basis[art_rows] = n + m_ub + np.arange(n_art)

    iters = 0
    if n_art:
        cost1 = np.zeros(ntot)
        cost1[n + m_ub:] = 1.0
        tab = _Tableau(M, rhs, cost1, lo, hi, x, basis)
        st = tab.run(tol, max_iter)
        iters = tab.iterations
        if st is Status.ITER_LIMIT:
            return SolveStatus(Status.ITER_LIMIT, iterations=iters)
        infeas = tab.x[n + m_ub:].sum()
        scale = 1.0 + np.abs(rhs).max()
        if infeas > tol * scale * 10:
            return SolveStatus(Status.INFEASIBLE, iterations=iters)
        hi[n + m_ub:] = 0.0
        x = tab.x
        x[n + m_ub:] = 0.0
        basis = tab.basis
        _drive_out_artificials(M, basis, n + m_ub)

    cost = np.concatenate([p.c, np.zeros(m_ub + n_art)])
    tab = _Tableau(M, rhs, cost, lo, hi, x, basis)
    st = tab.run(tol, max_iter - iters)
    iters += tab.iterations
    if st is not Status.OPTIMAL:
        return SolveStatus(st, iterations=iters)

    xs = tab.x[:n].copy()
    slack = tab.x[n:n + m_ub]
    active = np.flatnonzero(slack <= tol * (1.0 + np.abs(p.b_ub)))
    return SolveStatus(
        Status.OPTIMAL,
        x=xs,
        objective=float(p.c @ xs),
        active=active,
        iterations=iters,
        mu=np.maximum(-tab.y[:m_ub], 0.0),
        nu=-tab.y[m_ub:],
    )


def _drive_out_artificials(M, basis, first_art):
    """Pivot zero-valued artificials out of the basis where possible."""
    m = M.shape[0]
    for r in range(m):
        if basis[r] < first_art:
            continue
        B = M[:, basis]
        try:
            row = np.linalg.solve(B.T, np.eye(m)[r])
        except np.linalg.LinAlgError:
            continue
        alpha = row @ M[:, :first_art]
        alpha[basis[basis < first_art]] = 0.0
        j = int(np.argmax(np.abs(alpha)))
        if abs(alpha[j]) > 1e-7:
            basis[r] = j


def _solve_bounds_only(p: LpProblem, tol: float) -> SolveStatus:
    x = _initial_point(p.lo, p.hi)
    for j, cj in enumerate(p.c):
        if cj > tol:
            if not np.isfinite(p.lo[j]):
                return SolveStatus(Status.UNBOUNDED)
            x[j] = p.lo[j]
        elif cj < -tol:
            if not np.isfinite(p.hi[j]):
                return SolveStatus(Status.UNBOUNDED)
            x[j] = p.hi[j]
    return SolveStatus(Status.OPTIMAL, x=x, objective=float(p.c @ x),
                       mu=np.zeros(0), nu=np.zeros(0))
