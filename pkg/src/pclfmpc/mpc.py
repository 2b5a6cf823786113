"""Condensed finite-horizon optimal control problems and the receding-horizon
controllers built on them.

Decision vector: stacked inputs ``v = (u(0), ..., u(N-1))``, followed by
the terminal slack ``xi`` when the terminal cost is ``beta * max(F x)^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, OutsideDoa
from .geometry import HPolytope
from .pclf import LinearSystem, Pclf, PclfCertificate, beta_star_at
from .solvers import QpProblem, SolveStatus, Status, solve_qp
from .terminal import RiccatiSolution, TerminalSet

DOA_TOL = 1e-6


@dataclass(frozen=True)
class Terminal:
    """Terminal ingredients; any combination of the fields may be set.

    ``P``: quadratic cost ``x'Px``. ``polytope``: constraint ``x in polytope``.
    ``F``: constraint ``F x <= 1``; with ``beta`` it becomes the cost
    ``beta * xi^2`` with ``F x <= xi``, ``0 <= xi <= 1``.
    """

    P: np.ndarray | None = None
    polytope: HPolytope | None = None
    F: np.ndarray | None = None
    beta: float | None = None

    @classmethod
    def polytope_only(cls, poly):
        return cls(polytope=poly)

    @classmethod
    def riccati(cls, P, poly):
        return cls(P=P, polytope=poly)

    @classmethod
    def pclf_cost(cls, F, beta):
        return cls(F=F, beta=float(beta))

    @classmethod
    def pclf_constraint(cls, F, P=None):
        return cls(P=P, F=F)


@dataclass(frozen=True)
class Decay:
    """One-step constraint ``F (A x + B u(0)) <= lam * max(F x)``."""

    F: np.ndarray
    lam: float


@dataclass(frozen=True)
class FhocpSpec:
    sys: LinearSystem
    N: int
    Q: np.ndarray
    R: np.ndarray
    X: HPolytope
    U: HPolytope
    terminal: Terminal
    decay: Decay | None = None
    prestabilize: np.ndarray | None = None  # gain K, decision u(k) - K phi(k)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        n, m = self.sys.n, self.sys.m
        Q = np.atleast_2d(np.asarray(self.Q, float))
        R = np.atleast_2d(np.asarray(self.R, float))
        if Q.shape != (n, n) or R.shape != (m, m):
            raise DimensionMismatch("Q must be n x n and R must be m x m")
        if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0:
            raise ValueError("R must be positive definite")
        if self.X.d != n or self.U.d != m:
            raise DimensionMismatch("constraint sets do not match the system")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass
class ControlResult:
    status: Status
    u: np.ndarray | None = None  # N x m
    phi: np.ndarray | None = None  # (N+1) x n
    objective: float = np.nan
    xi: float | None = None
    branch: str = ""
    beta: float | None = None

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def kappa(self) -> np.ndarray:
        return self.u[0]


def prediction_matrices(sys: LinearSystem, N: int, K=None):
    """Affine maps of the decision vector ``v``, for k = 0..N.

    ``phi(k) = Phi[k] x + Gam[k] v`` and ``u(k) = Kx[k] x + Ku[k] v``.
    Without ``K``, ``v`` stacks the inputs. With a gain ``K``, ``v`` stacks
    the offsets ``u(k) - K phi(k)``, which keeps long horizons of unstable
    systems well conditioned.
    """
    n, m = sys.n, sys.m
    nv = N * m
    K = np.zeros((m, n)) if K is None else np.asarray(K, float)
    Acl = sys.A + sys.B @ K
    Phi = np.zeros((N + 1, n, n))
    Gam = np.zeros((N + 1, n, nv))
    Kx = np.zeros((N, m, n))
    Ku = np.zeros((N, m, nv))
    Phi[0] = np.eye(n)
    for k in range(N):
        Kx[k] = K @ Phi[k]
        Ku[k] = K @ Gam[k]
        Ku[k][:, k * m:(k + 1) * m] += np.eye(m)
        Phi[k + 1] = Acl @ Phi[k]
        Gam[k + 1] = Acl @ Gam[k]
        Gam[k + 1][:, k * m:(k + 1) * m] += sys.B
    return Phi, Gam, Kx, Ku


def condense(spec: FhocpSpec, x) -> QpProblem:
    """Dense QP ``min 1/2 z'Hz + g'z + const`` for the problem at state ``x``."""
    x = np.asarray(x, float).reshape(-1)
    sys, N, Q, R = spec.sys, spec.N, spec.Q, spec.R
    if x.shape[0] != sys.n:
        raise DimensionMismatch("state has the wrong dimension")
    n, m = sys.n, sys.m
    nv = N * m
    term = spec.terminal
    has_xi = term.F is not None and term.beta is not None
    nz = nv + (1 if has_xi else 0)
    Phi, Gam, Kx, Ku = prediction_matrices(sys, N, spec.prestabilize)
    px = Phi @ x  # free response, (N+1) x n
    ux = Kx @ x  # N x m

    H = np.zeros((nz, nz))
    g = np.zeros(nz)
    const = 0.0
    for k in range(N):
        H[:nv, :nv] += Gam[k].T @ Q @ Gam[k]
        g[:nv] += Gam[k].T @ Q @ px[k]
        const += px[k] @ Q @ px[k]
    for k in range(N):
        H[:nv, :nv] += Ku[k].T @ R @ Ku[k]
        g[:nv] += Ku[k].T @ R @ ux[k]
        const += ux[k] @ R @ ux[k]
    if term.P is not None:
        H[:nv, :nv] += Gam[N].T @ term.P @ Gam[N]
        g[:nv] += Gam[N].T @ term.P @ px[N]
        const += px[N] @ term.P @ px[N]
    if has_xi:
        H[nv, nv] = term.beta
    H = 2.0 * H
    H = 0.5 * (H + H.T)
    g = 2.0 * g

    rows, rhs = [], []

    def add(G, b):
        G = np.atleast_2d(G)
        if has_xi and G.shape[1] == nv:
            G = np.hstack([G, np.zeros((G.shape[0], 1))])
        rows.append(G)
        rhs.append(np.asarray(b, float).reshape(-1))

    Hu, hu = spec.U.H, spec.U.h
    for k in range(N):
        add(Hu @ Ku[k], hu - Hu @ ux[k])
    Hx, hx = spec.X.H, spec.X.h
    for k in range(1, N):
        add(Hx @ Gam[k], hx - Hx @ px[k])
    if term.polytope is not None:
        Ht, ht = term.polytope.H, term.polytope.h
        add(Ht @ Gam[N], ht - Ht @ px[N])
    if term.F is not None:
        F = term.F
        if has_xi:
            G = np.hstack([F @ Gam[N], -np.ones((F.shape[0], 1))])
            rows.append(G)
            rhs.append(-F @ px[N])
            box = np.zeros((2, nz))
            box[0, nv] = 1.0
            box[1, nv] = -1.0
            rows.append(box)
            rhs.append(np.array([1.0, 0.0]))
        else:
            add(F @ Gam[N], 1.0 - F @ px[N])
    if spec.decay is not None:
        F, lam = spec.decay.F, spec.decay.lam
        level = lam * float(np.max(F @ x))
        add(F @ Gam[1], level - F @ px[1])

    A_ub = np.vstack(rows)
    b_ub = np.concatenate(rhs)
    norms = np.linalg.norm(A_ub, axis=1)
    nz_rows = norms > 0
    A_ub[nz_rows] /= norms[nz_rows, None]
    b_ub[nz_rows] /= norms[nz_rows]
    return QpProblem(H, g, A_ub=A_ub, b_ub=b_ub, const=const)


def rollout(sys: LinearSystem, x, u) -> np.ndarray:
    """State sequence ``phi(0..N)`` for inputs ``u`` (N x m)."""
    phi = [np.asarray(x, float)]
    for uk in u:
        phi.append(sys.A @ phi[-1] + sys.B @ uk)
    return np.array(phi)


def _to_decision(spec: FhocpSpec, x, u):
    """Decision vector reproducing the input sequence ``u``."""
    u = np.asarray(u, float).reshape(spec.N, spec.sys.m)
    if spec.prestabilize is None:
        return u.reshape(-1)
    phi = rollout(spec.sys, x, u)
    return (u - phi[:-1] @ np.asarray(spec.prestabilize).T).reshape(-1)


def _to_inputs(spec: FhocpSpec, x, v):
    m = spec.sys.m
    if spec.prestabilize is None:
        return v.reshape(spec.N, m)
    _, _, Kx, Ku = prediction_matrices(spec.sys, spec.N, spec.prestabilize)
    return Kx @ x + Ku @ v


def solve_fhocp(spec: FhocpSpec, x, warm=None, tol: float = 1e-9,
                max_iter: int = 20000) -> ControlResult:
    """Solve the condensed problem; ``warm`` is an optional input sequence."""
    x = np.asarray(x, float).reshape(-1)
    qp = condense(spec, x)
    x0 = None
    if warm is not None:
        x0 = _to_decision(spec, x, warm)
        if x0.shape[0] < qp.n:
            x0 = np.concatenate([x0, [1.0]])
    res: SolveStatus = solve_qp(qp, tol=tol, x0=x0, max_iter=max_iter)
    if not res.ok:
        return ControlResult(res.status)
    m = spec.sys.m
    nv = spec.N * m
    u = _to_inputs(spec, x, res.x[:nv])
    phi = rollout(spec.sys, x, u)
    xi = float(res.x[nv]) if res.x.shape[0] > nv else None
    return ControlResult(Status.OPTIMAL, u=u, phi=phi, objective=res.objective, xi=xi,
                         beta=spec.terminal.beta)


def stage_cost(x, u, Q, R) -> float:
    return float(x @ Q @ x + u @ R @ u)


def sequence_cost(res: ControlResult, Q, R, P=None, F=None, beta=None) -> float:
    """Cost of a returned sequence recomputed from its own rollout."""
    J = sum(stage_cost(res.phi[k], res.u[k], Q, R) for k in range(res.u.shape[0]))
    xN = res.phi[-1]
    if P is not None:
        J += float(xN @ P @ xN)
    if F is not None and beta is not None:
        J += beta * max(float(np.max(F @ xN)), 0.0) ** 2
    return J


@dataclass
class MpcDesign:
    """Everything the five controllers share for one system.

    ``riccati`` and ``xf`` are the (possibly input-restricted) Riccati
    solution and its ellipsoidal terminal set; ``xf_poly`` is the polygon
    used as the conventional terminal constraint.
    """

    sys: LinearSystem
    Q: np.ndarray
    R: np.ndarray
    X: HPolytope
    U: HPolytope
    N: int
    pclf: Pclf
    cert: PclfCertificate
    riccati: RiccatiSolution
    xf: TerminalSet
    xf_poly: HPolytope
    tol: float = DOA_TOL
    _specs: dict = field(default_factory=dict, repr=False)

    def with_horizon(self, N: int) -> "MpcDesign":
        return replace(self, N=N, _specs={})

    @property
    def F(self) -> np.ndarray:
        return self.pclf.F

    @property
    def decay_lambda(self) -> float:
        lam = self.pclf.lam
        if np.isfinite(self.cert.lam_verified):
            lam = max(lam, self.cert.lam_verified)
        return lam

    def spec(self, kind: str, beta: float | None = None, N: int | None = None,
             prestabilize: bool = False) -> FhocpSpec:
        N = self.N if N is None else N
        if kind == "standard":
            term, decay = Terminal.riccati(self.riccati.P, self.xf_poly), None
        elif kind == "pclf":
            term, decay = Terminal.pclf_cost(self.F, beta), None
        elif kind == "tilde":
            term, decay = Terminal.pclf_constraint(self.F, self.riccati.P), None
        elif kind == "decay":
            term = Terminal.pclf_constraint(self.F, self.riccati.P)
            decay = Decay(self.F, self.decay_lambda)
        else:
            raise ValueError(f"unknown problem kind {kind!r}")
        K = self.riccati.K if prestabilize else None
        return FhocpSpec(self.sys, N, self.Q, self.R, self.X, self.U, term, decay, K)

    def _check_doa(self, x):
        t = float(np.max(self.F @ x))
        if t > 1.0 + self.tol:
            raise OutsideDoa(f"max(Fx) = {t:.6g} > 1")

    # controllers -----------------------------------------------------------

    def solve_standard(self, x, N: int | None = None, warm=None,
                       prestabilize: bool = False) -> ControlResult:
        x = np.asarray(x, float)
        if not np.all(self.X.H @ x <= self.X.h + self.tol):
            return ControlResult(Status.INFEASIBLE, branch="standard")
        res = solve_fhocp(self.spec("standard", N=N, prestabilize=prestabilize), x, warm=warm)
        res.branch = "standard"
        return res

    def solve_mpc1(self, x, beta: float | None = None) -> ControlResult:
        x = np.asarray(x, float)
        self._check_doa(x)
        beta = self.cert.beta_star if beta is None else beta
        res = solve_fhocp(self.spec("pclf", beta=beta), x)
        res.branch = "pclf"
        res.beta = beta
        return res

    def solve_tilde(self, x) -> ControlResult:
        x = np.asarray(x, float)
        self._check_doa(x)
        res = solve_fhocp(self.spec("tilde"), x)
        res.branch = "tilde"
        return res

    def solve_mpc1a(self, x) -> ControlResult:
        res = self.solve_tilde(x)
        if res.ok and self.xf.contains(res.phi[-1]):
            return res
        return self.solve_mpc1(x)

    def solve_mpc1b(self, x) -> ControlResult:
        x = np.asarray(x, float)
        beta = beta_star_at(self.cert, self.pclf, x, self.tol)
        return self.solve_mpc1(x, beta)

    def solve_mpc2(self, x) -> ControlResult:
        x = np.asarray(x, float)
        self._check_doa(x)
        res = solve_fhocp(self.spec("decay"), x)
        res.branch = "decay"
        return res

    def controller(self, name: str):
        """Callable ``x -> ControlResult`` for a controller name."""
        table = {
            "standard": self.solve_standard,
            "mpc1": self.solve_mpc1,
            "mpc1a": self.solve_mpc1a,
            "mpc1b": self.solve_mpc1b,
            "mpc2": self.solve_mpc2,
            "tilde": self.solve_tilde,
        }
        try:
            return table[name]
        except KeyError:
            raise ValueError(f"unknown controller {name!r}") from None


CONTROLLERS = ("mpc1", "mpc1a", "mpc1b", "mpc2")


def solve_standard(design: MpcDesign, x) -> ControlResult:
    return design.solve_standard(x)


def solve_mpc1(design: MpcDesign, beta, x) -> ControlResult:
    return design.solve_mpc1(x, beta)


def solve_tilde(design: MpcDesign, x) -> ControlResult:
    return design.solve_tilde(x)


def solve_mpc1a(design: MpcDesign, x) -> ControlResult:
    return design.solve_mpc1a(x)


def solve_mpc1b(design: MpcDesign, x) -> ControlResult:
    return design.solve_mpc1b(x)


def solve_mpc2(design: MpcDesign, x) -> ControlResult:
    return design.solve_mpc2(x)


def build_design(sys: LinearSystem, X: HPolytope, U: HPolytope, Q, R, N: int, eps: float,
                 c: float | None = 1.0, riccati_inputs=None, xf_points: int = 1000,
                 levels: int = 20, pclf: Pclf | None = None,
                 cert: PclfCertificate | None = None) -> MpcDesign:
    """Assemble the PCLF, certificate and Riccati terminal ingredients.

    ``riccati_inputs`` selects input columns (0-based) for a restricted
    Riccati design; ``None`` uses all inputs. The terminal ellipsoid is
    also kept inside the PCLF set.
    """
    from .pclf import certificate, max_contractive_set
    from .terminal import (polytopic_inner_approx, restricted_dare, solve_dare,
                           terminal_ellipsoid)

    Q = np.atleast_2d(np.asarray(Q, float))
    R = np.atleast_2d(np.asarray(R, float))
    if pclf is None:
        pclf = max_contractive_set(sys, X, U, eps)
    if cert is None:
        cert = certificate(pclf, sys, U, Q, R, c_override=c, levels=levels)
    if riccati_inputs is None:
        ric = solve_dare(sys, Q, R)
    else:
        ric = restricted_dare(sys, Q, R, riccati_inputs)
    xf = terminal_ellipsoid(ric, X, U, within=pclf.set)
    xf_poly = polytopic_inner_approx(xf, xf_points)
    return MpcDesign(sys, Q, R, X, U, N, pclf, cert, ric, xf, xf_poly)
