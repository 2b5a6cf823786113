"""Closed-loop simulation, cost accounting and the two experiment drivers."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import OutsideDoa, PclfMpcError
from .mpc import CONTROLLERS, MpcDesign


@dataclass
class Trajectory:
    """One closed-loop run.

    ``x`` has one more row than ``u``. A run that hit an infeasible problem
    stops there; ``feasible`` then ends with ``False`` and that step has no
    input.
    """

    x: np.ndarray
    u: np.ndarray
    stage: np.ndarray
    feasible: np.ndarray
    gauge: np.ndarray | None = None
    xm: np.ndarray | None = None
    d: np.ndarray | None = None

    @property
    def cost(self) -> float:
        return float(np.sum(self.stage))

    @property
    def ok(self) -> bool:
        return bool(np.all(self.feasible))

    @property
    def steps(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class PerturbationSpec:
    """Additive disturbance ``d`` and measurement noise ``e`` bounded in the
    infinity norm by ``delta_d`` and ``delta_e``."""

    delta_d: float = 0.0
    delta_e: float = 0.0
    distribution: str = "uniform-box"
    seed: int | None = None

    def __post_init__(self):
        if not (np.isfinite(self.delta_d) and np.isfinite(self.delta_e)):
            raise ValueError("perturbation bounds must be finite")
        if self.delta_d < 0 or self.delta_e < 0:
            raise ValueError("perturbation bounds must be nonnegative")
        if self.distribution not in ("uniform-box", "worst-corner"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    def draw(self, steps: int, n: int):
        rng = np.random.default_rng(self.seed)
        if self.distribution == "uniform-box":
            d = rng.uniform(-1, 1, size=(steps, n))
            e = rng.uniform(-1, 1, size=(steps, n))
        else:
            d = rng.choice([-1.0, 1.0], size=(steps, n))
            e = rng.choice([-1.0, 1.0], size=(steps, n))
        return self.delta_d * d, self.delta_e * e


def closed_loop(design: MpcDesign, controller: str, x0, steps: int,
                perturbation: PerturbationSpec | None = None) -> Trajectory:
    """Apply the first input of ``controller`` for ``steps`` steps.

    With a perturbation the controller sees ``x + e`` and the plant gets
    ``A x + B u + d``.
    """
    sys = design.sys
    ctrl = design.controller(controller)
    n, m = sys.n, sys.m
    x = np.asarray(x0, float).copy()
    if perturbation is not None:
        d_seq, e_seq = perturbation.draw(steps, n)
    else:
        d_seq = e_seq = None
    xs, us, stage, feas, xms = [x.copy()], [], [], [], []
    for k in range(steps):
        xm = x if e_seq is None else x + e_seq[k]
        xms.append(xm.copy())
        try:
            res = ctrl(xm)
            ok = res.ok
        except OutsideDoa:
            ok = False
        if not ok:
            feas.append(False)
            break
        u = res.kappa
        xn = sys.A @ x + sys.B @ u
        if d_seq is not None:
            xn = xn + d_seq[k]
        us.append(u)
        stage.append(float(x @ design.Q @ x + u @ design.R @ u))
        feas.append(True)
        x = xn
        xs.append(x.copy())
    X = np.array(xs)
    T = len(us)
    return Trajectory(
        x=X,
        u=np.array(us).reshape(T, m),
        stage=np.array(stage),
        feasible=np.array(feas, dtype=bool),
        gauge=(X @ design.F.T).max(axis=1),
        xm=np.array(xms) if perturbation is not None else None,
        d=d_seq[:T] if d_seq is not None else None,
    )


def performance_cost(traj: Trajectory, Q, R) -> float:
    """Sum of ``x'Qx + u'Ru`` over the applied inputs."""
    Q = np.atleast_2d(Q)
    R = np.atleast_2d(R)
    T = traj.u.shape[0]
    xs = traj.x[:T]
    return float(np.einsum("ij,jk,ik->", xs, Q, xs) + np.einsum("ij,jk,ik->", traj.u, R, traj.u))


def reference_cost(design: MpcDesign, x0, horizon: int, warm=None) -> float:
    """Optimal value of the conventional problem with a long horizon.

    ``warm``: optional input sequence (horizon x m) used as the starting
    point; a closed-loop input record of the same length works well.
    Returns ``inf`` if the problem is infeasible.
    """
    res = design.solve_standard(x0, N=horizon, warm=warm, prestabilize=True)
    return res.objective if res.ok else np.inf


# ---------------------------------------------------------------------------
# CSV


def trajectory_rows(traj: Trajectory):
    n = traj.x.shape[1]
    m = traj.u.shape[1]
    header = ["step"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    header += ["stage_cost", "feasible", "max_Fx"]
    rows = []
    for k in range(traj.x.shape[0]):
        has_u = k < traj.u.shape[0]
        row = [k] + [repr(float(v)) for v in traj.x[k]]
        row += [repr(float(v)) for v in traj.u[k]] if has_u else [""] * m
        row += [repr(float(traj.stage[k])) if has_u else ""]
        row += [int(traj.feasible[k]) if k < traj.feasible.shape[0] else ""]
        row += [repr(float(traj.gauge[k])) if traj.gauge is not None else ""]
        rows.append(row)
    return header, rows


def write_trajectory_csv(path, traj: Trajectory) -> None:
    header, rows = trajectory_rows(traj)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = list(rd)
    xi = [i for i, h in enumerate(header) if h.startswith("x")]
    ui = [i for i, h in enumerate(header) if h.startswith("u")]
    si = header.index("stage_cost")
    fi = header.index("feasible")
    gi = header.index("max_Fx")
    x = np.array([[float(r[i]) for i in xi] for r in rows])
    with_u = [r for r in rows if r[ui[0]] != ""]
    u = np.array([[float(r[i]) for i in ui] for r in with_u]).reshape(len(with_u), len(ui))
    stage = np.array([float(r[si]) for r in with_u])
    feas = np.array([bool(int(r[fi])) for r in rows if r[fi] != ""])
    gauge = np.array([float(r[gi]) for r in rows]) if rows and rows[0][gi] != "" else None
    return Trajectory(x=x, u=u, stage=stage, feasible=feas, gauge=gauge)


# ---------------------------------------------------------------------------
# experiments


def boundary_samples(design: MpcDesign, count: int, rng, rho_range=(0.95, 0.999)):
    """Points ``rho * b`` with ``b`` on the boundary of the PCLF set."""
    seed = int(rng.integers(2**63 - 1))
    return geo.sample(design.pclf.set, "boundary", count, seed=seed, rho_range=rho_range)


@dataclass
class Table1Run:
    x0: np.ndarray
    reference: float
    costs: dict = field(default_factory=dict)

    @property
    def ratios(self) -> dict:
        return {k: v / self.reference for k, v in self.costs.items()}


@dataclass
class Table1Result:
    runs: list
    controllers: tuple
    rejected: int = 0

    def mean_ratios(self) -> dict:
        return {c: float(np.mean([r.ratios[c] for r in self.runs])) for c in self.controllers}


def _one_table1_run(design: MpcDesign, x0, steps, controllers):
    trajs = {c: closed_loop(design, c, x0, steps) for c in controllers}
    if not all(t.ok for t in trajs.values()):
        return None
    warm = trajs[controllers[0]].u
    ref = reference_cost(design, x0, steps, warm=warm)
    if not np.isfinite(ref) or ref <= 0:
        return None
    return Table1Run(np.asarray(x0), ref, {c: t.cost for c, t in trajs.items()})


def table1_experiment(design: MpcDesign, steps: int, runs: int = 20, seed: int = 0,
                      controllers=CONTROLLERS, jobs: int = 1,
                      max_attempts: int | None = None) -> Table1Result:
    """Mean closed-loop cost ratios against the long-horizon optimum.

    Initial states are boundary-near samples of the PCLF set; a sample is
    discarded when the long-horizon problem is infeasible there.
    """
    rng = np.random.default_rng(seed)
    controllers = tuple(controllers)
    max_attempts = 10 * runs if max_attempts is None else max_attempts
    out, rejected, tried = [], 0, 0
    while len(out) < runs and tried < max_attempts:
        batch = boundary_samples(design, runs - len(out), rng)
        tried += batch.shape[0]
        if jobs > 1:
            with ProcessPoolExecutor(jobs) as ex:
                res = list(ex.map(_one_table1_run, [design] * len(batch), batch,
                                  [steps] * len(batch), [controllers] * len(batch)))
        else:
            res = [_one_table1_run(design, x0, steps, controllers) for x0 in batch]
        for r in res:
            if r is None:
                rejected += 1
            else:
                out.append(r)
    if len(out) < runs:
        raise PclfMpcError(f"only {len(out)} of {runs} admissible initial states found")
    return Table1Result(out, controllers, rejected)


@dataclass
class SresRow:
    delta: float
    feasibility_rate: float
    tail_radius: float
    runs: int


def sres_sweep(design: MpcDesign, x0s, deltas, steps: int, runs: int, seed: int = 0,
               controller: str = "mpc1", tail: float = 0.2,
               distribution: str = "uniform-box") -> list:
    """Perturbed closed loops for each ``delta`` (disturbance = noise bound).

    ``tail_radius`` is the largest ``|x(k)|`` over the last ``tail`` fraction
    of the steps, taken over feasible runs.
    """
    x0s = np.atleast_2d(x0s)
    ss = np.random.SeedSequence(seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(runs)]
    k0 = int(np.floor((1.0 - tail) * steps))
    report = []
    for delta in deltas:
        feas = 0
        radius = 0.0
        for r in range(runs):
            pert = PerturbationSpec(delta, delta, distribution, seeds[r])
            tr = closed_loop(design, controller, x0s[r % x0s.shape[0]], steps, pert)
            if tr.ok and tr.steps == steps:
                feas += 1
                radius = max(radius, float(np.linalg.norm(tr.x[k0:], axis=1).max()))
        report.append(SresRow(float(delta), feas / runs, radius if feas else np.inf, runs))
    return report
