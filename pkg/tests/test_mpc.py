import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pclfmpc import geometry as geo
from pclfmpc.errors import DimensionMismatch, OutsideDoa
from pclfmpc.geometry import HPolytope
from pclfmpc.mpc import (CONTROLLERS, FhocpSpec, Terminal, condense, prediction_matrices,
                         rollout, sequence_cost, solve_fhocp)
from pclfmpc.pclf import LinearSystem, beta_star_at
from pclfmpc.solvers import Status
from pclfmpc.terminal import ellipse_boundary, solve_dare, tilde_set_membership

BIG1 = HPolytope.box([-100.0], [100.0])


def scalar_spec(a, b, q, r, p, N=1):
    sysm = LinearSystem(np.array([[a]]), np.array([[b]]))
    return FhocpSpec(sysm, N, [[q]], [[r]], BIG1, BIG1, Terminal(P=np.array([[p]])))


# -- condensing ------------------------------------------------------------


def test_one_step_scalar_closed_form():
    a, b, q, r, p, x = 1.3, 0.7, 2.0, 0.5, 3.0, 0.8
    res = solve_fhocp(scalar_spec(a, b, q, r, p), np.array([x]))
    u = -p * a * b * x / (r + p * b * b)
    assert res.u[0, 0] == pytest.approx(u, rel=1e-10)
    J = q * x * x + r * u * u + p * (a * x + b * u) ** 2
    assert res.objective == pytest.approx(J, rel=1e-10)


def test_prediction_matrices_reproduce_rollout(rng):
    sysm = LinearSystem(rng.normal(size=(3, 3)), rng.normal(size=(3, 2)))
    N = 4
    Phi, Gam, _, _ = prediction_matrices(sysm, N)
    x = rng.normal(size=3)
    u = rng.normal(size=(N, 2))
    traj = rollout(sysm, x, u)
    np.testing.assert_allclose((Phi @ x + Gam @ u.ravel()).reshape(N + 1, 3), traj, atol=1e-12)


def test_zero_state_weight_and_beta_leaves_input_energy(ex2):
    x = np.array([0.3, -0.2])
    spec = FhocpSpec(ex2.sys, 2, np.zeros((2, 2)), np.eye(2), ex2.X, ex2.U,
                     Terminal.pclf_cost(ex2.F, 0.0))
    res = solve_fhocp(spec, x)
    assert res.objective == pytest.approx(float(np.sum(res.u ** 2)), abs=1e-12)
    assert res.objective == pytest.approx(0.0, abs=1e-12)


def test_spec_validation(ex2):
    with pytest.raises(DimensionMismatch):
        FhocpSpec(ex2.sys, 2, np.eye(3), ex2.R, ex2.X, ex2.U, Terminal())
    with pytest.raises(ValueError):
        FhocpSpec(ex2.sys, 2, ex2.Q, np.zeros((2, 2)), ex2.X, ex2.U, Terminal())
    with pytest.raises(ValueError):
        FhocpSpec(ex2.sys, 0, ex2.Q, ex2.R, ex2.X, ex2.U, Terminal())


def test_condensed_rows_are_normalized(ex1):
    qp = condense(ex1.spec("decay"), np.array([0.2, 0.3]))
    np.testing.assert_allclose(np.linalg.norm(qp.A_ub, axis=1), 1.0)


# -- baseline controller ---------------------------------------------------


def test_standard_matches_riccati_gain_inside_terminal_set(ex2):
    pts = ellipse_boundary(ex2.xf, 16) * 0.5
    for x in pts:
        res = ex2.solve_standard(x)
        assert res.ok
        np.testing.assert_allclose(res.kappa, ex2.riccati.K @ x, atol=1e-7)


def test_restricted_gain_is_not_optimal_for_example1(ex1):
    # the input-restricted terminal cost lets u1 > 0 beat the restricted gain
    gaps = []
    for x in ellipse_boundary(ex1.xf, 16) * 0.5:
        res = ex1.solve_standard(x)
        assert res.ok
        gaps.append(res.objective - x @ ex1.riccati.P @ x)
    assert max(gaps) <= 1e-9
    assert min(gaps) < -1e-3


def test_standard_is_infeasible_at_some_vertex(design):
    stat = [design.solve_standard(v).status for v in design.pclf.vertices().T]
    assert Status.INFEASIBLE in stat


# -- PCLF controllers ------------------------------------------------------


@pytest.mark.parametrize("name", CONTROLLERS)
def test_origin_gives_zero_control(design, name):
    res = design.controller(name)(np.zeros(2))
    assert res.ok
    np.testing.assert_allclose(res.u, 0.0, atol=1e-12)
    assert res.objective == pytest.approx(0.0, abs=1e-12)
    if res.xi is not None:
        assert res.xi == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("N", [1, 2])
@pytest.mark.parametrize("name", CONTROLLERS)
def test_feasible_at_every_vertex(design, name, N):
    d = design.with_horizon(N)
    ctrl = d.controller(name)
    for v in d.pclf.vertices().T:
        assert ctrl(v).ok


@pytest.mark.parametrize("name", CONTROLLERS)
def test_feasible_at_random_interior_points(design, name):
    pts = geo.sample(design.pclf.set, "interior", 150, seed=3)
    ctrl = design.controller(name)
    assert all(ctrl(x).ok for x in pts)


def test_outside_the_set_is_rejected(ex2):
    v = ex2.pclf.vertices()[:, 0] * 1.01
    for name in CONTROLLERS:
        with pytest.raises(OutsideDoa):
            ex2.controller(name)(v)


def test_unknown_controller_name(ex2):
    with pytest.raises(ValueError):
        ex2.controller("mpc9")


def test_decay_certificate_on_random_points(design):
    lam = design.decay_lambda
    for x in geo.sample(design.pclf.set, "interior", 100, seed=8):
        res = design.solve_mpc2(x)
        assert res.ok
        assert np.max(design.F @ res.phi[1]) <= lam * np.max(design.F @ x) + 1e-6
        assert np.all(design.U.contains(res.u, 1e-6))


def test_tilde_prefix_matches_long_horizon_solution(ex2):
    # Riccati terminal cost is the unconstrained optimum here, so the
    # short problem agrees with a long one when its terminal state lands in X_f
    checked = 0
    for x in geo.sample(ex2.pclf.set, "interior", 300, seed=2):
        if ex2.xf.contains(x) or not tilde_set_membership(ex2, x):
            continue
        short = ex2.solve_tilde(x)
        long = ex2.solve_standard(x, N=40, prestabilize=True)
        np.testing.assert_allclose(short.u, long.u[: ex2.N], atol=1e-6)
        checked += 1
    assert checked >= 5


def test_mpc1a_branches(ex1):
    inside = ellipse_boundary(ex1.xf, 8)[0] * 0.5
    res = ex1.solve_mpc1a(inside)
    assert res.branch == "tilde"
    np.testing.assert_allclose(res.kappa, ex1.riccati.K @ inside, atol=1e-7)
    V = ex1.pclf.vertices().T
    far = V[np.argmax(np.linalg.norm(V, axis=1))]
    assert ex1.solve_mpc1a(far * 0.99).branch == "pclf"
    assert ex1.solve_mpc1a(np.zeros(2)).branch == "tilde"


def test_mpc1b_uses_the_level_weight(design):
    for x in geo.sample(design.pclf.set, "boundary", 10, seed=1):
        res = design.solve_mpc1b(x)
        assert res.beta == beta_star_at(design.cert, design.pclf, x)
        ref = design.solve_mpc1(x, beta=res.beta)
        assert res.objective == pytest.approx(ref.objective, rel=1e-12)
    assert design.solve_mpc1b(np.zeros(2)).beta == design.cert.level_table[0][2]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), which=st.sampled_from(["example1", "example2"]))
def test_qp_objective_equals_recomputed_cost(seed, which, ex1, ex2):
    d = ex1 if which == "example1" else ex2
    rng = np.random.default_rng(seed)
    N = int(rng.integers(1, 5))
    beta = float(rng.uniform(0.5, 2.0) * d.cert.beta_star)
    x = geo.sample(d.pclf.set, "interior", 1, seed=seed)[0]
    res = d.with_horizon(N).solve_mpc1(x, beta)
    assert res.ok
    assert res.objective == pytest.approx(sequence_cost(res, d.Q, d.R, F=d.F, beta=beta), abs=1e-6)
    assert res.xi == pytest.approx(max(np.max(d.F @ res.phi[-1]), 0.0), abs=1e-6)


def test_value_decreases_with_horizon(design):
    beta = design.cert.beta_star
    for x in geo.sample(design.pclf.set, "interior", 15, seed=5):
        vals = [design.with_horizon(N).solve_mpc1(x, beta).objective for N in (1, 2, 3, 4, 5)]
        assert np.all(np.diff(vals) <= 1e-6)


def test_value_bounds(design):
    # unconstrained LQR cost below, terminal weight at the current state above
    P = solve_dare(design.sys, design.Q, design.R).P
    beta = design.cert.beta_star
    for x in geo.sample(design.pclf.set, "interior", 30, seed=6):
        V = design.solve_mpc1(x, beta).objective
        assert x @ P @ x <= V + 1e-6
        assert V <= beta * np.max(design.F @ x) ** 2 + 1e-6
