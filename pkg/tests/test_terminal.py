import numpy as np
import pytest
import scipy.linalg

from pclfmpc import geometry as geo
from pclfmpc.errors import NotStabilizable, Unsupported, ZeroTerminalSet
from pclfmpc.geometry import HPolytope
from pclfmpc.pclf import LinearSystem
from pclfmpc.terminal import (TerminalSet, controllable_set_N, dare_residual, ellipse_boundary,
                              polytopic_inner_approx, restricted_dare, solve_dare,
                              terminal_ellipsoid, tilde_grid, tilde_set_membership)

GOLDEN = (1 + np.sqrt(5)) / 2


def test_scalar_dare_golden_ratio():
    sol = solve_dare(LinearSystem(np.array([[1.0]]), np.array([[1.0]])), [[1.0]], [[1.0]])
    assert sol.P[0, 0] == pytest.approx(GOLDEN, abs=1e-8)
    assert sol.K[0, 0] == pytest.approx(-GOLDEN / (1 + GOLDEN))


def test_dare_with_zero_dynamics():
    Q = np.diag([2.0, 3.0])
    sol = solve_dare(LinearSystem(np.zeros((2, 2)), np.eye(2)), Q, np.eye(2))
    np.testing.assert_allclose(sol.P, Q)
    np.testing.assert_allclose(sol.K, 0.0)


def test_dare_matches_scipy(design):
    sysm = design.sys
    sol = solve_dare(sysm, design.Q, design.R)
    ref = scipy.linalg.solve_discrete_are(sysm.A, sysm.B, design.Q, design.R)
    np.testing.assert_allclose(sol.P, ref, rtol=1e-9)
    assert dare_residual(sysm.A, sysm.B, design.Q, design.R, sol.P) < 1e-9


def test_dare_unstabilizable():
    sysm = LinearSystem(np.diag([1.5, 0.5]), np.array([[0.0], [1.0]]))
    with pytest.raises(NotStabilizable):
        solve_dare(sysm, np.eye(2), np.eye(1))


def test_restricted_dare_example1_formula(ex1):
    sysm = ex1.sys
    sol = restricted_dare(sysm, ex1.Q, ex1.R, [1])
    B2 = sysm.B[:, [1]]
    Pt = scipy.linalg.solve_discrete_are(sysm.A, B2, ex1.Q, ex1.R[1:, 1:])
    Kt = -np.linalg.solve(B2.T @ Pt @ B2 + ex1.R[1:, 1:], B2.T @ Pt @ sysm.A)
    np.testing.assert_allclose(sol.P, Pt, rtol=1e-9)
    np.testing.assert_allclose(sol.K[1], Kt[0], rtol=1e-9)
    np.testing.assert_allclose(sol.K[0], 0.0)


def test_restricted_dare_all_columns_equals_full(ex2):
    a = restricted_dare(ex2.sys, ex2.Q, ex2.R, [0, 1])
    b = solve_dare(ex2.sys, ex2.Q, ex2.R)
    np.testing.assert_allclose(a.P, b.P)
    np.testing.assert_allclose(a.K, b.K)


def test_full_gain_on_example1_collapses_terminal_set(ex1):
    sol = solve_dare(ex1.sys, ex1.Q, ex1.R)
    with pytest.raises(ZeroTerminalSet):
        terminal_ellipsoid(sol, ex1.X, ex1.U)


def test_huge_input_set_leaves_state_box_binding():
    sysm = LinearSystem(np.array([[1.1, 0.0], [0.2, 0.9]]), np.eye(2))
    sol = solve_dare(sysm, np.eye(2), np.eye(2))
    X = HPolytope.box([-1.0, -1.0], [1.0, 1.0])
    U = HPolytope.box([-1e6, -1e6], [1e6, 1e6])
    ts = terminal_ellipsoid(sol, X, U)
    Pinv = np.linalg.inv(sol.P)
    expected = min(1.0 / Pinv[0, 0], 1.0 / Pinv[1, 1])
    assert ts.alpha == pytest.approx(expected)


def test_terminal_set_is_admissible_and_invariant(design):
    ts = design.xf
    pts = ellipse_boundary(ts, 400)
    assert np.all(design.X.contains(pts, 1e-9))
    assert np.all(design.U.contains(pts @ ts.K.T, 1e-9))
    assert np.all(design.pclf.set.contains(pts, 1e-9))
    Acl = design.sys.A + design.sys.B @ ts.K
    assert np.all(ts.contains(pts @ Acl.T, 1e-9))


def test_ellipsoid_support_matches_boundary_samples(ex2):
    ts = ex2.xf
    pts = ellipse_boundary(ts, 5000)
    for g in ([1.0, 0.0], [0.3, -0.7]):
        assert ts.support(g) == pytest.approx(np.max(pts @ g), rel=1e-6)


def test_inner_square_of_unit_disc():
    ts = TerminalSet("ellipsoid", P=np.eye(2), alpha=1.0, K=np.zeros((1, 2)))
    sq = polytopic_inner_approx(ts, 4)
    V = sq.vertices()
    assert V.shape == (2, 4)
    np.testing.assert_allclose(np.linalg.norm(V, axis=0), 1.0)
    np.testing.assert_allclose(sorted(np.abs(sq.h)), [np.sqrt(0.5)] * 4)


def test_inner_polygon_hausdorff_bound(ex2):
    ts = ex2.xf
    poly = ex2.xf_poly
    semi = np.sqrt(ts.alpha / np.linalg.eigvalsh(ts.P).min())
    bound = (1 - np.cos(np.pi / 1000)) * semi
    dense = ellipse_boundary(ts, 20000)
    gap = np.max(dense @ poly.H.T - poly.h, axis=1)
    assert gap.max() <= bound + 1e-12
    assert np.all(ts.contains(poly.vertices().T, 1e-9))


def test_inner_approx_needs_planar_ellipsoid():
    ts = TerminalSet("ellipsoid", P=np.eye(3), alpha=1.0, K=np.zeros((1, 3)))
    with pytest.raises(Unsupported):
        polytopic_inner_approx(ts, 10)


def test_controllable_set_zero_steps(ex2):
    assert controllable_set_N(ex2.sys, ex2.X, ex2.U, ex2.xf_poly, 0) is ex2.xf_poly


@pytest.mark.parametrize("N", [1, 2])
def test_controllable_set_of_contractive_target(design, N):
    # S is lam-contractive, so steering into S adds at most a factor 1/lam per step
    S = design.pclf.set
    XN = controllable_set_N(design.sys, design.X, design.U, S, N)
    assert geo.contains_set(XN, S, 1e-7)
    assert geo.contains_set(geo.scale(S, design.pclf.lam ** -N), XN, 1e-7)


def test_controllable_sets_grow(ex2):
    hist = []
    controllable_set_N(ex2.sys, ex2.X, ex2.U, ex2.xf_poly, 2, history=hist)
    assert len(hist) == 3
    assert geo.contains_set(hist[1], hist[0], 1e-7)
    assert geo.contains_set(hist[2], hist[1], 1e-7)


def test_tilde_membership(ex1):
    pts = ellipse_boundary(ex1.xf, 12) * 0.999
    assert all(tilde_set_membership(ex1, p) for p in pts)
    V = ex1.pclf.vertices().T
    far = V[np.argmax(np.linalg.norm(V, axis=1))]
    assert not tilde_set_membership(ex1, far)


def test_tilde_grid_small(ex2):
    xs, ys, mask = tilde_grid(ex2, [-1, -1], [1, 1], 9)
    assert mask.shape == (9, 9)
    assert mask[4, 4]  # origin
    assert not mask[0, 0] or np.max(ex2.F @ [-1, -1]) <= 1
