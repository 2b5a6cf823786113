"""Polytope computations in H- and V-representation.

All H-representations are stored with unit-norm rows, so tolerances are
absolute distances. Only bounded, full-dimensional sets are supported.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateSet, EmptySet, UnboundedSet, Unsupported, DimensionMismatch
from .solvers import LpProblem, Status, solve_lp

TOL = 1e-9
_DEDUP_DECIMALS = 9


def _normalize(H, h, tol=TOL):
    H = np.atleast_2d(np.asarray(H, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    if H.shape[0] != h.shape[0]:
        raise DimensionMismatch("H and h have different row counts")
    norms = np.linalg.norm(H, axis=1)
    zero = norms <= 1e-12
    if np.any(h[zero] < -tol):
        raise EmptySet("a zero row has a negative offset")
    H, h, norms = H[~zero], h[~zero], norms[~zero]
    # rows already of unit length are left alone so that re-normalizing is exact
    norms = np.where(np.abs(norms - 1.0) <= 4 * np.finfo(float).eps, 1.0, norms)
    H = H / norms[:, None]
    h = h / norms
    if H.shape[0] == 0:
        return H, h
    keys = np.round(H, _DEDUP_DECIMALS) + 0.0
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    hmin = np.full(first.shape[0], np.inf)
    np.minimum.at(hmin, inv, h)
    order = np.argsort(first)
    return H[first[order]], hmin[order]


class HPolytope:
    """``{x | H x <= h}`` with unit-norm, duplicate-free rows."""

    def __init__(self, H, h, *, validate: bool = True, tol: float = TOL):
        self.H, self.h = _normalize(H, h, tol)
        if self.H.shape[0] == 0:
            raise UnboundedSet("no constraints")
        self.tol = tol
        self._vertices = None
        if validate:
            chebyshev_center(self)
            if not is_bounded(self):
                raise UnboundedSet("polyhedron is unbounded")

    @classmethod
    def box(cls, lo, hi) -> "HPolytope":
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        d = lo.shape[0]
        return cls(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([hi, -lo]))

    @property
    def d(self) -> int:
        return self.H.shape[1]

    @property
    def q(self) -> int:
        return self.H.shape[0]

    def __repr__(self):
        return f"HPolytope(d={self.d}, rows={self.q})"

    def contains(self, x, tol: float | None = None):
        return contains(self, x, self.tol if tol is None else tol)

    def vertices(self) -> np.ndarray:
        """Vertex matrix (d x v), cached."""
        if self._vertices is None:
            self._vertices = vrep_from_hrep(self, self.tol).vertices
        return self._vertices

    def intersect(self, other: "HPolytope") -> "HPolytope":
        H, h = _prune(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]), self.tol)
        return HPolytope(H, h, validate=False, tol=self.tol)

    def gauge(self, x) -> np.ndarray:
        """Minkowski gauge ``max(F x)`` with ``F = H / h``; needs 0 in the interior."""
        if np.any(self.h <= 0):
            raise DegenerateSet("origin is not interior")
        F = self.H / self.h[:, None]
        x = np.atleast_2d(x)
        return (x @ F.T).max(axis=1)

    def to_dict(self, with_vertices: bool = False) -> dict:
        out = {"H": self.H.tolist(), "h": self.h.tolist()}
        if with_vertices and self.d <= 3:
            out["vertices"] = self.vertices().T.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict, validate: bool = True) -> "HPolytope":
        P = cls(np.asarray(data["H"], float), np.asarray(data["h"], float), validate=validate)
        if "vertices" in data:
            P._vertices = np.asarray(data["vertices"], float).T.reshape(P.d, -1)
        return P


class VPolytope:
    """Convex hull of the columns of ``vertices`` (d x v)."""

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim == 1:
            V = V.reshape(1, -1)
        self.vertices = V

    @property
    def d(self) -> int:
        return self.vertices.shape[0]

    @property
    def v(self) -> int:
        return self.vertices.shape[1]

    @property
    def points(self) -> np.ndarray:
        return self.vertices.T

    def scaled(self, s: float) -> "VPolytope":
        return VPolytope(s * self.vertices)

    def check_vertices(self, tol: float = 1e-9) -> bool:
        """LP test that no column lies in the convex hull of the others."""
        V = self.vertices
        for j in range(self.v):
            others = np.delete(V, j, axis=1)
            k = others.shape[1]
            if k == 0:
                continue
            lp = LpProblem(
                np.zeros(k),
                A_eq=np.vstack([others, np.ones((1, k))]),
                b_eq=np.concatenate([V[:, j], [1.0]]),
                lo=np.zeros(k),
            )
            if solve_lp(lp, tol=tol).ok:
                return False
        return True

    def __repr__(self):
        return f"VPolytope(d={self.d}, v={self.v})"


# ---------------------------------------------------------------------------
# LP helpers


def _max_linear(G, h, c):
    """``max c'x s.t. G x <= h`` through its dual ``min h'y, G'y = c, y >= 0``.

    The dual basis is only d x d, which matters when there are many rows.
    Returns ``(status, value)`` with ``status`` describing the primal.
    """
    q = G.shape[0]
    res = solve_lp(LpProblem(h, A_eq=G.T, b_eq=c, lo=np.zeros(q)))
    if res.status is Status.INFEASIBLE:
        return Status.UNBOUNDED, np.inf
    if res.status is Status.UNBOUNDED:
        return Status.INFEASIBLE, np.nan
    if not res.ok:
        return res.status, np.nan
    return Status.OPTIMAL, res.objective


def chebyshev_center(P: HPolytope, radius_cap: float = 1e6):
    """Center and radius of the largest inscribed ball.

    Solved in dual form (variables: one weight per row plus the radius cap);
    the center is read off the multipliers of the ``H'y = 0`` rows.
    """
    q, d = P.H.shape
    cost = np.concatenate([P.h, [radius_cap]])
    A_eq = np.hstack([P.H.T, np.zeros((d, 1))])
    A_ub = -np.ones((1, q + 1))
    res = solve_lp(LpProblem(cost, A_ub=A_ub, b_ub=[-1.0], A_eq=A_eq, b_eq=np.zeros(d),
                             lo=np.zeros(q + 1)))
    if res.status is Status.UNBOUNDED:
        raise EmptySet("polyhedron is empty")
    if not res.ok:
        raise EmptySet(f"Chebyshev LP failed: {res.status.value}")
    x = -res.nu
    r = float(np.min(P.h - P.H @ x))
    if r < -1e-7 * (1.0 + np.abs(P.h).max()):
        raise EmptySet("polyhedron is empty")
    return x, max(r, 0.0)


def is_bounded(P: HPolytope) -> bool:
    """Bounded iff some strictly positive combination of the rows vanishes."""
    q = P.q
    lp = LpProblem(np.ones(q), A_eq=P.H.T, b_eq=np.zeros(P.d), lo=np.ones(q))
    return solve_lp(lp).ok


def support(P: HPolytope, direction) -> float:
    """``max direction' x`` over ``P``."""
    st, val = _max_linear(P.H, P.h, np.asarray(direction, float))
    if st is Status.INFEASIBLE:
        raise EmptySet("support LP: empty set")
    if st is not Status.OPTIMAL and st is not Status.UNBOUNDED:
        raise EmptySet(f"support LP failed: {st.value}")
    return val


# ---------------------------------------------------------------------------
# redundancy removal


def _prune_1d(H, h):
    up = H[:, 0] > 0
    lo = ~up
    keep = []
    if up.any():
        i = np.flatnonzero(up)
        keep.append(i[np.argmin(h[i] / H[i, 0])])
    if lo.any():
        i = np.flatnonzero(lo)
        keep.append(i[np.argmin(h[i] / -H[i, 0])])
    keep = sorted(keep)
    return H[keep], h[keep]


def _prune_lp(H, h, tol):
    keep = np.ones(H.shape[0], dtype=bool)
    for i in range(H.shape[0]):
        keep[i] = False
        if not keep.any():
            keep[i] = True
            continue
        st, val = _max_linear(H[keep], h[keep], H[i])
        if st is Status.INFEASIBLE:
            raise EmptySet("polyhedron is empty")
        if st is Status.OPTIMAL and val <= h[i] + tol:
            continue
        keep[i] = True
    return H[keep], h[keep]


def _prune(H, h, tol=TOL):
    """Fast redundancy removal through the polar (dual) convex hull.

    Falls back to one LP per row when the set has no usable interior point
    or Qhull fails.
    """
    H, h = _normalize(H, h, tol)
    d = H.shape[1]
    if H.shape[0] <= d + 1:
        return H, h
    if d == 1:
        return _prune_1d(H, h)
    P = HPolytope.__new__(HPolytope)
    P.H, P.h = H, h
    c, r = chebyshev_center(P)
    if r <= 1e3 * tol:
        return _prune_lp(H, h, tol)
    slack = h - H @ c
    D = H / slack[:, None]
    try:
        hull = ConvexHull(D)
    except QhullError:
        return _prune_lp(H, h, tol)
    keep = np.sort(hull.vertices)
    return H[keep], h[keep]


def remove_redundant(P: HPolytope, tol: float = TOL) -> HPolytope:
    """Drop every row that can be removed without changing the set.

    A polar-hull pass removes the bulk; an LP pass then certifies each
    remaining row (its support without that row exceeds the offset by more
    than ``tol``).
    """
    H, h = _prune(P.H, P.h, tol)
    if P.d > 1:
        H, h = _prune_lp(H, h, tol)
    return HPolytope(H, h, validate=False, tol=tol)


# ---------------------------------------------------------------------------
# representation conversion


def _vertices_1d(H, h):
    up = H[:, 0] > 0
    if not up.any() or up.all():
        raise UnboundedSet("interval is unbounded")
    hi = np.min(h[up] / H[up, 0])
    lo = np.max(h[~up] / H[~up, 0])
    if lo > hi + TOL:
        raise EmptySet("interval is empty")
    if hi - lo <= TOL:
        raise DegenerateSet("interval has no interior")
    return np.array([[lo, hi]])


def _vertices_2d(H, h, tol):
    """Walk the facets in angular order; consecutive facets meet at a vertex."""
    ang = np.arctan2(H[:, 1], H[:, 0])
    order = np.argsort(ang)
    Hs, hs = H[order], h[order]
    nxt = np.roll(np.arange(Hs.shape[0]), -1)
    a, b = Hs, Hs[nxt]
    det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    if np.any(det <= 1e-14):
        raise UnboundedSet("consecutive facets do not close the polygon")
    x = (hs * b[:, 1] - hs[nxt] * a[:, 1]) / det
    y = (a[:, 0] * hs[nxt] - b[:, 0] * hs) / det
    V = np.vstack([x, y])
    return V


def enumerate_vertices_combinatorial(H, h, tol=TOL) -> np.ndarray:
    """All feasible intersections of ``d`` rows (brute force, d x v)."""
    H = np.asarray(H, float)
    h = np.asarray(h, float)
    q, d = H.shape
    combos = np.array(list(itertools.combinations(range(q), d)), dtype=int)
    if combos.size == 0:
        return np.zeros((d, 0))
    pts = []
    for chunk in np.array_split(combos, max(1, combos.shape[0] // 20000)):
        A = H[chunk]
        b = h[chunk]
        dets = np.linalg.det(A)
        ok = np.abs(dets) > 1e-12
        if not ok.any():
            continue
        sol = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
        feas = np.all(sol @ H.T <= h + tol, axis=1)
        pts.append(sol[feas])
    if not pts:
        return np.zeros((d, 0))
    P = np.vstack(pts)
    return _dedupe_points(P, 1e3 * tol).T


def _dedupe_points(P, tol):
    keep = []
    for i, p in enumerate(P):
        if all(np.abs(p - P[j]).max() > tol for j in keep):
            keep.append(i)
    return P[keep]


def vrep_from_hrep(P: HPolytope, tol: float = TOL) -> VPolytope:
    """Vertices of a bounded, full-dimensional polytope (d <= 3).

    2-D vertices come back in counterclockwise order.
    """
    d = P.d
    if d > 3:
        raise Unsupported("vertex enumeration is implemented for d <= 3")
    if d == 1:
        return VPolytope(_vertices_1d(P.H, P.h))
    H, h = _prune(P.H, P.h, tol)
    if d == 2:
        V = _vertices_2d(H, h, tol)
        V = _dedupe_points(V.T, 1e3 * tol).T
    else:
        V = enumerate_vertices_combinatorial(H, h, tol)
    if V.shape[1] < d + 1:
        raise DegenerateSet("fewer than d+1 vertices")
    viol = (P.H @ V - P.h[:, None]).max()
    if viol > 1e3 * tol * (1 + np.abs(V).max()):
        raise UnboundedSet(f"vertex enumeration produced an infeasible point ({viol:.2e})")
    return VPolytope(V)


def hrep_from_vrep(V: VPolytope, tol: float = TOL) -> HPolytope:
    """Facet description of the convex hull of the vertices."""
    X = V.points
    d = V.d
    if X.shape[0] < d + 1:
        raise DegenerateSet("need at least d+1 points")
    centered = X - X.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9 * max(1.0, np.abs(X).max())) < d:
        raise DegenerateSet("points are not full-dimensional")
    if d == 1:
        return HPolytope(np.array([[1.0], [-1.0]]), np.array([X.max(), -X.min()]), validate=False)
    try:
        hull = ConvexHull(X)
    except QhullError as exc:
        raise DegenerateSet(str(exc)) from exc
    H = hull.equations[:, :-1]
    h = -hull.equations[:, -1]
    if d > 2:
        H, h = _prune_lp(*_normalize(H, h, tol), tol)
    return HPolytope(H, h, validate=False, tol=tol)


# ---------------------------------------------------------------------------
# projection


def _eliminate_last(H, h, tol):
    c = H[:, -1]
    ztol = 1e-12
    pos = c > ztol
    neg = c < -ztol
    zer = ~(pos | neg)
    Hp = H[pos] / c[pos, None]
    hp = h[pos] / c[pos]
    Hn = H[neg] / -c[neg, None]
    hn = h[neg] / -c[neg]
    comb = (Hp[:, None, :] + Hn[None, :, :]).reshape(-1, H.shape[1])
    hcomb = (hp[:, None] + hn[None, :]).reshape(-1)
    Hnew = np.vstack([H[zer], comb])[:, :-1]
    hnew = np.concatenate([h[zer], hcomb])
    return _prune(Hnew, hnew, tol)


def project(P: HPolytope, keep: int, tol: float = TOL) -> HPolytope:
    """``{x | exists u: (x, u) in P}`` onto the first ``keep`` coordinates.

    Fourier-Motzkin elimination, one coordinate at a time from the last,
    with redundancy removal after every step.
    """
    if not 1 <= keep <= P.d:
        raise DimensionMismatch("keep must lie in 1..d")
    H, h = P.H, P.h
    while H.shape[1] > keep:
        H, h = _eliminate_last(H, h, tol)
        if H.shape[0] == 0:
            raise UnboundedSet("projection is unbounded")
    return HPolytope(H, h, validate=False, tol=tol)


# ---------------------------------------------------------------------------
# membership, scaling, sampling


def contains(P: HPolytope, x, tol: float = TOL):
    """Membership test; accepts one point or an (k x d) array of points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return bool(np.all(P.H @ x <= P.h + tol))
    return np.all(x @ P.H.T <= P.h + tol, axis=1)


def scale(P: HPolytope, s: float) -> HPolytope:
    """``s * P`` for ``s > 0`` (offsets scale by ``s``)."""
    if s <= 0:
        raise ValueError("scale factor must be positive")
    if np.any(P.h <= 0):
        raise DegenerateSet("origin must be interior to scale about it")
    Q = HPolytope(P.H, s * P.h, validate=False, tol=P.tol)
    if P._vertices is not None:
        Q._vertices = s * P._vertices
    return Q


def contains_set(P: HPolytope, Q: HPolytope, tol: float = TOL) -> bool:
    """True when ``Q`` is a subset of ``P`` (within ``tol``)."""
    if Q.d <= 3:
        V = Q.vertices()
        return bool(np.all(P.H @ V <= P.h[:, None] + tol))
    return all(support(Q, P.H[i]) <= P.h[i] + tol for i in range(P.q))


def bounding_box(P: HPolytope):
    if P.d <= 3:
        V = P.vertices()
        return V.min(axis=1), V.max(axis=1)
    lo = np.array([-support(P, -e) for e in np.eye(P.d)])
    hi = np.array([support(P, e) for e in np.eye(P.d)])
    return lo, hi


def ray_boundary(P: HPolytope, directions, center=None) -> np.ndarray:
    """Boundary points hit by rays from ``center`` (default: origin)."""
    directions = np.atleast_2d(directions)
    c = np.zeros(P.d) if center is None else np.asarray(center, float)
    slack = P.h - P.H @ c
    Hd = directions @ P.H.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(Hd > 1e-15, slack[None, :] / Hd, np.inf).min(axis=1)
    return c + t[:, None] * directions


def sample(P: HPolytope, mode: str, count: int, seed: int | None = None,
           rho_range=(0.95, 0.999)) -> np.ndarray:
    """Draw ``count`` points (k x d).

    ``interior``: uniform by rejection from the bounding box.
    ``boundary``: ``rho * b`` with ``b`` the boundary point along a uniformly
    random direction from the origin and ``rho`` uniform in ``rho_range``.
    ``vertices``: the vertex list (at most ``count`` rows).
    """
    rng = np.random.default_rng(seed)
    if mode in ("interior", "interior-uniform-rejection"):
        lo, hi = bounding_box(P)
        out = []
        n_have = 0
        while n_have < count:
            cand = rng.uniform(lo, hi, size=(max(64, 2 * count), P.d))
            cand = cand[contains(P, cand, 0.0)]
            out.append(cand)
            n_have += cand.shape[0]
        return np.vstack(out)[:count]
    if mode in ("boundary", "boundary-near"):
        center = None if np.all(P.h > 0) else chebyshev_center(P)[0]
        dirs = rng.normal(size=(count, P.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rho = rng.uniform(*rho_range, size=count)
        b = ray_boundary(P, dirs, center)
        c = np.zeros(P.d) if center is None else center
        return c + rho[:, None] * (b - c)
    if mode == "vertices":
        return P.vertices().T[:count].copy()
    raise ValueError(f"unknown sampling mode {mode!r}")
