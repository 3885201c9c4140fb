"""Circumscribed polytopes and the certified upper bound on part diameters.

The outer approximation casts rays from the centre ``c0`` of the Jung-radius
ball through a grid on the boundary of a cube, takes the tangent halfspace of
the active ball at every exit point and adds the cover's own halfspaces.
Part polytopes are that polytope cut by the cone of each facet; their vertex
diameters bound the true part diameters from above.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .geometry import Cover, GeometryError, diameter, ray_exits
from .partition import DirectionSystem, check_apex, cone_normal_array, facet_centers

VERTEX_DEDUP = 1e-9
WITNESS_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class Polytope:
    """Bounded intersection ``{x : A x <= b}`` with its vertices.

    ``incidence`` is a CSR pair ``(indptr, indices)``: the rows of ``A``
    active at vertex ``k`` are ``indices[indptr[k]:indptr[k + 1]]``.
    """

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray
    incidence: tuple | None = None

    def active_rows(self, k: int) -> np.ndarray:
        indptr, indices = self.incidence
        return indices[indptr[k]:indptr[k + 1]]

    @property
    def dimension(self) -> int:
        return self.normals.shape[1]

    def contains(self, x, tol: float = 1e-9):
        x = np.asarray(x, dtype=float)
        return np.all(x @ self.normals.T <= self.offsets + tol, axis=-1)

    def support(self, u) -> np.ndarray:
        """Support function ``max_v <u, v>`` for one or many directions."""
        return (np.atleast_2d(u) @ self.vertices.T).max(axis=1)


@dataclass(frozen=True)
class UpperBoundReport:
    diameters: tuple[float, ...]
    max_diameter: float
    m: int
    vertex_counts: tuple[int, ...]


def hypercube_boundary_grid(n: int, m: int) -> np.ndarray:
    """Points of ``{0, 1/m, ..., 1}^n`` with at least one coordinate equal to 0 or 1."""
    if n < 2 or m < 1:
        raise ValueError("need n >= 2 and m >= 1")
    ticks = np.arange(m + 1)
    grid = np.array(list(itertools.product(ticks, repeat=n)), dtype=int)
    on_boundary = np.any((grid == 0) | (grid == m), axis=1)
    return grid[on_boundary] / m


# ---------------------------------------------------------------------------
# vertex enumeration


def chebyshev_center(normals: np.ndarray, offsets: np.ndarray) -> tuple[np.ndarray, float]:
    """Centre and radius of the largest ball inside ``{A x <= b}`` (unit-norm rows)."""
    n = normals.shape[1]
    norms = np.linalg.norm(normals, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub = np.hstack([normals, norms[:, None]])
    res = linprog(c, A_ub=a_ub, b_ub=offsets, bounds=[(None, None)] * n + [(0, None)],
                  method="highs")
    if res.status == 3:
        raise GeometryError("halfspace intersection is unbounded")
    if res.status != 0:
        raise GeometryError("halfspace intersection is empty")
    return res.x[:n], float(res.x[-1])


def vertex_enumeration(normals, offsets, witness=None, with_incidence: bool = False):
    """Vertices of ``{x : normals @ x <= offsets}`` by polar duality.

    Each halfspace is mapped to the dual point ``a / (b - <a, z>)`` about an
    interior witness ``z``; facets of the dual hull correspond to primal
    vertices.  Output is deduplicated and sorted lexicographically.
    """
    a = np.asarray(normals, dtype=float)
    b = np.asarray(offsets, dtype=float)
    n = a.shape[1]
    if witness is None:
        witness, radius = chebyshev_center(a, b)
        if radius < WITNESS_SLACK:
            raise GeometryError("halfspace intersection is empty or lower-dimensional")
    z = np.asarray(witness, dtype=float)
    slack = b - a @ z
    if slack.min() < WITNESS_SLACK:
        raise GeometryError("witness point is not strictly interior")
    dual = a / slack[:, None]
    try:
        hull = ConvexHull(dual)
    except QhullError as exc:
        raise GeometryError(f"degenerate halfspace system: {exc}") from exc
    eq = hull.equations
    if eq[:, -1].max() > -1e-12:
        raise GeometryError("halfspace intersection is unbounded")
    verts = z + eq[:, :n] / (-eq[:, -1])[:, None]

    # non-simplicial dual facets yield repeated vertices
    pairs = cKDTree(verts).query_pairs(VERTEX_DEDUP, p=np.inf, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(verts),) * 2)
    n_groups, label = connected_components(graph, directed=False)
    first = np.full(n_groups, len(verts))
    np.minimum.at(first, label, np.arange(len(verts)))
    out = verts[first]
    order = np.lexsort(out.T[::-1])
    out = out[order]
    if not with_incidence:
        return out
    rank = np.empty(n_groups, dtype=int)
    rank[order] = np.arange(n_groups)
    group = np.repeat(rank[label], n)
    facet = hull.simplices.ravel()
    # unique (vertex, halfspace) incidences in CSR layout
    pair = np.unique(group.astype(np.int64) * len(a) + facet)
    rows, cols = np.divmod(pair, len(a))
    indptr = np.searchsorted(rows, np.arange(n_groups + 1))
    return out, (indptr, cols)


def polytope_from_halfspaces(normals, offsets, witness=None) -> Polytope:
    normals = np.asarray(normals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    verts, inc = vertex_enumeration(normals, offsets, witness, with_incidence=True)
    return Polytope(normals, offsets, verts, inc)


# ---------------------------------------------------------------------------
# circumscribed polytope


def tangent_halfspaces(cover: Cover, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Tangent halfspaces of the cover's balls at the grid-ray exit points.

    Where both balls are active (within 1e-9) both tangents are emitted.
    """
    c0 = cover.balls[0].center
    r = cover.balls[0].radius
    grid = hypercube_boundary_grid(cover.dimension, m)
    targets = c0 + r * (grid - 0.5)
    dirs = targets - c0
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    lam_only_balls = Cover(cover.dimension, cover.balls, (), witness=c0)
    t = ray_exits(lam_only_balls, c0, dirs)
    pts = c0 + t[:, None] * dirs
    normals, offsets = [], []
    for ball in cover.balls:
        dist = np.linalg.norm(pts - ball.center, axis=1)
        active = np.abs(dist - ball.radius) <= 1e-9
        nrm = (pts[active] - ball.center) / ball.radius
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        normals.append(nrm)
        offsets.append(np.einsum("ij,ij->i", nrm, pts[active]))
    return np.vstack(normals), np.concatenate(offsets)


def _dedupe_halfspaces(normals: np.ndarray, offsets: np.ndarray, tol: float = 1e-10):
    key = np.round(np.column_stack([normals, offsets]) / tol).astype(np.int64)
    _, idx = np.unique(key, axis=0, return_index=True)
    idx.sort()
    return normals[idx], offsets[idx]


def circumscribe(cover: Cover, m: int) -> Polytope:
    """Outer polytope of the cover from ``m``-grid tangent halfspaces plus the cover's halfspaces."""
    normals, offsets = tangent_halfspaces(cover, m)
    if cover.halfspaces:
        normals = np.vstack([normals, cover.normals])
        offsets = np.concatenate([offsets, cover.offsets])
    normals, offsets = _dedupe_halfspaces(normals, offsets)
    return polytope_from_halfspaces(normals, offsets, cover.witness)


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def circumscribed(cover: Cover, m: int) -> Polytope:
    """Memoized :func:`circumscribe`; the polytope depends only on the cover and ``m``."""
    key = (cover.fingerprint, m)
    with _CACHE_LOCK:
        if key in _CACHE:
            return _CACHE[key]
    poly = circumscribe(cover, m)
    with _CACHE_LOCK:
        _CACHE[key] = poly
    return poly


# ---------------------------------------------------------------------------
# parts


def _interior_point(poly_normals, poly_offsets, apex, center, cone):
    """Point strictly inside ``P ∩ cone``: a step from the apex along the facet centre."""
    along = poly_normals @ center
    gap = poly_offsets - poly_normals @ apex
    with np.errstate(divide="ignore"):
        reach = np.where(along > 0, gap / along, np.inf).min()
    z = apex + 0.5 * reach * center
    slack = np.concatenate([poly_offsets - poly_normals @ z, -(cone @ (z - apex))])
    if slack.min() >= WITNESS_SLACK:
        return z
    a = np.vstack([poly_normals, cone])
    b = np.concatenate([poly_offsets, cone @ apex])
    z, radius = chebyshev_center(a, b)
    if radius < WITNESS_SLACK:
        return None
    return z


def part_polytope(p_h: Polytope, ds: DirectionSystem, i: int, center=None) -> Polytope | None:
    """``P_H`` cut by the cone of facet ``i``; ``None`` if the part is empty or flat.

    Only halfspaces of ``P_H`` with an active vertex near the cone enter the
    first hull; any dropped halfspace violated by the result is added back
    until none is, so the output is exactly ``P_H ∩ cone``.
    """
    cone = cone_normal_array(ds, i)
    apex = ds.apex
    if center is None:
        center = facet_centers(ds)[i]
    verts = p_h.vertices
    # angular slack: vertices outside the cone but close to it may carry relevant facets
    rel = verts - apex
    near = (rel @ cone.T).max(axis=1) <= 0.05 * np.linalg.norm(rel, axis=1)
    indptr, indices = p_h.incidence
    counts = np.diff(indptr)
    selected = np.zeros(len(p_h.offsets), dtype=bool)
    selected[indices[np.repeat(near, counts)]] = True

    z = _interior_point(p_h.normals, p_h.offsets, apex, center, cone)
    if z is None:
        return None
    for _ in range(50):
        a = np.vstack([p_h.normals[selected], cone])
        b = np.concatenate([p_h.offsets[selected], cone @ apex])
        try:
            out = vertex_enumeration(a, b, z)
        except GeometryError as exc:
            if "unbounded" not in str(exc):
                raise
            # the selection left the region unbounded
            selected[:] = True
            continue
        rest = np.flatnonzero(~selected)
        # bounding-ball screen before the exact check
        mid = out.mean(axis=0)
        rad = np.linalg.norm(out - mid, axis=1).max()
        rest = rest[p_h.normals[rest] @ mid + rad > p_h.offsets[rest] + 1e-12]
        viol = np.any(out @ p_h.normals[rest].T > p_h.offsets[rest] + 1e-12, axis=0)
        if not viol.any():
            return Polytope(a, b, out)
        selected[rest[viol]] = True
    raise GeometryError("part polytope refinement did not converge")


def part_polytopes(p_h: Polytope, ds: DirectionSystem) -> list[Polytope | None]:
    centers = facet_centers(ds)
    return [part_polytope(p_h, ds, i, centers[i]) for i in range(ds.n_parts)]


def objective_upper(cover: Cover, ds: DirectionSystem, m: int) -> UpperBoundReport:
    """Vertex diameters of the part polytopes; each bounds its true part from above."""
    check_apex(cover, ds)
    p_h = circumscribed(cover, m)
    diams, counts = [], []
    for part in part_polytopes(p_h, ds):
        if part is None:
            diams.append(0.0)
            counts.append(0)
            continue
        diams.append(diameter(part.vertices)[0] if len(part.vertices) > 1 else 0.0)
        counts.append(len(part.vertices))
    return UpperBoundReport(tuple(diams), max(diams), m, tuple(counts))
