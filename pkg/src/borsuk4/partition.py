"""Cone-induced partitions of a cover and their inscribed point samples.

A :class:`DirectionSystem` is an apex plus unit directions grouped into
facets.  Facet ``i`` spans the cone with apex ``w`` over its directions, and
part ``i`` of a cover is the cover cut by that cone.  For the hypercube
system of R^4 there are 16 directions (normalized vertices of ``{-1, 1}^4``)
and 8 facets; facet ``2j`` collects the vertices with coordinate ``j`` equal
to -1 and facet ``2j + 1`` those equal to +1 (0-based).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .geometry import (
    APEX_MARGIN,
    Cover,
    GeometryError,
    Halfspace,
    interior_margin,
    is_orthogonal,
    pairwise_diameters,
    random_unit_vectors,
    ray_exits,
)

RIGID = "rigid"
FREE = "free"


@dataclass(frozen=True, eq=False)
class DirectionSystem:
    apex: np.ndarray
    directions: np.ndarray
    facets: tuple[tuple[int, ...], ...]
    mode: str = RIGID
    rotation: np.ndarray | None = None
    base: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        apex = np.array(self.apex, dtype=float)
        dirs = np.array(self.directions, dtype=float)
        facets = tuple(tuple(int(j) for j in f) for f in self.facets)
        object.__setattr__(self, "apex", apex)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "facets", facets)
        if dirs.ndim != 2 or dirs.shape[1] != apex.shape[0]:
            raise GeometryError("directions and apex disagree in dimension")
        if np.abs(np.linalg.norm(dirs, axis=1) - 1).max() > 1e-12:
            raise GeometryError("directions must be unit vectors")
        if any(j < 0 or j >= len(dirs) for f in facets for j in f):
            raise GeometryError("facet index out of range")
        if self.mode not in (RIGID, FREE):
            raise GeometryError(f"unknown mode {self.mode!r}")
        if self.mode == RIGID:
            if self.rotation is None or self.base is None:
                raise GeometryError("rigid systems carry a rotation and base directions")
            q = np.array(self.rotation, dtype=float)
            base = np.array(self.base, dtype=float)
            if not is_orthogonal(q):
                raise GeometryError("rotation is not orthogonal")
            if np.abs(base @ q.T - dirs).max() > 1e-9:
                raise GeometryError("directions differ from the rotated base directions")
            object.__setattr__(self, "rotation", q)
            object.__setattr__(self, "base", base)

    @property
    def dimension(self) -> int:
        return len(self.apex)

    @property
    def n_parts(self) -> int:
        return len(self.facets)

    def moved(self, apex=None, rotation=None) -> "DirectionSystem":
        """Copy with a new apex and/or rotation (rigid systems only for rotation)."""
        changes = {}
        if apex is not None:
            changes["apex"] = np.asarray(apex, dtype=float)
        if rotation is not None:
            if self.mode != RIGID:
                raise GeometryError("only rigid systems can be rotated")
            changes["rotation"] = rotation
            changes["directions"] = self.base @ np.asarray(rotation).T
        return replace(self, **changes)


def hypercube_directions(n: int = 4) -> tuple[np.ndarray, tuple[tuple[int, ...], ...]]:
    """Normalized vertices of ``{-1, 1}^n`` in lexicographic order and the ``2n`` facet index sets."""
    verts = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    dirs = verts / math.sqrt(n)
    facets = []
    for j in range(n):
        facets.append(tuple(int(i) for i in np.flatnonzero(verts[:, j] == -1)))
        facets.append(tuple(int(i) for i in np.flatnonzero(verts[:, j] == 1)))
    return dirs, tuple(facets)


def hexagon_directions() -> tuple[np.ndarray, tuple[tuple[int, ...], ...]]:
    """Planar analogue: six directions at multiples of 60 degrees, three facets of 120 degrees."""
    ang = 2 * np.pi * np.arange(6) / 6
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    facets = tuple((2 * j, 2 * j + 1, (2 * j + 2) % 6) for j in range(3))
    return dirs, facets


def standard_directions(n: int):
    return hexagon_directions() if n == 2 else hypercube_directions(n)


def rigid_system(apex, rotation, n: int | None = None) -> DirectionSystem:
    rotation = np.asarray(rotation, dtype=float)
    base, facets = standard_directions(n or len(rotation))
    return DirectionSystem(apex, base @ rotation.T, facets, RIGID, rotation, base)


# ---------------------------------------------------------------------------
# cones


def facet_centers(ds: DirectionSystem) -> np.ndarray:
    """Unit vector along the sum of each facet's directions."""
    sums = np.array([ds.directions[list(f)].sum(axis=0) for f in ds.facets])
    return sums / np.linalg.norm(sums, axis=1)[:, None]


def _base_centers(ds: DirectionSystem) -> np.ndarray:
    sums = np.array([ds.base[list(f)].sum(axis=0) for f in ds.facets])
    return sums / np.linalg.norm(sums, axis=1)[:, None]


def assign_part(x, ds: DirectionSystem):
    """Index of the part containing ``x`` (single point or ``(k, n)`` array).

    With ``y = Q^T (x - w)`` the part is the facet whose centre direction has
    the largest inner product with ``y``; for the hypercube system this is
    the facet of the dominant coordinate of ``y`` with its sign.  Ties go to
    the smallest facet index.
    """
    if ds.mode != RIGID:
        raise GeometryError("free systems have no closed-form assignment; use cone_halfspaces")
    x = np.asarray(x, dtype=float)
    y = (x - ds.apex) @ ds.rotation
    scores = y @ _base_centers(ds).T
    return np.argmax(scores, axis=-1) if scores.ndim > 1 else int(np.argmax(scores))


def _cone_normals(directions: np.ndarray) -> np.ndarray:
    """Outward unit normals of the cone spanned by ``directions`` (apex at the origin)."""
    n = directions.shape[1]
    if np.linalg.matrix_rank(directions) < n:
        raise GeometryError("facet directions do not span a full-dimensional cone")
    pts = np.vstack([np.zeros(n), directions])
    hull = ConvexHull(pts)
    if 0 not in hull.vertices:
        raise GeometryError("facet cone is not pointed")
    eq = hull.equations
    through_origin = eq[np.abs(eq[:, -1]) < 1e-12, :-1]
    normals = []
    for v in through_origin:
        v = v / np.linalg.norm(v)
        if not any(np.abs(v - u).max() < 1e-10 for u in normals):
            normals.append(v)
    return np.array(normals)


@lru_cache(maxsize=64)
def _cached_cone_normals(key: bytes, shape: tuple[int, int]) -> np.ndarray:
    return _cone_normals(np.frombuffer(key).reshape(shape))


def cone_normal_array(ds: DirectionSystem, i: int) -> np.ndarray:
    """Outward unit normals of cone ``i``; each halfspace is ``<n, x - w> <= 0``."""
    if ds.mode == RIGID:
        base = np.ascontiguousarray(ds.base[list(ds.facets[i])])
        return _cached_cone_normals(base.tobytes(), base.shape) @ ds.rotation.T
    return _cone_normals(ds.directions[list(ds.facets[i])])


def cone_halfspaces(ds: DirectionSystem, i: int) -> list[Halfspace]:
    return [Halfspace(v, float(v @ ds.apex)) for v in cone_normal_array(ds, i)]


def cone_membership(x, ds: DirectionSystem, i: int, tol: float = 1e-9):
    x = np.asarray(x, dtype=float)
    normals = cone_normal_array(ds, i)
    return np.all((x - ds.apex) @ normals.T <= tol, axis=-1)


def fan_is_valid(ds: DirectionSystem, n_samples: int = 1_000_000, seed: int = 0) -> bool:
    """Check by sampling that the facet cones cover every direction."""
    rng = np.random.default_rng(seed)
    normals = [cone_normal_array(ds, i) for i in range(ds.n_parts)]
    chunk = 100_000
    for start in range(0, n_samples, chunk):
        u = random_unit_vectors(rng, min(chunk, n_samples - start), ds.dimension)
        covered = np.zeros(len(u), dtype=bool)
        for nrm in normals:
            covered |= np.all(u @ nrm.T <= 1e-12, axis=1)
        if not covered.all():
            return False
    return True


# ---------------------------------------------------------------------------
# boundary points and samples


def boundary_points(cover: Cover, ds: DirectionSystem, check_hull: bool = True) -> np.ndarray:
    """Exit points ``x_i = w + lambda_i d_i`` of the rays from the apex."""
    lam = ray_exits(cover, ds.apex, ds.directions)
    pts = ds.apex + lam[:, None] * ds.directions
    if check_hull and not in_convex_hull(ds.apex, pts):
        raise GeometryError("apex is not in the convex hull of the boundary points")
    return pts


def in_convex_hull(x, points) -> bool:
    """Feasibility of ``x = sum a_k p_k`` with ``a >= 0, sum a = 1``."""
    points = np.asarray(points, dtype=float)
    a_eq = np.vstack([points.T, np.ones(len(points))])
    b_eq = np.append(np.asarray(x, dtype=float), 1.0)
    res = linprog(np.zeros(len(points)), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


@dataclass(frozen=True, eq=False)
class SampleSet:
    part: int
    points: np.ndarray
    m: int


@lru_cache(maxsize=32)
def _blend_plan(facets: tuple[tuple[int, ...], ...], m: int):
    """Index pairs and weights for all blended directions of every facet.

    Returns ``(p_idx, q_idx, theta)`` arrays of shape ``(parts, pairs * m)``.
    """
    p_rows, q_rows = [], []
    for f in facets:
        pairs = list(itertools.combinations(f, 2))
        p_rows.append(np.repeat([p for p, _ in pairs], m))
        q_rows.append(np.repeat([q for _, q in pairs], m))
    theta = np.tile(np.arange(1, m + 1) / (m + 1), len(list(itertools.combinations(facets[0], 2))))
    return np.array(p_rows, dtype=int), np.array(q_rows, dtype=int), theta


def _sample_stack(cover: Cover, ds: DirectionSystem, m: int) -> np.ndarray:
    """All part samples as an array ``(parts, 1 + |F| + pairs * m, n)``."""
    if len({len(f) for f in ds.facets}) != 1:
        raise GeometryError("facets must have equal size")
    lam = ray_exits(cover, ds.apex, ds.directions)
    tips = ds.apex + lam[:, None] * ds.directions
    facet_idx = np.array(ds.facets)
    parts = [np.broadcast_to(ds.apex, (ds.n_parts, 1, ds.dimension)), tips[facet_idx]]
    if m > 0:
        p_idx, q_idx, theta = _blend_plan(ds.facets, m)
        blend = (theta[None, :, None] * ds.directions[p_idx]
                 + (1 - theta)[None, :, None] * ds.directions[q_idx])
        norms = np.linalg.norm(blend, axis=-1)
        if norms.min() < 1e-12:
            raise GeometryError("blended direction vanishes (antipodal facet directions)")
        blend /= norms[..., None]
        flat = blend.reshape(-1, ds.dimension)
        t = ray_exits(cover, ds.apex, flat, check_apex=False)
        parts.append((ds.apex + t[:, None] * flat).reshape(blend.shape))
    return np.concatenate(parts, axis=1)


def lower_sample(cover: Cover, ds: DirectionSystem, i: int, m: int) -> SampleSet:
    if m < 0:
        raise ValueError("grid parameter m must be non-negative")
    return SampleSet(i, _sample_stack(cover, ds, m)[i].copy(), m)


def lower_part_diameters(cover: Cover, ds: DirectionSystem, m: int) -> np.ndarray:
    return pairwise_diameters(_sample_stack(cover, ds, m))


def lower_pair_distances(cover: Cover, ds: DirectionSystem, m: int) -> np.ndarray:
    """All within-part pairwise distances, shape ``(parts, k, k)``."""
    pts = _sample_stack(cover, ds, m)
    sq_norm = np.einsum("pkn,pkn->pk", pts, pts)
    sq = sq_norm[:, :, None] + sq_norm[:, None, :] - 2 * pts @ pts.transpose(0, 2, 1)
    return np.sqrt(np.maximum(sq, 0.0))


def objective_lower(cover: Cover, ds: DirectionSystem, m: int) -> float:
    """Largest sampled part diameter; never exceeds the true partition diameter."""
    return float(lower_part_diameters(cover, ds, m).max())


def check_apex(cover: Cover, ds: DirectionSystem, margin: float = APEX_MARGIN):
    if ds.dimension != cover.dimension:
        raise GeometryError("direction system and cover disagree in dimension")
    if interior_margin(cover, ds.apex) < margin:
        raise GeometryError("apex is not interior to the cover")
