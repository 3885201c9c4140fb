"""Balls, halfspaces and their intersections.

Every convex region handled by the package is a :class:`Cover`, a finite
intersection of closed Euclidean balls and closed halfspaces
``{x : <normal, x> <= offset}``.  The functions here are pure and operate
on numpy arrays; batched variants exist for the hot paths of the optimizer.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

MEMBERSHIP_TOL = 1e-12
APEX_MARGIN = 1e-9


class GeometryError(ValueError):
    """Raised when a geometric precondition is violated."""


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))
        if not self.radius > 0:
            raise GeometryError(f"ball radius must be positive, got {self.radius}")


@dataclass(frozen=True, eq=False)
class Halfspace:
    """Region ``{x : <normal, x> <= offset}`` with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = _as_point(self.normal)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise GeometryError("halfspace normal must have unit length")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def through(cls, normal, point) -> "Halfspace":
        """Halfspace with the given (not necessarily unit) normal whose boundary contains ``point``."""
        normal = np.asarray(normal, dtype=float)
        normal = normal / np.linalg.norm(normal)
        return cls(normal, float(normal @ np.asarray(point, dtype=float)))


@dataclass(frozen=True, eq=False)
class Cover:
    """Intersection of balls and halfspaces.

    ``witness`` must be a point interior to the region; it certifies a
    nonempty interior and is the default apex for partitions.
    """

    dimension: int
    balls: tuple[Ball, ...]
    halfspaces: tuple[Halfspace, ...]
    label: str = ""
    witness: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "balls", tuple(self.balls))
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        if self.dimension < 2:
            raise GeometryError("cover dimension must be at least 2")
        if not self.balls:
            raise GeometryError("a cover needs at least one ball to be bounded")
        for obj in (*self.balls, *self.halfspaces):
            vec = obj.center if isinstance(obj, Ball) else obj.normal
            if vec.shape != (self.dimension,):
                raise GeometryError("constraint dimension does not match cover dimension")
        witness = self.balls[0].center if self.witness is None else _as_point(self.witness)
        object.__setattr__(self, "witness", witness)
        if interior_margin(self, witness) <= 0:
            raise GeometryError(f"witness point is not interior to cover {self.label!r}")

    @cached_property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.balls])

    @cached_property
    def radii(self) -> np.ndarray:
        return np.array([b.radius for b in self.balls])

    @cached_property
    def normals(self) -> np.ndarray:
        if not self.halfspaces:
            return np.zeros((0, self.dimension))
        return np.array([h.normal for h in self.halfspaces])

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([h.offset for h in self.halfspaces], dtype=float)

    @cached_property
    def fingerprint(self) -> str:
        """Content hash, used as a cache key for derived polytopes."""
        h = hashlib.sha1()
        for arr in (self.centers, self.radii, self.normals, self.offsets):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return h.hexdigest()

    def with_halfspaces(self, extra: Sequence[Halfspace], label: str | None = None) -> "Cover":
        return Cover(
            self.dimension,
            self.balls,
            self.halfspaces + tuple(extra),
            self.label if label is None else label,
            self.witness,
        )


def _as_point(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise GeometryError("points must be finite 1-d coordinate vectors")
    arr.setflags(write=False)
    return arr


def _check_dim(cover: Cover, x: np.ndarray):
    if x.shape[-1] != cover.dimension:
        raise GeometryError(
            f"point dimension {x.shape[-1]} does not match cover dimension {cover.dimension}"
        )


def interior_margin(cover: Cover, x) -> np.ndarray:
    """Smallest constraint slack at ``x`` (positive inside, negative outside).

    Accepts a single point or an ``(k, n)`` array.
    """
    x = np.asarray(x, dtype=float)
    _check_dim(cover, x)
    dist = np.linalg.norm(x[..., None, :] - cover.centers, axis=-1)
    slack = cover.radii - dist
    if cover.halfspaces:
        slack = np.concatenate([slack, cover.offsets - x @ cover.normals.T], axis=-1)
    return slack.min(axis=-1)


def membership(cover: Cover, x, tol: float = MEMBERSHIP_TOL):
    """True where ``x`` lies in every ball and halfspace, boundary included up to ``tol``."""
    x = np.asarray(x, dtype=float)
    _check_dim(cover, x)
    inside = np.all(
        np.linalg.norm(x[..., None, :] - cover.centers, axis=-1) <= cover.radii + tol, axis=-1
    )
    if cover.halfspaces:
        inside &= np.all(x @ cover.normals.T <= cover.offsets + tol, axis=-1)
    return bool(inside) if inside.ndim == 0 else inside


def ray_exits(cover: Cover, w, directions, check_apex: bool = True) -> np.ndarray:
    """Exit parameters ``sup{t >= 0 : w + t d in cover}`` for each row ``d``.

    Directions need not be normalized; the returned parameter is with respect
    to the vector as given.  Closed form: positive quadratic root per ball,
    ``(offset - <n, w>) / <n, d>`` per halfspace facing the ray.
    """
    w = np.asarray(w, dtype=float)
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    _check_dim(cover, w)
    if check_apex and interior_margin(cover, w) < APEX_MARGIN:
        raise GeometryError("apex is not interior to the cover")

    # ball: |o + t d|^2 = r^2 with o = w - c; a t^2 + 2 b t + cc = 0, cc < 0
    o = w - cover.centers
    a = np.einsum("ij,ij->i", d, d)[:, None]
    b = d @ o.T
    cc = np.einsum("ij,ij->i", o, o) - cover.radii**2
    disc = np.sqrt(b * b - a * cc)
    # cancellation-free form of (-b + disc) / a
    t_ball = np.where(b > 0, -cc / (b + disc), (disc - b) / a)
    t = t_ball.min(axis=1)

    if cover.halfspaces:
        nd = d @ cover.normals.T
        gap = cover.offsets - cover.normals @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            t_half = np.where(nd > 0, gap / nd, np.inf)
        t = np.minimum(t, t_half.min(axis=1))
    return t


def ray_exit(cover: Cover, w, d) -> float:
    """Exit parameter of the ray ``w + t d`` for a unit direction ``d``."""
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise GeometryError("ray direction must be a unit vector")
    t = float(ray_exits(cover, w, d[None, :])[0])
    assert np.isfinite(t) and t > 0
    return t


def diameter(points) -> tuple[float, tuple[int, int]]:
    """Largest pairwise distance and the pair attaining it.

    Every pair is screened through the Gram matrix; all pairs within a
    rounding margin of the screened maximum are then recomputed from
    coordinate differences, so the value is the exact-arithmetic maximum up
    to float rounding.  Among pairs whose squared distance agrees with the
    maximum to a relative 2e-14 (float noise on exact ties) the
    lexicographically smallest index pair is returned.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise GeometryError("diameter needs at least two points of common dimension")
    idx = _diameter_candidates(pts)
    value, (i, j) = _diameter_exact(pts[idx])
    return value, (int(idx[i]), int(idx[j]))


def _diameter_candidates(pts: np.ndarray, pivots: int = 6) -> np.ndarray:
    """Indices of points that can still belong to a farthest pair.

    A lower bound comes from a few farthest-point sweeps; a point survives if
    its triangle-inequality bound through every pivot reaches that bound.
    """
    if len(pts) <= 256:
        return np.arange(len(pts))
    start = pts[np.argmax(np.linalg.norm(pts - pts.mean(axis=0), axis=1))]
    lower = 0.0
    dists = []
    current = start
    for _ in range(pivots):
        d = np.linalg.norm(pts - current, axis=1)
        dists.append(d)
        far = int(np.argmax(d))
        lower = max(lower, float(d[far]))
        current = pts[far]
    dists = np.array(dists)
    bound = (dists + dists.max(axis=1, keepdims=True)).min(axis=0)
    return np.flatnonzero(bound >= lower * (1 - 1e-12) - 1e-12)


def _diameter_exact(pts: np.ndarray) -> tuple[float, tuple[int, int]]:
    k = len(pts)
    sq_norm = np.einsum("ij,ij->i", pts, pts)
    margin = 1e-10 * max(1.0, float(sq_norm.max()))
    block = max(1, min(k, 2_000_000 // k))
    top = -np.inf
    found = []
    for start in range(0, k, block):
        stop = min(k, start + block)
        sq = sq_norm[start:stop, None] + sq_norm[None, start:] - 2 * pts[start:stop] @ pts[start:].T
        size = stop - start
        sq[:, :size][np.tril_indices(size)] = -np.inf
        blk_top = float(sq.max())
        if blk_top < top - margin:
            continue
        top = max(top, blk_top)
        i, j = np.nonzero(sq >= top - margin)
        found.append(np.column_stack([i + start, j + start]))
    cand = np.vstack(found)
    diff = pts[cand[:, 0]] - pts[cand[:, 1]]
    sq = np.einsum("ij,ij->i", diff, diff)
    best = float(sq.max())
    tied = cand[sq >= best * (1 - 2e-14)]
    i, j = min(map(tuple, tied))
    return float(np.sqrt(best)), (int(i), int(j))


def pairwise_diameters(point_sets: np.ndarray) -> np.ndarray:
    """Diameters of a stack of equally sized point sets, shape ``(p, k, n)``.

    The maximizing pair is located through the Gram matrix and its distance
    then recomputed from the coordinate difference.
    """
    pts = np.asarray(point_sets, dtype=float)
    sq_norm = np.einsum("pkn,pkn->pk", pts, pts)
    gram = pts @ pts.transpose(0, 2, 1)
    sq = sq_norm[:, :, None] + sq_norm[:, None, :] - 2 * gram
    k = pts.shape[1]
    flat = sq.reshape(len(pts), -1).argmax(axis=1)
    i, j = np.divmod(flat, k)
    rows = np.arange(len(pts))
    return np.linalg.norm(pts[rows, i] - pts[rows, j], axis=1)


def haar_orthogonal_rng(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix drawn from ``rng``.

    QR of a standard Gaussian matrix, with the columns of Q rescaled so that
    R has a positive diagonal; without that correction the law is not Haar.
    """
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def haar_orthogonal(seed: int, n: int) -> np.ndarray:
    return haar_orthogonal_rng(np.random.default_rng(seed), n)


def is_orthogonal(q: np.ndarray, tol: float = 1e-10) -> bool:
    q = np.asarray(q, dtype=float)
    return q.ndim == 2 and q.shape[0] == q.shape[1] and np.abs(q.T @ q - np.eye(len(q))).max() <= tol


def sample_cover(cover: Cover, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` points uniformly distributed in the cover (rejection from the tightest ball's box)."""
    ball = min(cover.balls, key=lambda b: b.radius)
    out = []
    got = 0
    while got < k:
        batch = max(1024, 2 * (k - got))
        # uniform in the ball via normalized Gaussian and radial power law
        g = rng.standard_normal((batch, cover.dimension))
        g /= np.linalg.norm(g, axis=1)[:, None]
        rad = ball.radius * rng.random(batch) ** (1.0 / cover.dimension)
        cand = ball.center + g * rad[:, None]
        cand = cand[membership(cover, cand, tol=0.0)]
        out.append(cand)
        got += len(cand)
    return np.concatenate(out)[:k]


def random_unit_vectors(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
    g = rng.standard_normal((k, n))
    return g / np.linalg.norm(g, axis=1)[:, None]
