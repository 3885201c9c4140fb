"""Jung ball, Lassak cover and the four-element covering system of R^4.

Canonical coordinates: the sphere where the two boundary spheres of the
Lassak cover meet lies in the hyperplane ``x_n = 0`` centred at the origin,
and both ball centres sit on the negative ``x_n`` axis.  The rhombic
dodecahedron normals live in ``x_4 = 0``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .geometry import Ball, Cover, Halfspace, membership

S2 = 1.0 / math.sqrt(2.0)

# Signs of (u3, u4, u5, u6) for the four elements; +1 keeps {<u,x> <= 1/2}, -1 keeps {<u,x> >= -1/2}.
ELEMENT_SIGNS = {
    "U1": (1, 1, 1, 1),
    "U2": (1, 1, 1, -1),
    "U3": (1, 1, -1, -1),
    "U4p": (1, -1, 1, -1),
}


def jung_radius(n: int) -> float:
    if n < 1:
        raise ValueError("dimension must be at least 1")
    return math.sqrt(n / (2 * n + 2))


def lassak_centers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Centres ``(c0, c1)`` of the Jung-radius ball and the unit ball."""
    if n < 2:
        raise ValueError("the Lassak cover needs n >= 2")
    r_sub = jung_radius(n - 1)
    h0 = math.sqrt(jung_radius(n) ** 2 - r_sub**2)
    h1 = math.sqrt(1.0 - r_sub**2)
    c0 = np.zeros(n)
    c1 = np.zeros(n)
    c0[-1] = -h0
    c1[-1] = -h1
    return c0, c1


def lassak_cover(n: int) -> Cover:
    c0, c1 = lassak_centers(n)
    return Cover(n, (Ball(c0, jung_radius(n)), Ball(c1, 1.0)), (), label=f"L{n}", witness=c0)


@dataclass(frozen=True, eq=False)
class NormalSystem:
    u: np.ndarray  # (6, 4) face-pair normals, zero last coordinate
    w: np.ndarray


def rhombic_dodecahedron_normals() -> NormalSystem:
    """Face-pair normals of a rhombic dodecahedron embedded in ``x_4 = 0``.

    ``u1, u2`` are orthogonal; ``u3..u6`` are the four normals with positive
    third coordinate, so that the reflection ``x_3 -> -x_3`` swaps them in
    pairs and fixes the sign pattern of U4.
    """
    u = S2 * np.array(
        [
            [1, 1, 0, 0],
            [1, -1, 0, 0],
            [1, 0, 1, 0],
            [-1, 0, 1, 0],
            [0, 1, 1, 0],
            [0, -1, 1, 0],
        ],
        dtype=float,
    )
    return NormalSystem(u, np.array([0.0, 0.0, 1.0, 0.0]))


def _layer(u: np.ndarray) -> list[Halfspace]:
    return [Halfspace(u, 0.5), Halfspace(-u, 0.5)]


def element_halfspaces(signs, with_w: bool = False, w_sign: int = 1) -> list[Halfspace]:
    ns = rhombic_dodecahedron_normals()
    hs = _layer(ns.u[0]) + _layer(ns.u[1])
    hs += [Halfspace(s * ns.u[2 + i], 0.5) for i, s in enumerate(signs)]
    if with_w:
        hs.append(Halfspace(w_sign * ns.w, 0.5))
    return hs


def build_ucs_r4() -> list[Cover]:
    """The four truncated Lassak covers U1, U2, U3, U4p, in this order."""
    base = lassak_cover(4)
    return [
        base.with_halfspaces(element_halfspaces(signs, with_w=(label == "U4p")), label=label)
        for label, signs in ELEMENT_SIGNS.items()
    ]


def build_demo_r2() -> list[Cover]:
    """Planar Lassak cover and its truncation by ``{x_1 <= 1/2}``."""
    base = lassak_cover(2)
    cut = base.with_halfspaces([Halfspace([1.0, 0.0], 0.5)], label="L2H")
    return [base, cut]


# ---------------------------------------------------------------------------
# symmetries of the normal configuration


def layer_symmetries() -> list[np.ndarray]:
    """Signed permutations of ``x_1..x_3`` preserving the layers H1 and H2.

    Returned as 4x4 matrices fixing ``x_4``.
    """
    ns = rhombic_dodecahedron_normals()
    target = _vector_key(np.vstack([ns.u[:2], -ns.u[:2]]))
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.eye(4)
            m[:3, :3] = 0
            for row, col in enumerate(perm):
                m[row, col] = signs[row]
            if _vector_key(np.vstack([ns.u[:2], -ns.u[:2]]) @ m.T) == target:
                out.append(m)
    return out


def _vector_key(vecs: np.ndarray) -> tuple:
    return tuple(sorted(tuple(np.round(v, 9) + 0.0) for v in vecs))


def _pattern_vectors(signs) -> np.ndarray:
    ns = rhombic_dodecahedron_normals()
    return np.array([s * ns.u[2 + i] for i, s in enumerate(signs)])


def sign_classes() -> list[frozenset]:
    """Orbits of the 16 sign patterns of (u3..u6) under :func:`layer_symmetries`."""
    syms = layer_symmetries()
    patterns = list(itertools.product((1, -1), repeat=4))
    keys = {_vector_key(_pattern_vectors(p)): p for p in patterns}
    orbits = []
    seen = set()
    for p in patterns:
        if p in seen:
            continue
        orbit = frozenset(keys[_vector_key(_pattern_vectors(p) @ g.T)] for g in syms)
        seen |= orbit
        orbits.append(orbit)
    return orbits


def _symmetry_to_element(signs) -> tuple[str, np.ndarray]:
    """Element label and layer symmetry ``g`` mapping the pattern onto it."""
    vecs = _pattern_vectors(signs)
    for label, target in ELEMENT_SIGNS.items():
        tkey = _vector_key(_pattern_vectors(target))
        for g in layer_symmetries():
            if _vector_key(vecs @ g.T) == tkey:
                return label, g
    raise AssertionError("sign pattern outside every class")


# ---------------------------------------------------------------------------
# placing a unit-diameter set into the covering system


def _enclosing_ball(points: np.ndarray) -> tuple[np.ndarray, float]:
    centroid = points.mean(axis=0)

    def radius_sq(c):
        return np.max(np.sum((points - c) ** 2, axis=1))

    # epigraph form keeps the problem smooth
    n = points.shape[1]
    x0 = np.append(centroid, radius_sq(centroid))
    cons = {
        "type": "ineq",
        "fun": lambda z: z[n] - np.sum((points - z[:n]) ** 2, axis=1),
        "jac": lambda z: np.hstack([2 * (points - z[:n]), np.ones((len(points), 1))]),
    }
    res = minimize(lambda z: z[n], x0, jac=lambda z: np.eye(n + 1)[n], constraints=[cons],
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    center = res.x[:n]
    return center, math.sqrt(radius_sq(center))


def _fibonacci_sphere(k: int) -> np.ndarray:
    i = np.arange(k) + 0.5
    phi = np.arccos(1 - 2 * i / k)
    theta = math.pi * (1 + 5**0.5) * i
    return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])


def _best_layer_direction(proj: np.ndarray, candidates: np.ndarray) -> tuple[np.ndarray, float]:
    h = proj @ candidates.T
    score = np.maximum(h.max(axis=0), -h.min(axis=0))
    k = int(np.argmin(score))
    return candidates[k], float(score[k])


def place_in_ucs(points, resolution_deg: float = 0.5):
    """Move a unit-diameter point set into one element of the covering system.

    Follows the constructive route: Lassak placement via the enclosing ball,
    then a search over directions in ``x_4 = 0`` for two orthogonal unit
    layers, then the sign pattern of the remaining normals reduced by a layer
    symmetry.  Returns ``(label, moved_points)`` or ``None`` if the finite
    direction search fails.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[1]
    if n != 4:
        raise ValueError("placement is implemented for R^4")
    r = jung_radius(n)
    c0, c1 = lassak_centers(n)

    o, radius = _enclosing_ball(pts)
    if radius > r + 1e-12:
        return None
    a = pts[np.argmax(np.linalg.norm(pts - o, axis=1))]
    c0_here = a + r * (o - a) / radius
    # Householder reflection taking (c0_here - a)/r to the +x_4 axis
    src = (c0_here - a) / r
    dst = (c0 - c1) / r
    v = src - dst
    refl = np.eye(n) if np.linalg.norm(v) < 1e-15 else np.eye(n) - 2 * np.outer(v, v) / (v @ v)
    moved = (pts - a) @ refl.T + c1

    proj = moved[:, :3]
    step = math.radians(resolution_deg)
    sphere = _fibonacci_sphere(int(4 * math.pi / step**2))
    u1, s1 = _best_layer_direction(proj, sphere)
    if s1 > 0.5:
        return None
    e_a = np.cross(u1, [1.0, 0.0, 0.0] if abs(u1[0]) < 0.9 else [0.0, 1.0, 0.0])
    e_a /= np.linalg.norm(e_a)
    e_b = np.cross(u1, e_a)
    ang = np.arange(0.0, math.pi, step)
    circle = np.outer(np.cos(ang), e_a) + np.outer(np.sin(ang), e_b)
    u2, s2 = _best_layer_direction(proj, circle)
    if s2 > 0.5:
        return None

    frame = np.array([(u1 + u2) * S2, (u1 - u2) * S2, np.cross((u1 + u2) * S2, (u1 - u2) * S2)])
    rot = np.eye(4)
    rot[:3, :3] = frame
    moved = moved @ rot.T

    ns = rhombic_dodecahedron_normals()
    signs = tuple(1 if (moved @ ns.u[2 + i]).max() <= 0.5 + 1e-12 else -1 for i in range(4))
    label, g = _symmetry_to_element(signs)
    moved = moved @ g.T
    if label == "U4p" and (moved @ ns.w).max() > 0.5:
        moved = moved * np.array([1.0, 1.0, -1.0, 1.0])
    element = {c.label: c for c in build_ucs_r4()}[label]
    if not np.all(membership(element, moved, tol=1e-9)):
        return None
    return label, moved
