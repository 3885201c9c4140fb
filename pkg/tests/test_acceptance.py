"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line (echoed in the terminal summary and on
stdout) before asserting, so a failing criterion is reported rather than
hidden behind the first assertion error.
"""
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.spatial import cKDTree

from conftest import ACCEPTANCE_LINES

from borsuk4 import specfile
from borsuk4.cli import main
from borsuk4.covers import build_ucs_r4, jung_radius, lassak_centers, lassak_cover
from borsuk4.geometry import diameter, haar_orthogonal, random_unit_vectors, ray_exits, sample_cover
from borsuk4.optimize import PASS_THRESHOLD, RestartResult, certify, select_best
from borsuk4.partition import (
    assign_part,
    cone_membership,
    lower_part_diameters,
    lower_sample,
    rigid_system,
)
from borsuk4.polytope import (
    circumscribed,
    objective_upper,
    part_polytopes,
    vertex_enumeration,
)

LABELS = ("U1", "U2", "U3", "U4p")


def record(name, ok, detail, started):
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"{status}  {name}: {detail} ({time.perf_counter() - started:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def random_rigid(cover, seed, jitter=0.03):
    rng = np.random.default_rng(seed)
    return rigid_system(cover.witness + jitter * rng.standard_normal(4), haar_orthogonal(seed, 4))


def test_jung_radius():
    t = time.perf_counter()
    exact = all(jung_radius(n) == math.sqrt(n / (2 * n + 2)) for n in range(1, 9))
    # unit-edge regular 4-simplex, vertices e_i / sqrt(2) in R^5
    verts = np.eye(5) / math.sqrt(2)
    edge_ok = abs(diameter(verts)[0] - 1) < 1e-15
    circ = np.linalg.norm(verts - verts.mean(axis=0), axis=1)
    err = float(np.abs(circ - jung_radius(4)).max())
    ok = exact and edge_ok and err < 1e-12
    assert record("Jung radius", ok, f"closed form n=1..8, simplex circumradius error {err:.1e}", t)


def test_canonical_l4_geometry():
    t = time.perf_counter()
    c0, c1 = lassak_centers(4)
    dist_err = abs(np.linalg.norm(c0 - c1) - math.sqrt(0.4))
    rng = np.random.default_rng(0)
    u = random_unit_vectors(rng, 1000, 3)
    circle = np.column_stack([math.sqrt(3 / 8) * u, np.zeros(len(u))])
    e0 = np.abs(np.linalg.norm(circle - c0, axis=1) - jung_radius(4)).max()
    e1 = np.abs(np.linalg.norm(circle - c1, axis=1) - 1.0).max()
    err = max(dist_err, e0, e1)
    ok = err < 1e-12
    assert record("Canonical L4 geometry", ok, f"max error {err:.1e}", t)


def test_partition_property():
    t = time.perf_counter()
    rng = np.random.default_rng(1)
    failures = 0
    for cover in build_ucs_r4():
        pts = sample_cover(cover, 100_000, rng)
        for s in range(20):
            ds = random_rigid(cover, 1000 + s)
            part = assign_part(pts, ds)
            closed = np.array([cone_membership(pts, ds, i, tol=1e-12) for i in range(8)])
            interior = np.array([cone_membership(pts, ds, i, tol=-1e-12) for i in range(8)])
            covered = closed.any(axis=0).all()
            own = closed[part, np.arange(len(pts))].all()
            disjoint = interior.sum(axis=0).max() <= 1
            valid = (part >= 0).all() and (part < 8).all()
            failures += not (covered and own and disjoint and valid)
    ok = failures == 0
    assert record("Partition property", ok,
                  f"4 elements x 20 systems x 1e5 points, {failures} failing systems", t)


def test_sandwich_bound():
    t = time.perf_counter()
    ucs = build_ucs_r4()
    worst_gap, outside = np.inf, 0
    for k in range(100):
        cover = ucs[k % 4]
        ds = random_rigid(cover, 2000 + k)
        lower = lower_part_diameters(cover, ds, 5)
        report = objective_upper(cover, ds, 5)
        worst_gap = min(worst_gap, float((np.array(report.diameters) - lower).min()))
        parts = part_polytopes(circumscribed(cover, 5), ds)
        for i, part in enumerate(parts):
            outside += int((~part.contains(lower_sample(cover, ds, i, 5).points, tol=1e-12)).sum())
    ok = worst_gap > 1e-12 and outside == 0
    assert record("Sandwich bound", ok,
                  f"100 configurations, min(upper - lower) {worst_gap:.3e}, "
                  f"{outside} samples outside their part polytope", t)


def _brute_vertices(a, b):
    combos = np.array(list(itertools.combinations(range(len(a)), a.shape[1])))
    mats = a[combos]
    ok = np.abs(np.linalg.det(mats)) > 1e-12
    sol = np.linalg.solve(mats[ok], b[combos[ok]][..., None])[..., 0]
    pts = sol[np.all(sol @ a.T <= b + 1e-9, axis=1)]
    groups = cKDTree(pts).query_ball_point(pts, 1e-9)
    keep = sorted({min(g) for g in groups})
    return pts[keep]


def test_vertex_enumeration_oracle():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    mismatches, done = 0, 0
    while done < 50:
        k = int(rng.integers(10, 31))
        a = random_unit_vectors(rng, k, 4)
        b = rng.uniform(0.5, 1.5, k)
        try:
            fast = vertex_enumeration(a, b, np.zeros(4))
        except Exception:
            continue  # unbounded draw; not one of the 50 systems
        done += 1
        slow = _brute_vertices(a, b)
        same = len(fast) == len(slow)
        if same:
            same = cKDTree(slow).query(fast)[0].max() <= 1e-8 and cKDTree(fast).query(slow)[0].max() <= 1e-8
        mismatches += not same
    ok = mismatches == 0
    assert record("Vertex-enumeration oracle", ok, f"50 systems (10-30 halfspaces), {mismatches} mismatches", t)


def test_outer_approximation():
    t = time.perf_counter()
    cover = lassak_cover(4)
    rng = np.random.default_rng(4)
    dirs = random_unit_vectors(rng, 10_000, 4)
    pts = cover.witness + ray_exits(cover, cover.witness, dirs)[:, None] * dirs
    # dense boundary sample standing in for the support function of the cover
    dense_dirs = random_unit_vectors(rng, 400_000, 4)
    dense = cover.witness + ray_exits(cover, cover.witness, dense_dirs)[:, None] * dense_dirs
    probe = random_unit_vectors(rng, 2_000, 4)
    h_cover = np.concatenate([np.max(dense @ chunk.T, axis=0) for chunk in np.split(probe, 20)])
    gaps, contained = {}, True
    for m in (5, 17):
        poly = circumscribed(cover, m)
        contained &= bool(poly.contains(pts, tol=1e-12).all())
        gaps[m] = float(np.mean(poly.support(probe) - h_cover))
    ok = contained and gaps[17] < gaps[5]
    assert record("Outer approximation", ok,
                  f"1e4 boundary points contained: {contained}; mean support gap "
                  f"m=5 {gaps[5]:.3e}, m=17 {gaps[17]:.3e}", t)


def _blocks(path):
    return [np.loadtxt(b.splitlines()).reshape(-1, 2) for b in path.read_text().strip().split("\n\n")]


def test_planar_end_to_end(tmp_path):
    t = time.perf_counter()
    code = main(["demo2d", "--out", str(tmp_path)])
    details, ok = [], code == 0
    for label in ("L2", "L2H"):
        cert = specfile.read(tmp_path / f"{label}.json").certificate
        diams = cert["diameters"]
        ok &= len(diams) == 3 and max(diams) <= 0.98 and cert["pass"]
        details.append(f"{label} max {max(diams):.5f}")
    counts = [len(s) for s in _blocks(tmp_path / "L2H_samples.txt")]
    ok &= counts == [25, 25, 25]  # |H| = 1, m = 7: apex, 3 tips, 3 x 7 blends
    for label in ("L2", "L2H"):
        poly = _blocks(tmp_path / f"{label}_polygon.txt")[0][:-1]
        edges = np.roll(poly, -1, axis=0) - poly
        for s in _blocks(tmp_path / f"{label}_samples.txt"):
            cross = (edges[:, 0] * (s[:, None, 1] - poly[:, 1])
                     - edges[:, 1] * (s[:, None, 0] - poly[:, 0]))
            ok &= bool(cross.min() >= -1e-12)
        ok &= len(_blocks(tmp_path / f"{label}_parts.txt")) == 3
    assert record("2-D end-to-end", ok, ", ".join(details) + f", samples per part {counts} (target <= 0.98)", t)


# ---------------------------------------------------------------------------
# four-dimensional search at desk scale


DESK = ["--budget", "50", "--m-lower", "5", "--m-upper", "9", "--seed", "0", "--checkpoint"]


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    runs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        t = time.perf_counter()
        code = main(["reproduce", *DESK, "--out", str(out)])
        runs.append((code, out, time.perf_counter() - t))
    return runs


def _deterministic_files(out):
    names = [f"{lbl}.json" for lbl in LABELS] + ["report.txt"]
    return {n: (out / n).read_bytes() for n in names}


def test_desk_scale_search(desk_runs):
    t = time.perf_counter()
    (_, first, seconds), (_, second, _) = desk_runs
    details, ok = [], True
    for cover in build_ucs_r4():
        baseline = diameter(circumscribed(cover, 9).vertices)[0]
        d_best = specfile.read(first / f"{cover.label}.json").certificate["d_best"]
        ok &= d_best < baseline
        details.append(f"{cover.label} {d_best:.5f} < {baseline:.5f}")
    identical = _deterministic_files(first) == _deterministic_files(second)
    ok &= identical
    assert record("4-D desk-scale search", ok,
                  "; ".join(details) + f"; rerun bit-identical: {identical}; "
                  f"one run {seconds / 60:.1f} min on 1 core", t)


def test_theorem_two_properties(desk_runs):
    """Certificates recompute exactly, incumbents are monotone, upper bounds are conservative."""
    t = time.perf_counter()
    _, out, _ = desk_runs[0]
    rng = np.random.default_rng(7)
    ok, notes = True, []
    achieved = {}
    for cover in build_ucs_r4():
        spec = specfile.read(out / f"{cover.label}.json")
        cert = certify(spec.cover, spec.system, spec.certificate["m_upper"])
        ok &= list(cert.diameters) == spec.certificate["diameters"]
        ok &= cert.passed == spec.certificate["pass"]
        code = main(["verify", str(out / f"{cover.label}.json")])
        ok &= (code == 0) == cert.passed

        lines = (out / "checkpoints" / f"{cover.label}.jsonl").read_text().splitlines()[1:]
        results = []
        for line in lines:
            rec = json.loads(line)
            results.append(RestartResult(rec["index"], rec["lower"], rec["upper"],
                                         specfile.system_from_data(rec["system"])))
        _, history = select_best(results)
        ok &= len(history) == 50 and all(a >= b for a, b in zip(history, history[1:])) and history[0] <= 1

        lower = lower_part_diameters(cover, spec.system, 5)
        ok &= bool(np.all(lower < np.array(cert.diameters)))
        pts = sample_cover(cover, 20_000, rng)
        part = assign_part(pts, spec.system)
        for i in range(8):
            if (part == i).sum() > 1:
                ok &= diameter(pts[part == i])[0] <= cert.diameters[i]
        achieved[cover.label] = cert.d_best
    n_pass = sum(d <= PASS_THRESHOLD for d in achieved.values())
    notes.append("d_max " + ", ".join(f"{k} {v:.5f}" for k, v in achieved.items()))
    notes.append(f"{n_pass}/4 below 1 at budget 50 (published: 0.99906, 0.99809, 0.99987, 0.99978)")
    assert record("Theorem-2 reproduction (property-based)", ok, "; ".join(notes), t)


def test_published_configurations_verify():
    t = time.perf_counter()
    record("Theorem-2 published configurations", None,
           "the published partition data is not available in this environment", t)
    pytest.skip("published partition data not available")
