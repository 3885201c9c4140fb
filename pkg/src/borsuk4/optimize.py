"""Multistart search for partitions with small part diameters.

Each restart draws a Haar rotation of the reference directions, puts the
apex at ``c0``, runs finite-difference gradient descent on a smoothed
version of the sampled (lower-bound) objective and, if that objective drops
below 1, polishes the configuration with Nelder-Mead on the certified
(upper-bound) objective.  All randomness derives from ``(seed, restart)``.
"""
from __future__ import annotations

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm
from scipy.special import logsumexp

from .geometry import Cover, GeometryError, haar_orthogonal_rng, interior_margin
from .partition import (
    FREE,
    RIGID,
    DirectionSystem,
    check_apex,
    fan_is_valid,
    lower_pair_distances,
    lower_part_diameters,
    rigid_system,
)
from .polytope import objective_upper

log = logging.getLogger(__name__)

PASS_THRESHOLD = 1 - 1e-6
APEX_PROJECTION_MARGIN = 1e-6
ACCEPT_TOL = 1e-9


@dataclass(frozen=True)
class SearchParams:
    n_restarts: int = 20
    m_lower: int = 5
    m_upper: int = 9
    descent_steps: int = 150
    step_size: float = 0.02
    fd_eps: float = 1e-5
    temperature: float = 0.01
    finetune_budget: int = 200
    seed: int = 0
    threshold: float = PASS_THRESHOLD
    mode: str = RIGID

    def __post_init__(self):
        if min(self.n_restarts, self.descent_steps, self.finetune_budget) < 1:
            raise ValueError("restart, descent and fine-tune budgets must be positive")
        if self.m_lower < 0 or self.m_upper < 1:
            raise ValueError("need m_lower >= 0 and m_upper >= 1")
        if not (self.step_size > 0 and self.fd_eps > 0 and self.temperature > 0):
            raise ValueError("step size, finite-difference step and temperature must be positive")


@dataclass(frozen=True, eq=False)
class Certificate:
    label: str
    system: DirectionSystem
    diameters: tuple[float, ...]
    d_best: float
    m_upper: int
    seed: int
    threshold: float = PASS_THRESHOLD
    restart: int | None = None
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def passed(self) -> bool:
        return self.d_best <= self.threshold


# ---------------------------------------------------------------------------
# objectives and charts


def smoothed_max(values, temperature: float) -> float:
    """``tau * log(sum(exp(v / tau)))``, a smooth upper approximation of ``max(v)``."""
    values = np.asarray(values, dtype=float)
    return float(temperature * logsumexp(values / temperature))


def skew(params: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    out[iu] = params
    return out - out.T


class RigidChart:
    """Coordinates ``(apex shift, skew generator)`` around an anchor configuration."""

    def __init__(self, anchor: DirectionSystem):
        self.anchor = anchor
        self.n = anchor.dimension
        self.dim = self.n + self.n * (self.n - 1) // 2

    def system(self, x: np.ndarray) -> DirectionSystem:
        n = self.n
        rot = self.anchor.rotation @ expm(skew(x[n:], n))
        return self.anchor.moved(apex=self.anchor.apex + x[:n], rotation=rot)


class FreeChart:
    """Coordinates ``(apex shift, direction shifts)``; directions are renormalized."""

    def __init__(self, anchor: DirectionSystem):
        self.anchor = anchor
        self.n = anchor.dimension
        self.dim = self.n + anchor.directions.size

    def system(self, x: np.ndarray) -> DirectionSystem:
        n = self.n
        dirs = self.anchor.directions + x[n:].reshape(self.anchor.directions.shape)
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        return DirectionSystem(self.anchor.apex + x[:n], dirs, self.anchor.facets, FREE)


def make_chart(ds: DirectionSystem):
    return RigidChart(ds) if ds.mode == RIGID else FreeChart(ds)


def to_free(ds: DirectionSystem) -> DirectionSystem:
    return DirectionSystem(ds.apex, ds.directions, ds.facets, FREE)


def fd_gradient(f, x: np.ndarray, eps: float) -> np.ndarray:
    """Central-difference gradient."""
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = eps
        g[k] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


def project_apex(cover: Cover, start: np.ndarray, target: np.ndarray,
                 margin: float = APEX_PROJECTION_MARGIN) -> np.ndarray:
    """Farthest point on the segment ``start -> target`` keeping ``margin`` inside the cover."""
    if interior_margin(cover, target) >= margin:
        return target
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if interior_margin(cover, start + mid * (target - start)) >= margin:
            lo = mid
        else:
            hi = mid
    return start + lo * (target - start)


# ---------------------------------------------------------------------------
# local searches


def descend_lower(cover: Cover, ds: DirectionSystem, params: SearchParams) -> DirectionSystem:
    """Adam-style descent on the smoothed sampled objective.

    A step is kept only if the unsmoothed objective does not rise by more
    than 1e-9; rejected steps halve the learning rate.  The best
    configuration seen is returned, so the result never scores worse than
    ``ds``.
    """
    check_apex(cover, ds, APEX_PROJECTION_MARGIN)
    m = params.m_lower
    current = ds
    f_cur = float(lower_part_diameters(cover, current, m).max())
    best, f_best = current, f_cur
    lr = params.step_size
    beta1, beta2 = 0.9, 0.999
    chart = make_chart(current)
    m1 = np.zeros(chart.dim)
    m2 = np.zeros(chart.dim)
    t = 0

    def smooth(system_of, x):
        try:
            return smoothed_max(lower_pair_distances(cover, system_of(x), m), params.temperature)
        except GeometryError:
            return np.inf

    for _ in range(params.descent_steps):
        chart = make_chart(current)
        g = fd_gradient(lambda x: smooth(chart.system, x), np.zeros(chart.dim), params.fd_eps)
        if not np.all(np.isfinite(g)):
            lr *= 0.5
            if lr < 1e-7:
                break
            continue
        t += 1
        m1 = beta1 * m1 + (1 - beta1) * g
        m2 = beta2 * m2 + (1 - beta2) * g * g
        step = -lr * (m1 / (1 - beta1**t)) / (np.sqrt(m2 / (1 - beta2**t)) + 1e-12)
        cand = chart.system(step)
        apex = project_apex(cover, current.apex, cand.apex)
        cand = replace(cand, apex=apex)
        try:
            f_new = float(lower_part_diameters(cover, cand, m).max())
        except GeometryError:
            f_new = np.inf
        if f_new <= f_cur + ACCEPT_TOL:
            current, f_cur = cand, f_new
            lr = min(lr * 1.2, params.step_size)
            if f_new < f_best:
                best, f_best = cand, f_new
        else:
            lr *= 0.5
            m1[:] = 0
            m2[:] = 0
            t = 0
            if lr < 1e-7:
                break
    return best


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    fun: float
    nfev: int
    exhausted: bool


def nelder_mead(f, x0, budget: int = 200, step: float = 1e-2,
                xtol: float = 1e-10, ftol: float = 1e-14) -> NelderMeadResult:
    """Downhill simplex with reflection 1, expansion 2, contraction 1/2, shrink 1/2.

    The initial simplex is ``x0`` plus ``step`` along each axis.  Returns the
    best point evaluated; ``exhausted`` is set when the budget ran out before
    the simplex collapsed to ``xtol``/``ftol``.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    nfev = 0
    best_x, best_f = x0.copy(), np.inf

    def evaluate(x):
        nonlocal nfev, best_x, best_f
        nfev += 1
        val = f(x)
        val = np.inf if not np.isfinite(val) else float(val)
        if val < best_f:
            best_x, best_f = x.copy(), val
        return val

    pts = np.vstack([x0, x0 + step * np.eye(n)])
    vals = np.array([evaluate(p) for p in pts[: min(len(pts), budget)]])
    if len(vals) < len(pts):
        return NelderMeadResult(best_x, best_f, nfev, True)

    while True:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        if (np.abs(vals[1:] - vals[0]).max() <= ftol
                and np.abs(pts[1:] - pts[0]).max() <= xtol):
            return NelderMeadResult(best_x, best_f, nfev, False)
        if nfev >= budget:
            return NelderMeadResult(best_x, best_f, nfev, True)
        centroid = pts[:-1].mean(axis=0)
        xr = centroid + (centroid - pts[-1])
        fr = evaluate(xr)
        if fr < vals[0]:
            xe = centroid + 2.0 * (xr - centroid)
            fe = evaluate(xe)
            pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = evaluate(xc)
            accept = fc <= fr
        else:
            xc = centroid + 0.5 * (pts[-1] - centroid)
            fc = evaluate(xc)
            accept = fc < vals[-1]
        if accept:
            pts[-1], vals[-1] = xc, fc
            continue
        for k in range(1, n + 1):
            if nfev >= budget:
                break
            pts[k] = pts[0] + 0.5 * (pts[k] - pts[0])
            vals[k] = evaluate(pts[k])


def fine_tune(cover: Cover, ds: DirectionSystem, params: SearchParams) -> tuple[DirectionSystem, float]:
    """Nelder-Mead on the certified objective around ``ds``."""
    chart = make_chart(ds)

    def upper(x):
        try:
            system = chart.system(x)
            check_apex(cover, system, APEX_PROJECTION_MARGIN)
            return objective_upper(cover, system, params.m_upper).max_diameter
        except GeometryError:
            return np.inf

    res = nelder_mead(upper, np.zeros(chart.dim), params.finetune_budget)
    return chart.system(res.x), res.fun


# ---------------------------------------------------------------------------
# multistart


@dataclass(frozen=True, eq=False)
class RestartResult:
    index: int
    lower: float
    upper: float | None
    system: DirectionSystem


def initial_system(cover: Cover, params: SearchParams, index: int) -> DirectionSystem:
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, index]))
    q = haar_orthogonal_rng(rng, cover.dimension)
    ds = rigid_system(cover.balls[0].center, q)
    return ds if params.mode == RIGID else to_free(ds)


def run_restart(cover: Cover, params: SearchParams, index: int) -> RestartResult:
    ds = initial_system(cover, params, index)
    ds = descend_lower(cover, ds, params)
    lower = float(lower_part_diameters(cover, ds, params.m_lower).max())
    upper = None
    if lower < 1:
        ds, upper = fine_tune(cover, ds, params)
    return RestartResult(index, lower, upper, ds)


def _run_restart_args(args):
    return run_restart(*args)


def select_best(results: list[RestartResult]) -> tuple[RestartResult, tuple[float, ...]]:
    """Incumbent after all restarts and the running ``d_best`` in restart order.

    ``d_best`` starts at 1.  The reduction sorts by restart index first, so
    the outcome does not depend on the order in which restarts finished.
    When no restart reached the fine-tuning stage the restart with the
    smallest sampled objective is returned instead.
    """
    results = sorted(results, key=lambda r: r.index)
    d_best = 1.0
    history = []
    incumbent = None
    for r in results:
        if r.upper is not None and r.upper < d_best:
            d_best = r.upper
            incumbent = r
        history.append(d_best)
    if incumbent is None:
        incumbent = min(results, key=lambda r: (r.lower, r.index))
    return incumbent, tuple(history)


def multistart_search(cover: Cover, params: SearchParams, workers: int = 1,
                      progress=sys.stderr, done=None, on_result=None) -> Certificate:
    """Run all restarts, reduce the incumbent and certify it.

    ``done`` maps restart indices to results recovered from a checkpoint;
    those restarts are not rerun.  ``on_result`` is called with every new
    result as it arrives.
    """
    results = list((done or {}).values())
    finished = {r.index for r in results}
    jobs = [(cover, params, i) for i in range(params.n_restarts) if i not in finished]
    results = [r for r in results if r.index < params.n_restarts]

    def collect(r):
        results.append(r)
        _report(progress, r)
        if on_result is not None:
            on_result(r)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for r in pool.map(_run_restart_args, jobs):
                collect(r)
    else:
        for job in jobs:
            collect(_run_restart_args(job))
    best, history = select_best(results)
    cert = certify(cover, best.system, params.m_upper, params.threshold, params.seed)
    return replace(cert, restart=best.index, history=history)


def _report(stream, r: RestartResult):
    if stream is None:
        return
    upper = "skipped" if r.upper is None else f"{r.upper:.6f}"
    print(f"restart {r.index}: lower {r.lower:.6f} upper {upper}", file=stream, flush=True)


def certify(cover: Cover, ds: DirectionSystem, m_upper: int,
            threshold: float = PASS_THRESHOLD, seed: int | None = None) -> Certificate:
    """Recompute the upper bound from scratch; the only source of a pass verdict."""
    if ds.dimension != cover.dimension:
        raise GeometryError("direction system and cover disagree in dimension")
    if ds.n_parts < 2 or any(len(f) < ds.dimension for f in ds.facets):
        raise GeometryError("direction system facets are malformed")
    check_apex(cover, ds)
    if ds.mode == FREE and not fan_is_valid(ds):
        raise GeometryError("facet cones do not cover all directions")
    report = objective_upper(cover, ds, m_upper)
    return Certificate(cover.label, ds, report.diameters, report.max_diameter, m_upper, seed,
                       threshold)
