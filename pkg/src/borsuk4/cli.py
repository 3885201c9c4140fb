"""Command-line front end.

Commands::

    borsuk4 build-ucs OUT_DIR
    borsuk4 search SPEC --restarts N --m-lower M --m-upper M --seed S --workers W --out FILE
    borsuk4 verify SPEC [--m-upper M] [--threshold T]
    borsuk4 demo2d [--m-lower M] [--m-upper M] --out DIR
    borsuk4 reproduce --budget B --out DIR

``verify`` exits 0 when the recomputed certificate passes, 1 when it fails
and 2 when the spec cannot be used.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import specfile
from .covers import build_demo_r2, build_ucs_r4
from .geometry import Cover, GeometryError, ray_exits
from .optimize import PASS_THRESHOLD, Certificate, RestartResult, SearchParams, certify, multistart_search
from .partition import RIGID, DirectionSystem, lower_sample
from .polytope import circumscribed, part_polytopes
from .specfile import SpecError, SpecFile

# d_max column and per-part diameters of the published partitions, for comparison only
REFERENCE_TABLE = {
    "U1": (0.99775, 0.99763, 0.99906, 0.99683, 0.99670, 0.99762, 0.99374, 0.99339),
    "U2": (0.99735, 0.99809, 0.99549, 0.99733, 0.99736, 0.99503, 0.99615, 0.99566),
    "U3": (0.99862, 0.99819, 0.99729, 0.99987, 0.99961, 0.99645, 0.99734, 0.99696),
    "U4p": (0.99978, 0.99845, 0.99821, 0.99846, 0.99800, 0.99634, 0.98538, 0.99037),
}
REFERENCE_DMAX = {"U1": 0.99906, "U2": 0.99809, "U3": 0.99987, "U4p": 0.99978}

EXIT_PASS, EXIT_FAIL, EXIT_BAD_INPUT = 0, 1, 2


def format_row(label: str, diameters, d_max: float, verdict: str | None = None) -> str:
    cells = " ".join(f"{d:.5f}" for d in diameters)
    row = f"{label:<4} {{{cells}}} {d_max:.5f}"
    return row if verdict is None else f"{row} {verdict}"


def print_certificate(cert: Certificate, stream=None):
    stream = sys.stdout if stream is None else stream
    verdict = "PASS" if cert.passed else "FAIL"
    print(f"# m_upper = {cert.m_upper}, threshold = {cert.threshold:.17g}", file=stream)
    print(format_row(cert.label, cert.diameters, cert.d_best, verdict), file=stream)


# ---------------------------------------------------------------------------
# build-ucs


def cmd_build_ucs(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for cover in build_ucs_r4():
        specfile.write(out / f"{cover.label}.json", SpecFile(cover))
        print(out / f"{cover.label}.json")
    return 0


# ---------------------------------------------------------------------------
# search


def search_params(args, spec: SpecFile | None = None) -> SearchParams:
    m_lower = args.m_lower if args.m_lower is not None else (spec.m_lower if spec else 5)
    m_upper = args.m_upper if args.m_upper is not None else (spec.m_upper if spec else 9)
    return SearchParams(
        n_restarts=args.restarts,
        m_lower=m_lower,
        m_upper=m_upper,
        descent_steps=args.descent_steps,
        finetune_budget=args.finetune_budget,
        seed=args.seed,
        mode=args.mode,
    )


def run_search(spec: SpecFile, params: SearchParams, workers: int = 1,
               progress="stderr", checkpoint: Path | None = None) -> SpecFile:
    if progress == "stderr":
        progress = sys.stderr
    done, on_result = {}, None
    if checkpoint is not None:
        done = load_checkpoint(checkpoint, spec.cover, params)
        on_result = _checkpoint_writer(checkpoint, spec.cover, params, fresh=not done)
    cert = multistart_search(spec.cover, params, workers, progress, done, on_result)
    result = specfile.spec_with_certificate(spec, cert)
    result.m_lower = params.m_lower
    return result


def cmd_search(args) -> int:
    try:
        spec = specfile.read(args.spec)
        params = search_params(args, spec)
    except (OSError, SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    checkpoint = Path(args.checkpoint) if args.checkpoint else None
    result = run_search(spec, params, args.workers, checkpoint=checkpoint)
    specfile.write(args.out, result)
    cert = result.certificate
    print_certificate(_as_certificate(result))
    return EXIT_PASS if cert["pass"] else EXIT_FAIL


def _as_certificate(spec: SpecFile) -> Certificate:
    c = spec.certificate
    return Certificate(spec.cover.label, spec.system, tuple(c["diameters"]), c["d_best"],
                       c["m_upper"], spec.seed, c["threshold"])


# ---------------------------------------------------------------------------
# checkpoints: one JSON line per finished restart, after a header line


def _checkpoint_header(cover: Cover, params: SearchParams) -> dict:
    return {
        "cover": cover.fingerprint,
        "seed": params.seed,
        "m_lower": params.m_lower,
        "m_upper": params.m_upper,
        "descent_steps": params.descent_steps,
        "finetune_budget": params.finetune_budget,
        "mode": params.mode,
        "version": __version__,
    }


def load_checkpoint(path: Path, cover: Cover, params: SearchParams) -> dict[int, RestartResult]:
    """Finished restarts recorded for the same cover and search settings."""
    path = Path(path)
    if not path.exists():
        return {}
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or json.loads(lines[0]) != _checkpoint_header(cover, params):
        print(f"warning: ignoring stale checkpoint {path}", file=sys.stderr)
        return {}
    done = {}
    for line in lines[1:]:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            break  # a torn final line from an interrupted run
        system = specfile.system_from_data(rec["system"])
        done[rec["index"]] = RestartResult(rec["index"], rec["lower"], rec["upper"], system)
    return done


def _checkpoint_writer(path: Path, cover: Cover, params: SearchParams, fresh: bool):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fresh:
        path.write_text(json.dumps(_checkpoint_header(cover, params)) + "\n", encoding="utf-8")

    def write(r: RestartResult):
        rec = {
            "index": r.index,
            "lower": r.lower,
            "upper": r.upper,
            "system": json.loads(specfile.system_to_text(r.system)),
        }
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec) + "\n")

    return write


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    try:
        spec = specfile.read(args.spec)
        if spec.system is None:
            raise SpecError("spec has no direction system")
        m_upper = args.m_upper if args.m_upper is not None else spec.m_upper
        cert = certify(spec.cover, spec.system, m_upper, args.threshold, spec.seed)
    except (OSError, SpecError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    print_certificate(cert)
    return EXIT_PASS if cert.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# demo2d


def _closed(points: np.ndarray) -> np.ndarray:
    return np.vstack([points, points[:1]])


def _angular_order(points: np.ndarray, center=None) -> np.ndarray:
    center = points.mean(axis=0) if center is None else center
    rel = points - center
    return points[np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))]


def cover_boundary(cover: Cover, k: int = 720) -> np.ndarray:
    ang = 2 * np.pi * np.arange(k) / k
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    t = ray_exits(cover, cover.witness, dirs)
    return cover.witness + t[:, None] * dirs


def write_blocks(path: Path, blocks) -> None:
    """Plain-text polylines: ``x y`` per row, one blank line between blocks."""
    text = "\n\n".join("\n".join(f"{x:.17g} {y:.17g}" for x, y in block) for block in blocks)
    Path(path).write_text(text + "\n", encoding="utf-8")


def figure_data(cover: Cover, ds: DirectionSystem, m_lower: int, m_upper: int) -> dict:
    p_h = circumscribed(cover, m_upper)
    parts = part_polytopes(p_h, ds)
    return {
        "cover": [_closed(cover_boundary(cover))],
        "polygon": [_closed(_angular_order(p_h.vertices, cover.witness))],
        "samples": [lower_sample(cover, ds, i, m_lower).points for i in range(ds.n_parts)],
        "parts": [_closed(_angular_order(p.vertices)) for p in parts if p is not None],
    }


def cmd_demo2d(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = SearchParams(n_restarts=args.restarts, m_lower=args.m_lower, m_upper=args.m_upper,
                          seed=args.seed, threshold=args.threshold)
    status = EXIT_PASS
    for cover in build_demo_r2():
        result = run_search(SpecFile(cover), params)
        specfile.write(out / f"{cover.label}.json", result)
        for name, blocks in figure_data(cover, result.system, params.m_lower, params.m_upper).items():
            write_blocks(out / f"{cover.label}_{name}.txt", blocks)
        cert = _as_certificate(result)
        print_certificate(cert)
        if not cert.passed:
            status = EXIT_FAIL
    return status


# ---------------------------------------------------------------------------
# reproduce


@dataclass
class RunReport:
    certificates: list[Certificate]
    budget: int
    seconds: float = 0.0
    restart_seconds: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return len(self.certificates) == 4 and all(c.passed for c in self.certificates)

    def lines(self) -> list[str]:
        out = [f"best found at budget {self.budget} restarts per element",
               "elem {achieved part diameters} d_max verdict | reference d_max"]
        for c in self.certificates:
            ref = REFERENCE_DMAX.get(c.label)
            tail = f" | {ref:.5f}" if ref is not None else ""
            out.append(format_row(c.label, c.diameters, c.d_best, "PASS" if c.passed else "FAIL") + tail)
        out.append("reference part diameters:")
        for c in self.certificates:
            if c.label in REFERENCE_TABLE:
                out.append(format_row(c.label, REFERENCE_TABLE[c.label], REFERENCE_DMAX[c.label]))
        n_pass = sum(c.passed for c in self.certificates)
        if self.passed:
            out.append("all 4 elements certified below the threshold")
        else:
            out.append(f"{n_pass}/4 elements certified; no partition claim is made")
        return out


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = SearchParams(n_restarts=args.budget, m_lower=args.m_lower, m_upper=args.m_upper,
                          descent_steps=args.descent_steps, finetune_budget=args.finetune_budget,
                          seed=args.seed, mode=args.mode)
    start = time.perf_counter()
    certs, timing = [], {}
    for cover in build_ucs_r4():
        t0 = time.perf_counter()
        checkpoint = out / "checkpoints" / f"{cover.label}.jsonl" if args.checkpoint else None
        result = run_search(SpecFile(cover), params, args.workers, checkpoint=checkpoint)
        specfile.write(out / f"{cover.label}.json", result)
        certs.append(_as_certificate(result))
        timing[cover.label] = time.perf_counter() - t0
    report = RunReport(certs, args.budget, time.perf_counter() - start, timing)
    text = "\n".join(report.lines()) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "timing.json").write_text(json.dumps({"total_seconds": report.seconds,
                                                 "element_seconds": timing,
                                                 "restarts_per_element": args.budget}, indent=2) + "\n",
                                     encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_PASS if report.passed else EXIT_FAIL


# ---------------------------------------------------------------------------


def _add_search_flags(p, restarts: int):
    p.add_argument("--restarts", type=int, default=restarts)
    p.add_argument("--m-lower", type=int, default=None)
    p.add_argument("--m-upper", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--descent-steps", type=int, default=150)
    p.add_argument("--finetune-budget", type=int, default=200)
    p.add_argument("--mode", choices=["rigid", "free"], default=RIGID)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="borsuk4", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-ucs", help="write the four covering-system elements")
    p.add_argument("out", help="output directory")
    p.set_defaults(func=cmd_build_ucs)

    p = sub.add_parser("search", help="multistart search on one spec")
    p.add_argument("spec")
    _add_search_flags(p, restarts=20)
    p.add_argument("--checkpoint", default=None,
                   help="file recording finished restarts; an interrupted run resumes from it")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("verify", help="recompute the certificate of a spec")
    p.add_argument("spec")
    p.add_argument("--m-upper", type=int, default=None)
    p.add_argument("--threshold", type=float, default=PASS_THRESHOLD)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("demo2d", help="planar pipeline and figure data")
    p.add_argument("--m-lower", type=int, default=7)
    p.add_argument("--m-upper", type=int, default=17)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=PASS_THRESHOLD)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo2d)

    p = sub.add_parser("reproduce", help="search all four elements at a fixed budget")
    p.add_argument("--budget", type=int, default=50, help="restarts per element")
    p.add_argument("--m-lower", type=int, default=5)
    p.add_argument("--m-upper", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--descent-steps", type=int, default=150)
    p.add_argument("--finetune-budget", type=int, default=200)
    p.add_argument("--mode", choices=["rigid", "free"], default=RIGID)
    p.add_argument("--checkpoint", action="store_true",
                   help="record finished restarts under OUT/checkpoints and resume from them")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        # invalid budgets and parameters
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
