"""Partition-spec and certificate files.

The format is JSON laid out one vector per line, with every float written
as a 17-significant-digit decimal so that parsing recovers the exact
doubles.  ``parse(serialize(x))`` reproduces ``x`` and
``serialize(parse(text)) == text`` for canonical text.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .geometry import Ball, Cover, GeometryError, Halfspace
from .optimize import Certificate
from .partition import FREE, RIGID, DirectionSystem

SCHEMA = 1


class SpecError(ValueError):
    """Malformed or inconsistent spec file."""


@dataclass(eq=False)
class SpecFile:
    cover: Cover
    system: DirectionSystem | None = None
    m_lower: int = 5
    m_upper: int = 9
    seed: int | None = None
    tool_version: str = __version__
    certificate: dict | None = field(default=None)


def fmt(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise SpecError("non-finite number in spec")
    return format(x + 0.0, ".17g")  # no negative zeros


def _vec(v) -> str:
    return "[" + ", ".join(fmt(x) for x in np.asarray(v, dtype=float).ravel()) + "]"


def _matrix(rows, indent: str) -> str:
    rows = list(rows)
    if not rows:
        return "[]"
    inner = (",\n" + indent + "  ").join(_vec(r) for r in rows)
    return "[\n" + indent + "  " + inner + "\n" + indent + "]"


def _ints(v) -> str:
    return "[" + ", ".join(str(int(x)) for x in v) + "]"


def _cover_block(cover: Cover) -> str:
    ind = "    "
    balls = ",\n".join(
        f'{ind}  {{"center": {_vec(b.center)}, "radius": {fmt(b.radius)}}}' for b in cover.balls
    )
    halves = ",\n".join(
        f'{ind}  {{"normal": {_vec(h.normal)}, "offset": {fmt(h.offset)}}}' for h in cover.halfspaces
    )
    return (
        "{\n"
        f'{ind}"label": {json.dumps(cover.label)},\n'
        f'{ind}"dimension": {cover.dimension},\n'
        f'{ind}"witness": {_vec(cover.witness)},\n'
        f'{ind}"balls": [\n{balls}\n{ind}],\n'
        + (f'{ind}"halfspaces": [\n{halves}\n{ind}]\n' if cover.halfspaces else f'{ind}"halfspaces": []\n')
        + "  }"
    )


def _system_block(ds: DirectionSystem | None) -> str:
    if ds is None:
        return "null"
    ind = "    "
    lines = [
        f'{ind}"mode": {json.dumps(ds.mode)}',
        f'{ind}"apex": {_vec(ds.apex)}',
        f'{ind}"directions": {_matrix(ds.directions, ind)}',
        f'{ind}"facets": [' + ", ".join(_ints(f) for f in ds.facets) + "]",
    ]
    if ds.mode == RIGID:
        lines.append(f'{ind}"rotation": {_matrix(ds.rotation, ind)}')
        lines.append(f'{ind}"base_directions": {_matrix(ds.base, ind)}')
    return "{\n" + ",\n".join(lines) + "\n  }"


def _certificate_block(cert: dict | None) -> str:
    if cert is None:
        return "null"
    ind = "    "
    lines = [
        f'{ind}"diameters": {_vec(cert["diameters"])}',
        f'{ind}"d_best": {fmt(cert["d_best"])}',
        f'{ind}"m_upper": {int(cert["m_upper"])}',
        f'{ind}"threshold": {fmt(cert["threshold"])}',
        f'{ind}"pass": {json.dumps(bool(cert["pass"]))}',
    ]
    return "{\n" + ",\n".join(lines) + "\n  }"


def serialize(spec: SpecFile) -> str:
    seed = "null" if spec.seed is None else str(int(spec.seed))
    return (
        "{\n"
        f'  "schema": {SCHEMA},\n'
        f'  "cover": {_cover_block(spec.cover)},\n'
        f'  "directions": {_system_block(spec.system)},\n'
        f'  "grid": {{"m_lower": {int(spec.m_lower)}, "m_upper": {int(spec.m_upper)}}},\n'
        f'  "provenance": {{"seed": {seed}, "tool_version": {json.dumps(spec.tool_version)}}},\n'
        f'  "certificate": {_certificate_block(spec.certificate)}\n'
        "}\n"
    )


def parse(text: str) -> SpecFile:
    try:
        data = json.loads(text)
        if data.get("schema") != SCHEMA:
            raise SpecError(f"unsupported schema {data.get('schema')!r}")
        c = data["cover"]
        cover = Cover(
            int(c["dimension"]),
            tuple(Ball(b["center"], b["radius"]) for b in c["balls"]),
            tuple(Halfspace(h["normal"], h["offset"]) for h in c["halfspaces"]),
            c["label"],
            c["witness"],
        )
        system = system_from_data(data["directions"])
        grid = data["grid"]
        prov = data["provenance"]
        return SpecFile(cover, system, int(grid["m_lower"]), int(grid["m_upper"]),
                        prov["seed"], prov["tool_version"], data.get("certificate"))
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError, GeometryError) as exc:
        raise SpecError(f"malformed spec: {exc}") from exc


def system_from_data(d) -> DirectionSystem | None:
    """Direction system from its parsed JSON object (``None`` stays ``None``)."""
    if d is None:
        return None
    mode = d["mode"]
    if mode not in (RIGID, FREE):
        raise SpecError(f"unknown mode {mode!r}")
    return DirectionSystem(
        d["apex"],
        d["directions"],
        tuple(tuple(f) for f in d["facets"]),
        mode,
        d.get("rotation") if mode == RIGID else None,
        d.get("base_directions") if mode == RIGID else None,
    )


def system_to_text(ds: DirectionSystem | None) -> str:
    return _system_block(ds)


def read(path) -> SpecFile:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def write(path, spec: SpecFile):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(spec))


def certificate_record(cert: Certificate) -> dict:
    return {
        "diameters": list(cert.diameters),
        "d_best": cert.d_best,
        "m_upper": cert.m_upper,
        "threshold": cert.threshold,
        "pass": cert.passed,
    }


def spec_with_certificate(spec: SpecFile, cert: Certificate) -> SpecFile:
    return SpecFile(spec.cover, cert.system, spec.m_lower, cert.m_upper,
                    cert.seed if cert.seed is not None else spec.seed, __version__,
                    certificate_record(cert))

