"""Map specification files (JSON or TOML).

Schema (all keys except ``matrix`` optional)::

    matrix     = [[int, ...], ...]          # rows of the linear part
    dims       = [s, c, u]
    bumps      = [{center = [...], radius = r, angle = a,
                   plane = "uu-s" | "wu-s" | [[...], [...]],
                   profile = "poly4"}, ...]
    trig_field = [{component = i, wavevector = [...], amplitude = a, phase = p}, ...]
    design     = {...}                      # free-form record kept verbatim
    provenance = {...}                      # ignored when loading

Documents written by ``map_to_dict`` load back to the same map and dump to
the same document (floats keep full ``repr`` precision).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .maps import Endomorphism, LinearPart, MapError, RotationBump, TrigTerm

MAP_KEYS = {"matrix", "dims", "bumps", "trig_field", "design", "provenance"}
BUMP_KEYS = {"center", "radius", "angle", "plane", "profile"}
TRIG_KEYS = {"component", "wavevector", "amplitude", "phase"}


class SpecError(ValueError):
    """A map specification is malformed."""


def _matrix(rows):
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise SpecError("matrix must be a list of rows")
    n = len(rows)
    for i, r in enumerate(rows):
        if len(r) != n:
            raise SpecError(f"matrix row {i} has {len(r)} entries, expected {n}")
        for v in r:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SpecError(f"matrix row {i} has a non-numeric entry {v!r}")
    return rows


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise SpecError(f"{where} must be a table")
    extra = set(d) - allowed
    if extra:
        raise SpecError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def map_from_dict(spec):
    """Build an Endomorphism from a parsed map specification."""
    from .construction import named_plane

    _check_keys(spec, MAP_KEYS, "map")
    if "matrix" not in spec:
        raise SpecError("map needs a matrix")
    try:
        linear = LinearPart(_matrix(spec["matrix"]), spec.get("dims"))
        bumps = []
        for i, b in enumerate(spec.get("bumps", [])):
            _check_keys(b, BUMP_KEYS, f"bump {i}")
            plane = b.get("plane", "uu-s")
            label = plane if isinstance(plane, str) else None
            rows = named_plane(linear, plane) if label else np.asarray(plane, dtype=float)
            bumps.append(RotationBump(b["center"], b["radius"], b["angle"], rows,
                                      b.get("profile", "poly4"), label))
        trig = []
        for i, t in enumerate(spec.get("trig_field", [])):
            _check_keys(t, TRIG_KEYS, f"trig term {i}")
            trig.append(TrigTerm(t["component"], tuple(t["wavevector"]), t["amplitude"], t.get("phase", 0.0)))
        return Endomorphism(linear, bumps, trig, design=spec.get("design"))
    except KeyError as exc:
        raise SpecError(f"missing key {exc.args[0]!r}") from None
    except (MapError, TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from None


def _num(v):
    v = float(v)
    return int(v) if v.is_integer() and abs(v) < 2**53 else v


def map_to_dict(f):
    """Specification dictionary for an Endomorphism."""
    spec = {"matrix": [[_num(v) for v in row] for row in f.matrix]}
    spec["dims"] = list(f.dims)
    if f.bumps:
        spec["bumps"] = [
            {
                "center": [float(c) for c in b.center],
                "radius": float(b.radius),
                "angle": float(b.angle),
                "plane": b.plane_label if b.plane_label else b.plane.tolist(),
                "profile": b.profile,
            }
            for b in f.bumps
        ]
    if f.trig_field:
        spec["trig_field"] = [
            {"component": t.component, "wavevector": list(t.wavevector),
             "amplitude": float(t.amplitude), "phase": float(t.phase)}
            for t in f.trig_field
        ]
    if f.design:
        spec["design"] = f.design
    return spec


def parse_text(text, fmt):
    if fmt == "json":
        return json.loads(text)
    if fmt == "toml":
        return tomli.loads(text)
    raise SpecError(f"unknown format {fmt!r}")


def dump_text(data, fmt):
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    if fmt == "toml":
        return tomli_w.dumps(data)
    raise SpecError(f"unknown format {fmt!r}")


def format_of(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return "json"
    if suffix == ".toml":
        return "toml"
    raise SpecError(f"cannot infer format from {path}")


def load_map(path):
    path = Path(path)
    return map_from_dict(parse_text(path.read_text(), format_of(path)))


def save_map(f, path):
    path = Path(path)
    path.write_text(dump_text(map_to_dict(f), format_of(path)))
