"""Config-driven experiment runs that write JSON/CSV results.

A config is a TOML or JSON document::

    version = 1
    seed = 0
    map = "theorem-d-t3"        # preset name, or an inline map table
    [multiplicity]               # optional per-kind parameter tables
    sigma = "cu"

Every parameter has a default, so a config holding only ``map`` runs for
every kind. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .branch import BranchCode, backward_orbits, codes_array, enumerate_codes
from .mapspec import SpecError, dump_text, map_from_dict, map_to_dict, parse_text
from .presets import PRESETS, preset
from .torus import TruncatedBiorbit, orbit_distance

CONFIG_VERSION = 1
KINDS = ("splitting", "angles", "multiplicity", "perturb", "verify-cones", "constants", "orbit-metric")

DEFAULTS = {
    "splitting": {"point": None, "code": None, "forward_depth": 40, "tolerance": 1e-6},
    "angles": {"point": None, "sigma": "c", "directions": None, "codes": None, "n_max": 40,
               "samples": 32, "depth": 20},
    "multiplicity": {"point": None, "sigma": "cu", "depths": [5, 10, 20, 40], "code_budget": 64,
                     "delta": 1e-3, "growth_steps": 3, "growth_budget": 0},
    "perturb": {"angle": 0.2, "planes": ["uu-s", "wu-s"], "verify": True, "beta": 0.4, "grid": 32,
                "format": "json"},
    "verify-cones": {"beta": 0.4, "grid": 32, "source": "auto"},
    "constants": {"samples": 64, "depth": 20},
    "orbit-metric": {"pairs": 16, "depth": 10},
}
TOP_KEYS = {"version", "seed", "map"} | set(KINDS)


class ConfigError(ValueError):
    """Invalid config; ``line`` points into the source text when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line else f"{path or '<config>'}: "
        super().__init__(where + message)


def _find_line(text, key, after=None):
    pattern = re.compile(r'^\s*"?' + re.escape(key) + r'"?\s*[=:]|"' + re.escape(key) + r'"\s*:')
    lines = text.splitlines()
    start = 0
    if after is not None:
        head = re.compile(r"^\s*\[\s*\"?" + re.escape(after) + r"\"?\s*\]|\"" + re.escape(after) + r"\"\s*:")
        for i, line in enumerate(lines):
            if head.search(line):
                start = i
                break
    for i in range(start, len(lines)):
        if pattern.search(lines[i]):
            return i + 1
    return None


@dataclass
class ExperimentConfig:
    raw: dict
    text: str = ""
    path: str = None
    seed: int = 0

    @classmethod
    def from_text(cls, text, fmt="toml", path=None, seed=None):
        try:
            raw = parse_text(text, fmt)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON parse error: {exc.msg}", exc.lineno, path) from None
        except Exception as exc:  # tomli.TOMLDecodeError carries "(at line N, column M)"
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"parse error: {exc}", int(m.group(1)) if m else None, path) from None
        cfg = cls(raw, text, path)
        cfg.validate()
        cfg.seed = int(raw.get("seed", 0)) if seed is None else int(seed)
        return cfg

    @classmethod
    def load(cls, path, seed=None):
        path = Path(path)
        if not path.exists():
            raise ConfigError("file not found", None, str(path))
        fmt = "json" if path.suffix.lower() == ".json" else "toml"
        return cls.from_text(path.read_text(), fmt, str(path), seed)

    def error(self, message, key=None, section=None):
        line = _find_line(self.text, key, section) if key else None
        return ConfigError(message, line, self.path)

    def validate(self):
        if not isinstance(self.raw, dict):
            raise self.error("config must be a table")
        for key in self.raw:
            if key not in TOP_KEYS:
                raise self.error(f"unknown key {key!r}", key)
        version = self.raw.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise self.error(f"unsupported config version {version!r}", "version")
        if "map" not in self.raw:
            raise self.error("config needs a 'map' entry")
        for kind in KINDS:
            section = self.raw.get(kind, {})
            if not isinstance(section, dict):
                raise self.error(f"section {kind!r} must be a table", kind)
            for key in section:
                if key not in DEFAULTS[kind]:
                    raise self.error(f"unknown key {key!r} in section {kind!r}", key, kind)
        self.build_map()

    def build_map(self):
        spec = self.raw["map"]
        if isinstance(spec, str):
            if spec not in PRESETS:
                raise self.error(f"unknown preset {spec!r}", "map")
            return preset(spec)
        try:
            return map_from_dict(spec)
        except SpecError as exc:
            key = "matrix" if "matrix" in str(exc) or "row" in str(exc) else "map"
            raise self.error(str(exc), key) from None

    def params(self, kind):
        p = copy.deepcopy(DEFAULTS[kind])
        p.update(self.raw.get(kind, {}))
        return p

    def digest(self):
        canon = json.dumps({"config": self.raw, "seed": self.seed}, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class RunResult:
    exit_code: int
    files: list
    summary: dict = field(default_factory=dict)


class _Writer:
    def __init__(self, cfg, out, kind):
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.kind = kind
        self.files = []
        self.provenance = {"config_hash": cfg.digest(), "version": __version__, "kind": kind, "seed": cfg.seed}

    def json(self, name, payload):
        path = self.out / name
        path.write_text(json.dumps({"provenance": self.provenance, **payload}, indent=2, default=_jsonable) + "\n")
        self.files.append(path)
        return path

    def csv(self, name, header, rows):
        buf = io.StringIO()
        buf.write(f"# endolab {__version__} config {self.provenance['config_hash']}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
        path = self.out / name
        path.write_text(buf.getvalue())
        self.files.append(path)
        return path

    def text(self, name, body):
        path = self.out / name
        path.write_text(body)
        self.files.append(path)
        return path


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def _point(cfg, f, params, rng):
    if params.get("point") is not None:
        p = np.asarray(params["point"], dtype=float)
        if p.shape != (f.n,):
            raise cfg.error(f"point must have {f.n} coordinates", "point")
        return p
    if f.design and "point" in f.design:
        return np.asarray(f.design["point"], dtype=float)
    return rng.random(f.n)


# ---------------------------------------------------------------------------

def run_splitting(cfg, out):
    from .splitting import compute_splitting, stable_and_cs_frames, unstable_and_cu_frames
    from .branch import backward_orbit

    f = cfg.build_map()
    p = cfg.params("splitting")
    rng = np.random.default_rng(cfg.seed)
    x = _point(cfg, f, p, rng)
    depth = int(p["forward_depth"])
    code = None if p["code"] is None else BranchCode.from_string(p["code"], f.degree)
    est = compute_splitting(f, x, code, forward_depth=depth, seed=cfg.seed)
    w = _Writer(cfg, out, "splitting")
    w.json("splitting.json", est.to_dict())
    rows = []
    for m in range(10, max(depth, 10) + 1, 5):
        _, _, rs = stable_and_cs_frames(f, x, m, cfg.seed)
        orbit = backward_orbit(f, x, BranchCode(est.code.word[:m], f.degree))
        _, _, ru = unstable_and_cu_frames(f, orbit, cfg.seed)
        rows.append([m, rs["s"], rs["cs"], ru["u"], ru["cu"]])
    w.csv("residuals.csv", ["depth", "s", "cs", "u", "cu"], rows)
    ok = est.max_residual() <= float(p["tolerance"])
    return RunResult(0 if ok else 2, w.files, {"max_residual": est.max_residual()})


def _directions(cfg, f, p, x):
    from .splitting import split_orbits

    if p["directions"] is not None:
        dirs = [np.asarray(d, dtype=float).reshape(-1, f.n).T for d in p["directions"]]
        if len(dirs) != 2:
            raise cfg.error("directions must hold exactly two entries", "directions")
        return [np.linalg.qr(d)[0] for d in dirs]
    if p["codes"] is not None:
        codes = [BranchCode.from_string(c, f.degree) for c in p["codes"]]
    elif f.design and "branches" in f.design:
        b = f.design["branches"]
        codes = [BranchCode.from_string(b[0], f.degree), BranchCode.from_string(b[-1], f.degree)]
    else:
        last = max(f.degree - 1, 0)
        codes = [BranchCode((0,) * 40, f.degree), BranchCode((last,) * 40, f.degree)]
    width = max(len(c) for c in codes)
    arr = np.zeros((2, width), dtype=int)
    for i, c in enumerate(codes):
        arr[i, : len(c)] = c.word
    frames = split_orbits(f, x, arr, seed=cfg.seed).frame(p["sigma"], 0)
    return [frames[0], frames[1]]


def run_angles(cfg, out):
    from .rates import angle_decay_series, estimate_constants

    f = cfg.build_map()
    p = cfg.params("angles")
    rng = np.random.default_rng(cfg.seed)
    x = _point(cfg, f, p, rng)
    e1, e2 = _directions(cfg, f, p, x)
    series = angle_decay_series(f, x, e1, e2, int(p["n_max"]), seed=cfg.seed)
    w = _Writer(cfg, out, "angles")
    w.text("angles.csv", f"# endolab {__version__} config {w.provenance['config_hash']}\n" + series.to_csv())
    if series.flagged:
        w.json("angles.json", {"flagged": series.flagged, "slope": None})
        return RunResult(2, w.files, {"flagged": series.flagged})
    samples = np.vstack([x[None], rng.random((int(p["samples"]) - 1, f.n))])
    k = estimate_constants(f, samples, int(p["depth"]), seed=cfg.seed)
    predicted = float(np.log(k.nu / k.gamma1)) if p["sigma"] == "c" else float(np.log(k.gamma2 / k.mu))
    w.json("angles.json", {"slope": series.slope, "predicted_slope": predicted, "fit_range": series.fit_range,
                           "constants": k.to_dict()})
    return RunResult(0, w.files, {"slope": series.slope, "predicted": predicted})


def run_multiplicity(cfg, out):
    from .multiplicity import count_directions, growth_probe

    f = cfg.build_map()
    p = cfg.params("multiplicity")
    if int(p["code_budget"]) < f.degree:
        raise cfg.error("code_budget must be at least the degree", "code_budget", "multiplicity")
    rng = np.random.default_rng(cfg.seed)
    x = _point(cfg, f, p, rng)
    sigma = p["sigma"]
    w = _Writer(cfg, out, "multiplicity")
    rows, reports = [], {}
    for depth in p["depths"]:
        rep = count_directions(f, x, sigma, int(depth), int(p["code_budget"]), cfg.seed, (), p["delta"])
        rows.append([int(depth), "enumerated", rep.count, rep.min_inter_cluster_angle])
        reports[f"enumerated_{depth}"] = rep.to_dict()
    designed = []
    if f.design and "branches" in f.design:
        designed = [BranchCode.from_string(b, f.degree) for b in f.design["branches"]]
        rep = count_directions(f, x, sigma, len(designed[0]), 0, cfg.seed, designed, p["delta"])
        rows.append([len(designed[0]), "designed", rep.count, rep.min_inter_cluster_angle])
        reports["designed"] = rep.to_dict()
    w.csv("multiplicity.csv", ["depth", "codes", "cluster_count", "min_inter_cluster_angle"], rows)
    probe = growth_probe(f, x, int(p["growth_steps"]), sigma, designed, int(p["growth_budget"]),
                         seed=cfg.seed, delta=p["delta"])
    counts = [r.count for r in probe]
    w.csv("growth.csv", ["iterate", "cluster_count"], [[k, c] for k, c in enumerate(counts)])
    monotone = all(b >= a for a, b in zip(counts, counts[1:]))
    w.json("multiplicity.json", {"reports": reports, "growth_counts": counts, "non_decreasing": monotone})
    return RunResult(0 if monotone else 2, w.files, {"growth": counts})


def run_perturb(cfg, out):
    from .construction import DesignError, build_theorem_d_map

    f = cfg.build_map()
    p = cfg.params("perturb")
    if not f.is_linear:
        raise cfg.error("perturb needs a linear map", "map")
    w = _Writer(cfg, out, "perturb")
    spec = map_to_dict(f)
    try:
        g, report = build_theorem_d_map(f.linear, float(p["angle"]), seed=cfg.seed, planes=tuple(p["planes"]),
                                        verify=bool(p["verify"]), beta=float(p["beta"]), grid=int(p["grid"]))
    except DesignError as exc:
        w.json("design.json", {"error": str(exc)})
        return RunResult(2, w.files, {"error": str(exc)})
    except ValueError as exc:
        raise cfg.error(str(exc), "map") from None
    out_spec = spec if report.degenerate else map_to_dict(g)
    fmt = p["format"]
    w.text(f"map.{fmt}", dump_text({"provenance": w.provenance, **out_spec}, fmt))
    w.json("design.json", report.to_dict())
    return RunResult(0, w.files, {"degenerate": report.degenerate, "triple_dimension": report.triple_dimension})


def run_verify_cones(cfg, out):
    from .cones import ConeFamily, verify_cone_conditions

    f = cfg.build_map()
    p = cfg.params("verify-cones")
    cert = verify_cone_conditions(f, ConeFamily(float(p["beta"]), p["source"]), int(p["grid"]), seed=cfg.seed)
    w = _Writer(cfg, out, "verify-cones")
    w.json("certificate.json", cert.to_dict())
    return RunResult(0 if cert.passed else 2, w.files, {"pass": cert.passed})


def run_constants(cfg, out):
    from .rates import ConstantsViolation, estimate_constants

    f = cfg.build_map()
    p = cfg.params("constants")
    rng = np.random.default_rng(cfg.seed)
    pts = rng.random((int(p["samples"]), f.n))
    w = _Writer(cfg, out, "constants")
    try:
        k = estimate_constants(f, pts, int(p["depth"]), seed=cfg.seed)
    except ConstantsViolation as exc:
        w.json("constants.json", {"violation": str(exc)})
        return RunResult(2, w.files, {"violation": str(exc)})
    w.json("constants.json", k.to_dict())
    return RunResult(0, w.files, k.to_dict())


def random_biorbit(f, rng, depth):
    x = rng.random(f.n)
    code = rng.integers(0, f.degree, size=(1, depth))
    back = backward_orbits(f, x, code)[0][::-1]
    fwd = f.orbit(x, depth)
    return TruncatedBiorbit(np.vstack([back[:-1], fwd]), depth)


def run_orbit_metric(cfg, out):
    f = cfg.build_map()
    p = cfg.params("orbit-metric")
    rng = np.random.default_rng(cfg.seed)
    depth = int(p["depth"])
    rows = []
    for k in range(int(p["pairs"])):
        a, b = random_biorbit(f, rng, depth), random_biorbit(f, rng, depth)
        d, bound = orbit_distance(a, b)
        rows.append([k, d, bound])
    w = _Writer(cfg, out, "orbit-metric")
    w.csv("orbit_metric.csv", ["pair", "dbar", "truncation_bound"], rows)
    return RunResult(0, w.files, {"pairs": len(rows)})


RUNNERS = {
    "splitting": run_splitting,
    "angles": run_angles,
    "multiplicity": run_multiplicity,
    "perturb": run_perturb,
    "verify-cones": run_verify_cones,
    "constants": run_constants,
    "orbit-metric": run_orbit_metric,
}


def preset_config(name, fmt="toml"):
    """A ready-to-run config for a preset, with the map written out inline."""
    f = preset(name)
    doc = {"version": CONFIG_VERSION, "seed": 0, "map": map_to_dict(f)}
    return dump_text(doc, fmt)
