"""Cone fields and sampled verification of the cone criterion.

Cones are measured in the coordinates of a reference splitting
E^s + E^c + E^u: a vector v has coordinates y = P^{-1} v with
P = [E^s | E^c | E^u], and v lies in the cone around E with complement F
when ||y_F|| <= beta ||y_E||. This is the norm in which the reference bundles
are orthogonal, so the linear map acts diagonally by blocks.

Verification is sampling based (cell centers and boundary vectors), not a
validated proof.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .splitting import split_orbits
from .torus import project

FAMILIES = ("s", "u", "cs", "cu")
REFERENCE_SOURCES = ("linear", "computed", "pointwise")
VECTORS_PER_CONE = 64
REFERENCE_DEPTH = 24  # orbit depth for computed reference frames (axis error ~1e-6)


class ConeError(ValueError):
    pass


def grid_centers(n, resolution):
    axes = [(np.arange(resolution) + 0.5) / resolution] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)


def _blocks(dims, family):
    """Index sets (E, F) of the cone axis and its complement in [s | c | u] coordinates."""
    s, c, u = dims
    idx_s = list(range(s))
    idx_c = list(range(s, s + c))
    idx_u = list(range(s + c, s + c + u))
    return {
        "s": (idx_s, idx_c + idx_u),
        "u": (idx_u, idx_s + idx_c),
        "cs": (idx_s + idx_c, idx_u),
        "cu": (idx_c + idx_u, idx_s),
    }[family]


@dataclass(frozen=True)
class ConeField:
    """Cone of aperture beta around one bundle of a reference splitting."""

    beta: float
    family: str
    source: str = "auto"

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ConeError("beta must lie in (0, 1)")
        if self.family not in FAMILIES:
            raise ConeError(f"unknown cone family {self.family!r}")
        if self.source not in REFERENCE_SOURCES + ("auto",):
            raise ConeError(f"unknown reference source {self.source!r}")


def ConeFamily(beta, source="auto"):
    """The four cone fields s, u, cs, cu with a common aperture."""
    return {fam: ConeField(beta, fam, source) for fam in FAMILIES}


class ReferenceSplitting:
    """Basis matrices P(x) = [E^s | E^c | E^u] and their inverses.

    Sources: ``linear`` (eigenspaces of the linear part), ``computed``
    (splittings at the nodes of a ``resolution``^n grid, nearest node
    lookup) and ``pointwise`` (the splitting computed at each query point,
    u/cu side along the all-zero branch code of that point).
    """

    def __init__(self, f, source="auto", resolution=16, seed=0):
        if source == "auto":
            source = "linear" if f.is_linear else "pointwise"
        if source not in REFERENCE_SOURCES:
            raise ConeError(f"unknown reference source {source!r}")
        self.f = f
        self.dims = f.dims
        self.source = source
        self.seed = seed
        self.resolution = resolution
        if source == "linear":
            b = f.linear.bundles()
            self._p = np.hstack([b["s"], b["c"], b["u"]])
            self._pinv = np.linalg.inv(self._p)
        elif source == "computed":
            nodes = grid_centers(f.n, resolution)
            self._p = self._compute(nodes)
            self._pinv = np.linalg.inv(self._p)

    def _compute(self, x):
        codes = np.zeros((len(x), REFERENCE_DEPTH), dtype=int)
        sp = split_orbits(self.f, x, codes, forward_depth=REFERENCE_DEPTH, seed=self.seed)
        return np.concatenate([sp.frame(k, 0) for k in ("s", "c", "u")], axis=-1)

    def _node(self, x):
        r = self.resolution
        idx = np.floor(project(x) * r).astype(int) % r
        flat = np.zeros(idx.shape[:-1], dtype=int)
        for k in range(idx.shape[-1]):
            flat = flat * r + idx[..., k]
        return flat

    def frames(self, x):
        """(P, P^{-1}) at a batch of points x of shape (m, n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.source == "linear":
            shape = (len(x),) + self._p.shape
            return np.broadcast_to(self._p, shape), np.broadcast_to(self._pinv, shape)
        if self.source == "computed":
            node = self._node(x)
            return self._p[node], self._pinv[node]
        p = self._compute(x)
        return p, np.linalg.inv(p)

    def basis(self, x):
        x = np.asarray(x, dtype=float)
        p, _ = self.frames(x.reshape(-1, x.shape[-1]))
        return p.reshape(x.shape[:-1] + p.shape[-2:])

    def coordinates(self, x, v):
        """y = P(x)^{-1} v for a single point x or matching batches."""
        x = np.asarray(x, dtype=float)
        _, pinv = self.frames(x.reshape(-1, x.shape[-1]))
        pinv = pinv.reshape(x.shape[:-1] + pinv.shape[-2:])
        return (pinv @ np.asarray(v, dtype=float)[..., None])[..., 0]


def _split_norms(y, dims, family):
    e, f = _blocks(dims, family)
    return np.linalg.norm(y[..., e], axis=-1), np.linalg.norm(y[..., f], axis=-1)


def in_cone(cone, x, v, f=None, reference=None):
    """True when ||v_F|| <= beta ||v_E|| against the reference splitting at x."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ConeError("zero vector")
    if reference is None:
        if f is None:
            raise ConeError("need a map or a reference splitting")
        reference = ReferenceSplitting(f, cone.source)
    y = reference.coordinates(np.asarray(x, dtype=float), v)
    ne, nf = _split_norms(y, reference.dims, cone.family)
    return bool(nf <= cone.beta * ne * (1 + 1e-12) + 1e-15)


def boundary_coordinates(dims, family, beta, count=VECTORS_PER_CONE, seed=0):
    """Cone-boundary vectors in reference coordinates: e_hat + beta f_hat.

    ``count`` directions come from a scrambled Halton sequence mapped to
    Gaussians and normalized, so they are reproducible and evenly spread.
    The axis pairs e_i + beta f_j are appended: they carry the extreme
    ratios whenever the map is block diagonal in these coordinates.
    """
    e, f = _blocks(dims, family)
    dim = len(e) + len(f)
    pts = qmc.Halton(d=dim, scramble=True, seed=seed).random(count)
    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    ge, gf = g[:, : len(e)], g[:, len(e):]
    ge /= np.linalg.norm(ge, axis=1, keepdims=True)
    gf /= np.linalg.norm(gf, axis=1, keepdims=True)
    ae = np.repeat(np.eye(len(e)), len(f), axis=0)
    af = np.tile(np.eye(len(f)), (len(e), 1))
    y = np.zeros((count + len(ae), sum(dims)))
    y[:, e] = np.vstack([ge, ae])
    y[:, f] = beta * np.vstack([gf, af])
    return y / np.sqrt(1 + beta**2)


@dataclass(eq=False)
class Certificate:
    """Outcome of a sampled cone verification."""

    passed: bool
    margins: dict
    witnesses: dict
    grid: int
    beta: float
    seed: int
    source: str = "linear"
    measured: dict = field(default_factory=dict)
    method: str = "sampled: cell centers and cone-boundary vectors; not a validated proof"

    def to_dict(self):
        return {
            "pass": self.passed,
            "margins": self.margins,
            "witnesses": self.witnesses,
            "grid": self.grid,
            "beta": self.beta,
            "seed": self.seed,
            "source": self.source,
            "measured": self.measured,
            "method": self.method,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _cone_images(dims, family, beta, frames_x, frames_fx, deriv, seed):
    """Image ratios and stretch factors for boundary vectors of one cone.

    Forward families map vectors at x by Df_x; backward ones map vectors at
    f(x) by (Df_x)^{-1}. Returns (ratio, stretch) arrays of shape (P, V).
    """
    y = boundary_coordinates(dims, family, beta, seed=seed)
    forward = family in ("u", "cu")
    (p_base, _), (_, pinv_target) = (frames_x, frames_fx) if forward else (frames_fx, frames_x)
    op = deriv if forward else np.linalg.inv(deriv)
    # coordinates of the image: P_target^{-1} op P_base y
    m = pinv_target @ op @ p_base
    yw = np.einsum("pij,vj->pvi", m, y)
    ne, nf = _split_norms(yw, dims, family)
    ratio = nf / ne
    stretch = np.linalg.norm(yw, axis=-1) / np.linalg.norm(y, axis=-1)
    return ratio, stretch


def verify_cone_conditions(f, cones=None, grid_resolution=32, seed=0, chunk=4096, constants=None,
                           beta=None, source="auto"):
    """Check cone invariance and expansion on a grid of cell centers.

    u/cu cones are pushed forward with Df_x; s/cs cones at f(x) are pulled
    back with the matrix inverse of Df_x. Invariance margin of a family is
    ``beta - max image ratio``. Rate margins (in the reference norm):

    - s:  min ||Df^-1 v|| / ||v|| over s-cones, minus 1 (or minus 1/nu),
    - u:  min ||Df v|| / ||v|| over u-cones, minus 1 (or minus mu),
    - cu: min stretch on cu-cones minus the max stretch 1/min ||Df^-1 v|| on s-cones
      (or minus gamma1 when constants are given),
    - cs: min stretch on u-cones minus the max stretch on cs-cones (or
      1/min ||Df^-1 v|| on cs-cones against 1/gamma2).

    The certificate passes iff every margin is positive. The ``auto``
    reference uses the eigen-splitting for linear maps and the pointwise
    computed splitting otherwise.
    """
    if cones is None:
        cones = ConeFamily(beta if beta is not None else 0.4, source)
    if grid_resolution < 8:
        raise ConeError("grid resolution must be at least 8 per axis")
    betas = {c.beta for c in cones.values()}
    sources = {c.source for c in cones.values()}
    if len(sources) != 1:
        raise ConeError("all cones must share a reference source")
    ref = ReferenceSplitting(f, sources.pop(), seed=seed)
    pts = grid_centers(f.n, grid_resolution)

    worst_ratio = {fam: (-np.inf, None) for fam in FAMILIES}
    worst_stretch = {fam: (np.inf, None) for fam in FAMILIES}  # min of forward / backward stretch
    for lo in range(0, len(pts), chunk):
        x = pts[lo: lo + chunk]
        fx = f.evaluate(x)
        deriv = f.derivative(x)
        dets = np.abs(np.linalg.det(deriv))
        if np.any(dets < 1e-12):
            bad = x[np.argmin(dets)]
            raise ConeError(f"singular derivative at {bad.tolist()}")
        frames_x, frames_fx = ref.frames(x), ref.frames(fx)
        for fam, cone in cones.items():
            ratio, stretch = _cone_images(ref.dims, fam, cone.beta, frames_x, frames_fx, deriv, seed)
            r = ratio.max(axis=1)
            i = int(np.argmax(r))
            if r[i] > worst_ratio[fam][0]:
                worst_ratio[fam] = (float(r[i]), x[i])
            st = stretch.min(axis=1)
            j = int(np.argmin(st))
            if st[j] < worst_stretch[fam][0]:
                worst_stretch[fam] = (float(st[j]), x[j])

    measured = {
        "mu": worst_stretch["u"][0],
        "gamma1": worst_stretch["cu"][0],
        "nu": 1.0 / worst_stretch["s"][0],
        "gamma2": 1.0 / worst_stretch["cs"][0],
    }
    margins, witnesses = {}, {}
    for fam, cone in cones.items():
        margins[f"invariance_{fam}"] = cone.beta - worst_ratio[fam][0]
        witnesses[f"invariance_{fam}"] = worst_ratio[fam][1].tolist()
    if constants is None:
        margins["s"] = worst_stretch["s"][0] - 1.0
        margins["u"] = measured["mu"] - 1.0
        margins["cu"] = measured["gamma1"] - measured["nu"]
        margins["cs"] = measured["mu"] - measured["gamma2"]
    else:
        margins["s"] = worst_stretch["s"][0] - 1.0 / constants.nu
        margins["u"] = measured["mu"] - constants.mu
        margins["cu"] = measured["gamma1"] - constants.gamma1
        margins["cs"] = worst_stretch["cs"][0] - 1.0 / constants.gamma2
    for key, fam in (("s", "s"), ("u", "u"), ("cu", "cu"), ("cs", "cs")):
        witnesses[key] = worst_stretch[fam][1].tolist()
    passed = all(m > 0 for m in margins.values())
    return Certificate(
        passed=bool(passed),
        margins={k: float(v) for k, v in margins.items()},
        witnesses=witnesses,
        grid=grid_resolution,
        beta=float(betas.pop()) if len(betas) == 1 else None,
        seed=seed,
        source=ref.source,
        measured=measured,
    )
