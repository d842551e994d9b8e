"""Points, lifts and distances on the flat torus T^n = R^n / Z^n.

All functions accept a single point of shape ``(n,)`` or a batch of shape
``(..., n)`` and broadcast over the leading axes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np


def project(v):
    """Reduce lifted coordinates into the fundamental domain ``[0, 1)^n``.

    ``np.mod`` can return exactly 1.0 for tiny negative inputs; those are
    folded back to 0 so the half-open invariant always holds.
    """
    p = np.mod(np.asarray(v, dtype=float), 1.0)
    p[p >= 1.0] = 0.0
    return p


def wrap_difference(d):
    """Map a lifted displacement to its shortest representative in [-1/2, 1/2)."""
    d = np.asarray(d, dtype=float)
    return d - np.floor(d + 0.5)


def torus_distance(p, q):
    """Flat distance between torus points (broadcasting over leading axes)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    return np.linalg.norm(wrap_difference(p - q), axis=-1)


def diameter(n):
    """Diameter of the flat n-torus, sqrt(n)/2."""
    return np.sqrt(n) / 2.0


@dataclass(frozen=True)
class TorusPoint:
    """An immutable point of T^n with coordinates in [0, 1)."""

    coords: tuple

    def __post_init__(self):
        reduced = project(np.asarray(self.coords, dtype=float).reshape(-1))
        object.__setattr__(self, "coords", tuple(float(c) for c in reduced))

    @property
    def dim(self):
        return len(self.coords)

    @property
    def array(self):
        return np.array(self.coords)

    def lift(self):
        return LiftPoint(self.coords)

    def to_json(self):
        return json.dumps(list(self.coords))

    @classmethod
    def from_json(cls, text):
        return cls(tuple(json.loads(text)))


@dataclass(frozen=True)
class LiftPoint:
    """A point of the universal cover R^n."""

    coords: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "coords", tuple(float(c) for c in np.asarray(self.coords, dtype=float).reshape(-1))
        )

    @property
    def array(self):
        return np.array(self.coords)

    def project(self):
        return TorusPoint(self.coords)


def points_to_csv(points):
    """Serialize an ``(m, n)`` array of points with header ``x0..x{n-1}``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{i}" for i in range(points.shape[1])])
    for row in points:
        writer.writerow([repr(float(c)) for c in row])
    return buf.getvalue()


def points_from_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return np.empty((0, 0))
    return np.array([[float(c) for c in row] for row in rows[1:]])


@dataclass(frozen=True)
class TruncatedBiorbit:
    """Orbit segment ``x_{-m}, ..., x_0, ..., x_m`` stored in index order."""

    points: np.ndarray
    depth: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape[0] != 2 * self.depth + 1:
            raise ValueError("biorbit must hold 2*depth+1 points")
        object.__setattr__(self, "points", pts)

    def at(self, i):
        return self.points[i + self.depth]


def orbit_distance(a, b):
    """Truncated inverse-limit distance between two biorbits.

    Returns ``(value, tail_bound)`` where ``value = sum_{|i|<=m} d(a_i, b_i) / 2^{|i|}``
    and ``tail_bound = diam(T^n) * 2^{1-m}`` bounds the omitted terms.
    """
    if a.depth != b.depth:
        raise ValueError(f"mismatched truncation depths: {a.depth} vs {b.depth}")
    m = a.depth
    weights = 0.5 ** np.abs(np.arange(-m, m + 1))
    d = torus_distance(a.points, b.points)
    n = a.points.shape[1]
    return float(np.dot(weights, d)), float(diameter(n) * 2.0 ** (1 - m))
