"""Inverse branches, branch codes and backward orbits."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from .maps import MapError
from .torus import project, torus_distance

NEWTON_MAX_ITER = 64
NEWTON_TOL = 1e-13
DEFAULT_DEPTH = 40

_DIGITS = "0123456789abcdefghijklmnopqrstuvwxyz"


class NewtonError(RuntimeError):
    """Newton refinement of a preimage did not converge."""


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class BranchCode:
    """Finite word selecting one preimage per backward step."""

    word: tuple
    degree: int = None

    def __post_init__(self):
        word = tuple(int(c) for c in self.word)
        object.__setattr__(self, "word", word)
        if self.degree is not None and any(not 0 <= c < self.degree for c in word):
            raise ValueError(f"code letters must lie in [0, {self.degree})")

    def __len__(self):
        return len(self.word)

    def __str__(self):
        return "".join(_DIGITS[c] for c in self.word)

    @classmethod
    def from_string(cls, text, degree=None):
        return cls(tuple(_DIGITS.index(ch) for ch in text.strip().lower()), degree)

    def prefix(self, letter):
        """Code of the pushed orbit: prepend the letter selecting the old base point."""
        return BranchCode((int(letter),) + self.word, self.degree)


@dataclass(frozen=True, eq=False)
class BackwardOrbit:
    """Points x_0, x_{-1}, ..., x_{-m} with f(x_{-k-1}) = x_{-k}."""

    points: np.ndarray
    code: BranchCode

    @property
    def depth(self):
        return self.points.shape[0] - 1

    @property
    def base(self):
        return self.points[0]

    def time_ordered(self):
        """Points in forward-time order x_{-m}, ..., x_0."""
        return self.points[::-1]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        n = self.points.shape[1]
        writer.writerow(["depth"] + [f"x{i}" for i in range(n)])
        for k, row in enumerate(self.points):
            writer.writerow([k] + [repr(float(c)) for c in row])
        return buf.getvalue()


def preimages(f, y):
    """All deg(f) preimages of y, canonically ordered.

    Parameters
    ----------
    f : Endomorphism
    y : array_like, shape (..., n)

    Returns
    -------
    ndarray, shape (..., deg, n)
        ``out[..., j, :]`` is the preimage in the j-th offset class.
    """
    y = project(np.atleast_1d(np.asarray(y, dtype=float)))
    return _solve_lifted(f, _base(f, y)[..., None, :] + f.linear.offsets())


def _base(f, y):
    return np.linalg.solve(f.matrix, y[..., None])[..., 0] if y.ndim == 1 else y @ np.linalg.inv(f.matrix).T


def _solve_lifted(f, targets):
    """Solve phi~(x) = target by Newton from x = target and project to T^n."""
    if f.is_linear:
        return project(targets)
    x = targets.copy()
    for _ in range(NEWTON_MAX_ITER):
        resid = f.lift_perturbation(x) - targets
        if np.max(np.abs(resid), initial=0.0) <= NEWTON_TOL:
            break
        step = np.linalg.solve(f.perturbation_jacobian(x), resid[..., None])[..., 0]
        x = x - step
        if np.max(np.abs(step), initial=0.0) <= NEWTON_TOL:
            break
    else:
        raise NewtonError(f"preimage Newton iteration did not converge in {NEWTON_MAX_ITER} steps")
    return project(x)


def selected_preimages(f, y, index):
    """The index-th canonical preimage of each y (batched), same as preimages(f, y)[..., index, :]."""
    y = project(np.atleast_2d(np.asarray(y, dtype=float)))
    return _solve_lifted(f, _base(f, y) + f.linear.offsets()[np.asarray(index)])


def preimage_index(f, y, x):
    """Index of x among preimages(f, y) (nearest in torus distance)."""
    pre = preimages(f, y)
    d = torus_distance(pre, np.asarray(x)[..., None, :])
    return np.argmin(d, axis=-1)


def count_preimages_multistart(f, y, starts_per_axis=6, tol=1e-9):
    """Independent degree oracle: Newton on the full lift from a grid of starts.

    Each start fixes the integer translate k nearest to A phi~(x) - y and
    solves A phi~(x) = y + k; converged solutions are deduplicated on T^n.
    """
    y = project(np.asarray(y, dtype=float))
    n = f.n
    axis = (np.arange(starts_per_axis) + 0.5) / starts_per_axis
    starts = np.array(list(itertools.product(axis, repeat=n)))
    k = np.round(f.lift_map(starts) - y)
    target = y + k
    x = starts.copy()
    for _ in range(NEWTON_MAX_ITER):
        resid = f.lift_map(x) - target
        step = np.linalg.solve(f.derivative(x), resid[..., None])[..., 0]
        x = x - step
        if np.max(np.abs(step)) <= NEWTON_TOL:
            break
    ok = np.max(np.abs(f.lift_map(x) - target), axis=-1) < tol
    sols = project(x[ok])
    distinct = []
    for s in sols:
        if all(torus_distance(s, t) > 1e-7 for t in distinct):
            distinct.append(s)
    return len(distinct), np.array(distinct)


def backward_orbit(f, x, code):
    """Backward orbit of x selected by ``code``."""
    if not isinstance(code, BranchCode):
        code = BranchCode(tuple(code), f.degree)
    if any(c >= f.degree for c in code.word):
        raise PreconditionError(f"code letter exceeds degree {f.degree}")
    pts = backward_orbits(f, np.asarray(x, dtype=float)[None, :], np.array([code.word], dtype=int))
    return BackwardOrbit(pts[0], code)


def backward_orbits(f, x, codes):
    """Batched backward orbits.

    Parameters
    ----------
    x : array, shape (P, n) or (n,)
        Base points; a single point is broadcast over all codes.
    codes : int array, shape (P, m)

    Returns
    -------
    ndarray, shape (P, m+1, n), depth-ordered (index k holds x_{-k}).
    """
    codes = np.asarray(codes, dtype=int)
    if codes.ndim == 1:
        codes = codes[None, :]
    p, m = codes.shape
    x = project(np.broadcast_to(np.asarray(x, dtype=float), (p, f.n)).copy())
    if codes.size and codes.max() >= f.degree:
        raise PreconditionError(f"code letter exceeds degree {f.degree}")
    out = np.empty((p, m + 1, f.n))
    out[:, 0] = x
    for k in range(m):
        out[:, k + 1] = selected_preimages(f, out[:, k], codes[:, k])
    return out


def avoiding_backward_orbit(f, x, forbidden, m=DEFAULT_DEPTH):
    """Backward orbit whose points x_{-1}, ..., x_{-m} avoid the forbidden balls.

    ``forbidden`` is a list of ``(center, radius)`` pairs. At each step the
    least-index preimage outside all balls is taken.
    """
    forbidden = [(np.asarray(c, dtype=float), float(r)) for c, r in forbidden]
    if forbidden:
        if f.degree <= len(forbidden):
            raise PreconditionError("degree must exceed the number of forbidden balls")
        tau = f.linear.separation()
        if any(r >= tau / 3.0 for _, r in forbidden):
            raise PreconditionError("forbidden ball radius must be below tau/3")
    pts = [project(np.asarray(x, dtype=float))]
    word = []
    for _ in range(m):
        pre = preimages(f, pts[-1])
        outside = np.ones(len(pre), dtype=bool)
        for c, r in forbidden:
            outside &= torus_distance(pre, c) >= r
        if not outside.any():
            raise PreconditionError("every preimage lies in a forbidden ball")
        j = int(np.argmax(outside))
        word.append(j)
        pts.append(pre[j])
    return BackwardOrbit(np.array(pts), BranchCode(tuple(word), f.degree))


def enumerate_codes(degree, m, limit, seed=0):
    """min(degree^m, limit) distinct codes of length m.

    Exhaustive (lexicographic) when degree^m <= limit, otherwise a seeded
    uniform sample without replacement.
    """
    if degree <= 1:
        return [BranchCode((0,) * m, max(degree, 1))]
    total = degree**m
    if total <= limit:
        return [BranchCode(w, degree) for w in itertools.product(range(degree), repeat=m)]
    rng = np.random.default_rng(seed)
    seen = set()
    out = []
    while len(out) < limit:
        w = tuple(int(c) for c in rng.integers(0, degree, size=m))
        if w not in seen:
            seen.add(w)
            out.append(BranchCode(w, degree))
    return out


def codes_array(codes):
    return np.array([c.word for c in codes], dtype=int).reshape(len(codes), -1)


def check_orbit(f, points, tol=1e-12):
    """True when consecutive depth-ordered points satisfy f(x_{-k-1}) = x_{-k}."""
    pts = np.asarray(points)
    if len(pts) < 2:
        return True
    return bool(np.all(torus_distance(f.evaluate(pts[1:]), pts[:-1]) <= tol))
