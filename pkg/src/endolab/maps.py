"""Toral endomorphisms of the form f = A o phi.

``A`` is an integer matrix acting on T^n and ``phi`` is a diffeomorphism of
T^n built from compactly supported rotation bumps and an optional finite
Fourier field. Everything here operates on batches of points with shape
``(..., n)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .torus import project, torus_distance, wrap_difference


class MapError(ValueError):
    """Invalid map data (singular matrix, overlapping bumps, ...)."""


# ---------------------------------------------------------------------------
# bump profiles

def _poly4(t):
    t = np.clip(t, 0.0, 1.0)
    return (1.0 - t * t) ** 2


def _poly4_over_t(t):
    # psi'(t) / t, finite at t = 0
    t = np.clip(t, 0.0, 1.0)
    return -4.0 * (1.0 - t * t)


# sup|psi'| for (1 - t^2)^2 is attained at t = 1/sqrt(3)
PROFILES = {
    "poly4": (_poly4, _poly4_over_t, 8.0 / (3.0 * np.sqrt(3.0))),
}


def profile_constant(profile="poly4"):
    """K_psi = 1 + sup|psi'| + sup|psi| for a named profile."""
    return 1.0 + PROFILES[profile][2] + 1.0


# ---------------------------------------------------------------------------
# linear part

def _real_basis(vectors):
    """Orthonormal real basis for the span of possibly complex eigenvectors."""
    vectors = np.atleast_2d(vectors)
    if vectors.shape[1] == 0:
        return np.zeros((vectors.shape[0], 0))
    stacked = np.hstack([vectors.real, vectors.imag])
    u, s, _ = np.linalg.svd(stacked, full_matrices=False)
    k = vectors.shape[1]
    return u[:, :k]


@dataclass(frozen=True, eq=False)
class LinearPart:
    """Linear part of a toral endomorphism.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
        Integer matrix for genuine toral maps. Real matrices are accepted as
        formal test maps (constant derivative, lift-level inverse), with
        ``integral`` False and degree 1.
    dims : tuple of int, optional
        ``(s, c, u)`` dimensions of the splitting; inferred when omitted.
    """

    matrix: np.ndarray
    dims: tuple = None

    def __post_init__(self):
        a = np.array(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise MapError(f"matrix must be square, got shape {a.shape}")
        if a.shape[0] not in (2, 3):
            raise MapError("only T^2 and T^3 are supported")
        det = float(np.linalg.det(a))
        if abs(det) < 1e-12:
            raise MapError("matrix is singular")
        object.__setattr__(self, "matrix", a)
        eig = np.linalg.eigvals(a)
        order = np.argsort(np.abs(eig), kind="stable")
        object.__setattr__(self, "eigenvalues", eig[order])
        dims = self.dims if self.dims is not None else self._infer_dims()
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or sum(dims) != self.n or min(dims) < 0 or dims[0] < 1 or dims[2] < 1:
            raise MapError(f"invalid dims {dims} for n={self.n}")
        object.__setattr__(self, "dims", dims)
        self._check_gaps()

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def integral(self):
        return bool(np.all(self.matrix == np.round(self.matrix)))

    @property
    def determinant(self):
        return float(np.linalg.det(self.matrix))

    @property
    def degree(self):
        if not self.integral:
            return 1
        return int(round(abs(self.determinant)))

    @property
    def moduli(self):
        return np.abs(self.eigenvalues)

    @property
    def is_anosov(self):
        return bool(np.all(np.abs(self.moduli - 1.0) > 1e-12))

    def _infer_dims(self):
        m = np.abs(np.linalg.eigvals(np.array(self.matrix, dtype=float)))
        m.sort()
        if self.n == 2:
            return (1, 0, 1)
        if m[0] < m[1] < m[2]:
            return (1, 1, 1)
        raise MapError(f"cannot infer a splitting from eigenvalue moduli {m}")

    def _check_gaps(self):
        s, c, u = self.dims
        m = self.moduli
        stable, center, unstable = m[:s], m[s:s + c], m[s + c:]
        if stable.max() >= 1.0 or unstable.min() <= 1.0:
            raise MapError(f"moduli {m} are not split by 1 for dims {self.dims}")
        if c and not (stable.max() < center.min() and center.max() < unstable.min()):
            raise MapError(f"moduli {m} have no strict gaps for dims {self.dims}")

    @property
    def is_partially_hyperbolic(self):
        return True  # enforced in __post_init__

    def bundles(self):
        """Orthonormal bases of the linear invariant bundles.

        Returns a dict with keys ``s, c, u, cs, cu`` mapping to arrays of
        shape ``(n, k)``.
        """
        vals, vecs = np.linalg.eig(self.matrix)
        order = np.argsort(np.abs(vals), kind="stable")
        vecs = vecs[:, order]
        s, c, _ = self.dims
        out = {
            "s": _real_basis(vecs[:, :s]),
            "c": _real_basis(vecs[:, s:s + c]),
            "u": _real_basis(vecs[:, s + c:]),
            "cs": _real_basis(vecs[:, :s + c]),
            "cu": _real_basis(vecs[:, s:]),
        }
        return out

    def eigenvector(self, index):
        """Unit real eigenvector for the index-th eigenvalue by modulus."""
        vals, vecs = np.linalg.eig(self.matrix)
        order = np.argsort(np.abs(vals), kind="stable")
        v = vecs[:, order[index]]
        if np.iscomplexobj(v) and np.max(np.abs(v.imag)) > 1e-12:
            raise MapError("eigenvector is not real")
        v = np.real(v)
        return v / np.linalg.norm(v)

    def offsets(self):
        """Canonically ordered offsets A^{-1}k mod Z^n, one per preimage class.

        Computed exactly in integer arithmetic through the adjugate matrix and
        sorted lexicographically.
        """
        n = self.n
        if not self.integral:
            return np.zeros((1, n))
        a = np.round(self.matrix).astype(np.int64)
        det = int(round(np.linalg.det(a)))
        d = abs(det)
        adj = np.round(np.linalg.inv(a) * det).astype(np.int64)
        classes = set()
        for k in itertools.product(range(d), repeat=n):
            r = (adj @ np.array(k, dtype=np.int64)) * (1 if det > 0 else -1)
            classes.add(tuple(int(v) for v in np.mod(r, d)))
        if len(classes) != d:
            raise MapError("offset enumeration did not produce |det A| classes")
        return np.array(sorted(classes), dtype=float) / d

    def separation(self):
        """Minimal torus distance between distinct preimages of the linear map."""
        offs = self.offsets()
        if len(offs) < 2:
            raise MapError("degree-1 map has no distinct preimages")
        return float(np.min(torus_distance(offs[1:], np.zeros(self.n))))


# ---------------------------------------------------------------------------
# perturbation pieces

@dataclass(frozen=True, eq=False)
class RotationBump:
    """Radial twist supported in the ball B(center, radius).

    In ball-centered coordinates ``w`` the bump acts as
    ``w -> R(angle * psi(|w| / radius)) w`` with ``R`` the rotation in the
    plane spanned by the two rows of ``plane``.
    """

    center: np.ndarray
    radius: float
    angle: float
    plane: np.ndarray
    profile: str = "poly4"
    plane_label: str = None

    def __post_init__(self):
        center = project(np.asarray(self.center, dtype=float).reshape(-1))
        object.__setattr__(self, "center", center)
        plane = np.array(self.plane, dtype=float).reshape(2, -1)
        if plane.shape[1] != center.size:
            raise MapError("plane vectors do not match the point dimension")
        if not np.allclose(plane @ plane.T, np.eye(2), atol=1e-10):
            raise MapError("plane vectors must be orthonormal")
        object.__setattr__(self, "plane", plane)
        if not self.radius > 0:
            raise MapError("bump radius must be positive")
        if self.profile not in PROFILES:
            raise MapError(f"unknown profile {self.profile!r}")

    def _generators(self):
        p1, p2 = self.plane
        proj = np.outer(p1, p1) + np.outer(p2, p2)
        skew = np.outer(p2, p1) - np.outer(p1, p2)
        return proj, skew

    def rotation(self, alpha):
        proj, skew = self._generators()
        n = self.center.size
        return np.eye(n) + (np.cos(alpha) - 1.0) * proj + np.sin(alpha) * skew

    def displacement(self, v):
        """phi(v) - v for lifted points (zero outside the ball)."""
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape)
        w = wrap_difference(v - self.center)
        s = np.linalg.norm(w, axis=-1) / self.radius
        inside = s < 1.0
        if not np.any(inside):
            return out
        w, s = w[inside], s[inside]
        psi, _, _ = PROFILES[self.profile]
        alpha = self.angle * psi(s)
        proj, skew = self._generators()
        out[inside] = (np.cos(alpha) - 1.0)[:, None] * (w @ proj.T) + np.sin(alpha)[:, None] * (w @ skew.T)
        return out

    def jacobian(self, v):
        """D(phi) at lifted points, shape (..., n, n)."""
        v = np.asarray(v, dtype=float)
        n = self.center.size
        jac = np.broadcast_to(np.eye(n), v.shape[:-1] + (n, n)).copy()
        w = wrap_difference(v - self.center)
        s = np.linalg.norm(w, axis=-1) / self.radius
        inside = s < 1.0
        if not np.any(inside):
            return jac
        w, s = w[inside], s[inside]
        psi, psi_over_t, _ = PROFILES[self.profile]
        alpha = self.angle * psi(s)
        proj, skew = self._generators()
        ca = np.cos(alpha)[:, None, None]
        sa = np.sin(alpha)[:, None, None]
        rot = np.eye(n) + (ca - 1.0) * proj + sa * skew
        # dR/dalpha applied to w, times grad(alpha)
        dr_w = -np.sin(alpha)[:, None] * (w @ proj.T) + np.cos(alpha)[:, None] * (w @ skew.T)
        grad = (self.angle * psi_over_t(s) / self.radius**2)[:, None] * w
        jac[inside] = rot + dr_w[:, :, None] * grad[:, None, :]
        return jac

    def contains(self, x):
        return torus_distance(x, self.center) < self.radius

    def max_displacement(self):
        a = min(abs(self.angle), np.pi)
        return float(max(self.radius, 2.0 * self.radius * np.sin(a / 2.0)))

    def c1_bound(self):
        return profile_constant(self.profile) * abs(self.angle)


@dataclass(frozen=True, eq=False)
class TrigTerm:
    """Adds ``amplitude * sin(2 pi k.x + phase)`` to one coordinate."""

    component: int
    wavevector: tuple
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        k = tuple(int(v) for v in self.wavevector)
        object.__setattr__(self, "wavevector", k)

    def c1_bound(self):
        return 2.0 * np.pi * abs(self.amplitude) * float(np.linalg.norm(self.wavevector))


# ---------------------------------------------------------------------------
# the map

@dataclass(frozen=True, eq=False)
class Endomorphism:
    """f = A o phi with phi = (bumps) o (trig field)."""

    linear: LinearPart
    bumps: tuple = ()
    trig_field: tuple = ()
    design: dict = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.linear, LinearPart):
            object.__setattr__(self, "linear", LinearPart(self.linear))
        object.__setattr__(self, "bumps", tuple(self.bumps))
        object.__setattr__(self, "trig_field", tuple(self.trig_field))
        n = self.linear.n
        for b in self.bumps:
            if b.center.size != n:
                raise MapError("bump dimension does not match the linear part")
        for i, j in itertools.combinations(range(len(self.bumps)), 2):
            bi, bj = self.bumps[i], self.bumps[j]
            if torus_distance(bi.center, bj.center) < bi.radius + bj.radius:
                raise MapError(f"bump balls {i} and {j} overlap")
        # radial twists are diffeomorphisms for every angle; the Fourier part
        # needs |D(trig) - I| < 1 to stay one
        if self.trig_c1_bound() >= 1.0:
            raise MapError("trig field is not C^1-close enough to the identity to be a diffeomorphism")
        for t in self.trig_field:
            if not 0 <= t.component < n or len(t.wavevector) != n:
                raise MapError("trig term does not match the dimension")

    @property
    def n(self):
        return self.linear.n

    @property
    def degree(self):
        return self.linear.degree

    @property
    def dims(self):
        return self.linear.dims

    @property
    def matrix(self):
        return self.linear.matrix

    @property
    def is_linear(self):
        return not self.bumps and not self.trig_field

    def trig_c1_bound(self):
        return float(sum(t.c1_bound() for t in self.trig_field))

    def c1_distance_bound(self):
        """Upper bound on ||D phi - I|| over the torus."""
        bump = max((b.c1_bound() for b in self.bumps), default=0.0)
        return bump + self.trig_c1_bound()

    def _trig_displacement(self, v):
        out = np.zeros_like(v)
        for t in self.trig_field:
            arg = 2.0 * np.pi * (v @ np.asarray(t.wavevector, dtype=float)) + t.phase
            out[..., t.component] += t.amplitude * np.sin(arg)
        return out

    def _trig_jacobian(self, v):
        n = self.n
        jac = np.broadcast_to(np.eye(n), v.shape[:-1] + (n, n)).copy()
        for t in self.trig_field:
            k = np.asarray(t.wavevector, dtype=float)
            arg = 2.0 * np.pi * (v @ k) + t.phase
            jac[..., t.component, :] += (2.0 * np.pi * t.amplitude * np.cos(arg))[..., None] * k
        return jac

    def lift_perturbation(self, v):
        """Periodic lift of phi: R^n -> R^n."""
        v = np.asarray(v, dtype=float)
        if self.trig_field:
            v = v + self._trig_displacement(v)
        if self.bumps:
            v = v + sum(b.displacement(v) for b in self.bumps)
        return v

    def perturbation_jacobian(self, v):
        v = np.asarray(v, dtype=float)
        n = self.n
        jac = np.broadcast_to(np.eye(n), v.shape[:-1] + (n, n))
        if self.trig_field:
            jac = self._trig_jacobian(v)
            v = v + self._trig_displacement(v)
        if self.bumps:
            # bumps are disjoint and each Jacobian is the identity outside its ball
            jb = np.broadcast_to(np.eye(n), v.shape[:-1] + (n, n)).copy()
            for b in self.bumps:
                inside = b.contains(project(v))
                if np.any(inside):
                    jb[inside] = b.jacobian(v[inside])
            jac = jb @ jac
        return np.array(jac)

    def lift_map(self, v):
        """A . phi~(v) on the universal cover."""
        return self.lift_perturbation(v) @ self.matrix.T

    def evaluate(self, x):
        return project(self.lift_map(x))

    def __call__(self, x):
        return self.evaluate(x)

    def derivative(self, x):
        """Df_x = A . D(phi)_x, shape (..., n, n)."""
        return self.matrix @ self.perturbation_jacobian(x)

    def orbit(self, x, length):
        """Forward orbit x_0..x_length, shape (..., length+1, n)."""
        x = project(x)
        pts = [x]
        for _ in range(length):
            pts.append(self.evaluate(pts[-1]))
        return np.stack(pts, axis=-2)

    def linear_only(self):
        return Endomorphism(self.linear)


def separation_constant(f):
    """Lower bound tau on the distance between distinct preimages.

    The linear value is reduced by twice the largest C^0 displacement of the
    perturbation (which is the bump radius for angles up to pi/3).
    """
    lin = f.linear if isinstance(f, Endomorphism) else f
    if lin.degree < 2:
        raise MapError("degree-1 map has no distinct preimages")
    tau = lin.separation()
    if isinstance(f, Endomorphism):
        disp = max((b.max_displacement() for b in f.bumps), default=0.0)
        disp += float(sum(abs(t.amplitude) for t in f.trig_field))
        tau -= 2.0 * disp
    return max(tau, 1e-15)
