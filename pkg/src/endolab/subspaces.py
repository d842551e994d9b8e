"""Orthonormal frames, principal angles and subspace intersections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def orthonormalize(vectors, tol=1e-12):
    """Orthonormal basis (columns) for the span of the given columns."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    if vectors.shape[1] == 0:
        return vectors.copy()
    q, r = np.linalg.qr(vectors)
    diag = np.abs(np.diag(r))
    if diag.min() <= tol * max(diag.max(), 1.0):
        raise ValueError("vectors are linearly dependent")
    return q


@dataclass(frozen=True, eq=False)
class SubspaceFrame:
    """Orthonormal basis (as columns) of a k-dimensional subspace of R^n."""

    basis: np.ndarray
    point: np.ndarray = None

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        gram = b.T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-12, rtol=0):
            raise ValueError("basis is not orthonormal")
        object.__setattr__(self, "basis", b)
        if self.point is not None:
            object.__setattr__(self, "point", np.asarray(self.point, dtype=float))

    @classmethod
    def span(cls, vectors, point=None):
        """Frame spanning the given column vectors (orthonormalized)."""
        return cls(orthonormalize(vectors), point)

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def n(self):
        return self.basis.shape[0]

    def projector(self):
        return self.basis @ self.basis.T

    def to_dict(self):
        return {
            "dim": self.dim,
            "basis": self.basis.T.tolist(),
            "point": None if self.point is None else self.point.tolist(),
        }


def _basis(u):
    return u.basis if isinstance(u, SubspaceFrame) else np.asarray(u, dtype=float)


def principal_angles(u, v):
    """Principal angles between two subspaces, ascending, in [0, pi/2].

    Cosines come from the singular values of U^T V. Angles below pi/4 are
    recomputed from sines (singular values of V - U U^T V), which keeps
    resolution for nearly coincident subspaces where arccos saturates.
    Works on single frames or on stacks with shape (..., n, k).
    """
    a, b = _basis(u), _basis(v)
    if a.shape[-2] != b.shape[-2]:
        raise ValueError("subspaces live in different dimensions")
    if a.shape[-1] == 0 or b.shape[-1] == 0:
        return np.zeros(np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + (0,))
    if a.shape[-1] < b.shape[-1]:
        a, b = b, a
    k = b.shape[-1]
    cos = np.linalg.svd(np.swapaxes(a, -1, -2) @ b, compute_uv=False)[..., :k]
    cos = np.clip(cos, 0.0, 1.0)
    ang_cos = np.arccos(cos)  # cosines come sorted descending
    resid = b - a @ (np.swapaxes(a, -1, -2) @ b)
    sin = np.linalg.svd(resid, compute_uv=False)[..., :k]
    sin = np.clip(sin, 0.0, 1.0)[..., ::-1]  # ascending
    ang_sin = np.arcsin(sin)
    return np.where(ang_cos < np.pi / 4, ang_sin, ang_cos)


def subspace_distance(u, v):
    """Largest principal angle (the Grassmann max-angle distance)."""
    ang = principal_angles(u, v)
    if ang.shape[-1] == 0:
        return np.zeros(ang.shape[:-1])
    return ang[..., -1]


def intersection(frames, tol=1e-8):
    """Orthonormal basis of the common intersection of several subspaces.

    Stacks ``I - P_i`` and keeps the right singular vectors whose singular
    values fall below ``tol``.
    """
    bases = [_basis(f) for f in frames]
    n = bases[0].shape[0]
    stack = np.vstack([np.eye(n) - b @ b.T for b in bases])
    _, s, vt = np.linalg.svd(stack)
    keep = s < tol
    return vt[keep].T, s


def intersection_dimension(frames, tol=1e-8):
    basis, _ = intersection(frames, tol)
    return basis.shape[1]


def batched_intersection(a, b, dim):
    """Intersection of two stacks of subspaces with known dimension.

    Returns the ``dim`` right singular vectors of [I - P_a; I - P_b] with
    the smallest singular values, and those singular values.
    """
    n = a.shape[-2]
    eye = np.eye(n)
    pa = eye - a @ np.swapaxes(a, -1, -2)
    pb = eye - b @ np.swapaxes(b, -1, -2)
    stack = np.concatenate([pa, pb], axis=-2)
    _, s, vt = np.linalg.svd(stack)
    basis = np.swapaxes(vt[..., n - dim:, :], -1, -2)
    return basis, s[..., n - dim:]
