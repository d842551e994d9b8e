"""Rotation-bump perturbations of linear maps that create several cu-directions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .branch import BranchCode, PreconditionError, avoiding_backward_orbit, preimages
from .maps import Endomorphism, LinearPart, MapError, RotationBump, profile_constant
from .subspaces import intersection, orthonormalize
from .torus import torus_distance

RADIUS_FRACTION = 0.9  # of tau / 3
MIN_MOTION = 0.1
MAX_DRAWS = 10_000
TRIPLE_TOL = 1e-6


class DesignError(RuntimeError):
    """The builder could not produce a valid design."""


def named_plane(linear, label):
    """Orthonormal rows spanning a named rotation plane.

    ``"uu-s"`` uses the eigenvectors of the largest and smallest moduli,
    ``"wu-s"`` the middle and smallest ones (T^3 only).
    """
    lookup = {"uu-s": (-1, 0), "wu-s": (1, 0)}
    if label not in lookup:
        raise MapError(f"unknown plane label {label!r}")
    if linear.n != 3 and label == "wu-s":
        raise MapError("plane 'wu-s' needs a three-dimensional map")
    i, j = lookup[label]
    vecs = np.column_stack([linear.eigenvector(i % linear.n), linear.eigenvector(j)])
    return orthonormalize(vecs).T


@dataclass(eq=False)
class DesignReport:
    """What the builder chose and the certificate for the designed point."""

    point: np.ndarray
    preimages: np.ndarray
    bumps: list
    angle: float
    c1_distance: float
    planes: list
    branches: list
    cu_frames: list = field(default_factory=list)
    triple_angle: float = None
    triple_dimension: int = None
    degenerate: bool = False
    notes: list = field(default_factory=list)
    cone_certificate: dict = None

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "preimages": self.preimages.tolist(),
            "bumps": [{"center": c.tolist(), "radius": r} for c, r in self.bumps],
            "angle": self.angle,
            "c1_distance": self.c1_distance,
            "planes": self.planes,
            "branches": [str(b) for b in self.branches],
            "cu_frames": [f.T.tolist() for f in self.cu_frames],
            "triple_angle": self.triple_angle,
            "triple_dimension": self.triple_dimension,
            "degenerate": self.degenerate,
            "notes": self.notes,
            "cone_certificate": self.cone_certificate,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def sample_design_point(linear, rng, radius):
    """Draw x until it moves, its preimages are well apart and x avoids the balls."""
    f = Endomorphism(linear)
    tau = linear.separation()
    for _ in range(MAX_DRAWS):
        x = rng.random(linear.n)
        if torus_distance(f.evaluate(x), x) <= MIN_MOTION:
            continue
        pre = preimages(f, x)
        d = torus_distance(pre[:, None, :], pre[None, :, :])
        if np.min(d[np.triu_indices(len(pre), 1)]) < tau / 2:
            continue
        if np.min(torus_distance(pre, x)) <= radius:
            continue
        return x, pre
    raise DesignError("no admissible non-fixed point found")


def triple_intersection(frames, tol=TRIPLE_TOL):
    """Certificate that three planes in R^3 meet only at the origin.

    Returns ``(angle, dimension)``: the angle between the line F1 cap F2 and
    the plane F3, and the dimension of the common intersection (0 when the
    angle exceeds ``tol``).
    """
    f1, f2, f3 = frames
    line, _ = intersection([f1, f2], 1e-8)
    if line.shape[1] != 1:
        # F1 = F2 (or worse); the triple intersection is at least a line
        common, _ = intersection(frames, 1e-8)
        return 0.0, int(common.shape[1])
    v = line[:, 0]
    resid = v - f3 @ (f3.T @ v)
    angle = float(np.arcsin(min(1.0, np.linalg.norm(resid))))
    return angle, (0 if angle > tol else 1)


def build_theorem_d_map(linear, angle, seed=0, planes=("uu-s", "wu-s"), radius=None,
                        depth=40, verify=True, beta=0.4, grid=32):
    """Perturb a degree >= 3 linear map on T^3 by rotation bumps at two preimages.

    Parameters
    ----------
    linear : LinearPart or array_like
        Partially hyperbolic with one-dimensional s, c and u bundles.
    angle : float
        Rotation angle at the bump centers.
    planes : pair of str or (2, 3) arrays
        Rotation planes for the two bumps. Identical planes would make the
        two tilted cu-planes coincide.
    verify : bool
        Run the cone verifier and refuse maps that fail it.

    Returns
    -------
    (Endomorphism, DesignReport)
    """
    if not isinstance(linear, LinearPart):
        linear = LinearPart(linear)
    if linear.n != 3 or linear.dims != (1, 1, 1):
        raise PreconditionError("needs a partially hyperbolic map on T^3 with dims (1, 1, 1)")
    if not linear.integral or linear.degree < 3:
        raise PreconditionError("needs an integer linear part of degree at least 3")
    rng = np.random.default_rng(seed)
    tau = linear.separation()
    r = RADIUS_FRACTION * tau / 3.0 if radius is None else float(radius)
    if not 0 < r < tau / 3.0:
        raise PreconditionError("bump radius must lie in (0, tau/3)")
    x, pre = sample_design_point(linear, rng, r)

    plane_arrays, labels = [], []
    for p in planes:
        if isinstance(p, str):
            plane_arrays.append(named_plane(linear, p))
            labels.append(p)
        else:
            plane_arrays.append(orthonormalize(np.asarray(p, dtype=float).T).T)
            labels.append(None)

    degenerate = angle == 0
    bumps = []
    if not degenerate:
        bumps = [
            RotationBump(pre[i], r, angle, plane_arrays[i], "poly4", labels[i]) for i in (0, 1)
        ]
    f = Endomorphism(linear, bumps)

    # designed branches: branch i starts at preimage i, then avoids both balls
    balls = [(pre[0], r), (pre[1], r)]
    branches = []
    for i in range(3):
        tail = avoiding_backward_orbit(f, pre[i], balls, depth - 1)
        branches.append(BranchCode((i,) + tail.code.word, f.degree))

    e_cu = linear.bundles()["cu"]
    frames = []
    for i in range(3):
        if i < 2 and not degenerate:
            m = linear.matrix @ bumps[i].rotation(angle) @ e_cu
        else:
            m = linear.matrix @ e_cu
        frames.append(np.linalg.qr(m)[0])
    t_angle, t_dim = triple_intersection(frames)

    notes = []
    if degenerate:
        notes.append("degenerate: special map unchanged")
    report = DesignReport(
        point=x,
        preimages=pre,
        bumps=balls,
        angle=float(angle),
        c1_distance=float(profile_constant("poly4") * abs(angle)),
        planes=[lab if lab is not None else p.tolist() for lab, p in zip(labels, plane_arrays)],
        branches=branches,
        cu_frames=frames,
        triple_angle=t_angle,
        triple_dimension=t_dim,
        degenerate=degenerate,
        notes=notes,
    )
    design = {"point": x.tolist(), "branches": [str(b) for b in branches], "angle": float(angle), "seed": seed}
    f = Endomorphism(linear, bumps, design=design)
    if verify and not degenerate:
        from .cones import ConeFamily, verify_cone_conditions

        cert = verify_cone_conditions(f, ConeFamily(beta), grid, seed=seed)
        report.cone_certificate = cert.to_dict()
        if not cert.passed:
            raise DesignError(f"cone verification failed for angle {angle}")
    return f, report
