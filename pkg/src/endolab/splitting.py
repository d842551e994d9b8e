"""Invariant splittings along orbits.

E^s and E^cs come from the forward orbit only: a generic frame placed far
ahead is pulled back with the inverse derivatives and re-orthonormalized at
every step, converging to the most contracted directions of the forward
cocycle. E^u and E^cu depend on a backward branch: a generic frame placed at
the tail of the branch is pushed forward with QR. E^c is E^cu cap E^cs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .branch import BackwardOrbit, BranchCode, backward_orbits
from .subspaces import SubspaceFrame, batched_intersection, intersection, principal_angles, subspace_distance
from .torus import project, torus_distance

FORWARD_DEPTH = 40
BACKWARD_DEPTH = 40
DRIFT_WINDOW = 5
GAP_TOL = 1e-10
COLLAPSE_TOL = 1e-12
CENTER_TOL = 1e-8
RETRY_RESIDUAL = 1e-6
RETRY_SEEDS = 3


class SplittingError(RuntimeError):
    pass


class SpectralGapError(SplittingError):
    """No usable singular-value gap at a splitting position."""


class FrameCollapseError(SplittingError):
    """A pushed frame lost rank."""


class OrbitError(ValueError):
    """Consecutive points are not related by the map."""


def generic_frame(n, seed=0):
    """Seeded random orthogonal n x n matrix (columns are nested generic frames)."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _qr(y):
    q, r = np.linalg.qr(y)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1)).copy()
    d[d == 0] = 1.0
    return q * d[..., None, :], r * d[..., :, None]


def _check_collapse(r):
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    scale = np.max(np.abs(r), axis=(-2, -1))
    if np.any(diag <= COLLAPSE_TOL * scale[..., None]):
        raise FrameCollapseError("frame collapsed during re-orthonormalization")


def pullback(f, orbit, frame=None, seed=0, keep=None):
    """Pull a frame back along a forward-time orbit with inverse derivatives.

    Parameters
    ----------
    orbit : array, shape (..., L+1, n)
        Points x_0..x_L in forward time.
    frame : array, shape (n, k), optional
        Frame at x_L; defaults to a full generic n-frame.
    keep : sequence of int, optional
        Time indices at which frames are stored (default: all).

    Returns
    -------
    frames : dict {t: array (..., n, k)}
    rs : array (..., L, k, k)
        QR factors with D_t^{-1} Q_{t+1} = Q_t R_t.
    logs : array (..., k)
        Accumulated log|diag R| (log singular values of the inverse cocycle).
    """
    orbit = np.asarray(orbit, dtype=float)
    n = orbit.shape[-1]
    steps = orbit.shape[-2] - 1
    if frame is None:
        frame = generic_frame(n, seed)
    q = np.broadcast_to(frame, orbit.shape[:-2] + frame.shape).copy()
    keep = range(steps + 1) if keep is None else keep
    keep = set(keep)
    frames = {}
    if steps in keep:
        frames[steps] = q
    rs = np.empty(orbit.shape[:-2] + (steps, frame.shape[1], frame.shape[1]))
    logs = np.zeros(orbit.shape[:-2] + (frame.shape[1],))
    deriv = f.derivative(orbit[..., :-1, :])
    for t in range(steps - 1, -1, -1):
        q, r = _qr(np.linalg.solve(deriv[..., t, :, :], q))
        _check_collapse(r)
        rs[..., t, :, :] = r
        logs += np.log(np.abs(np.diagonal(r, axis1=-2, axis2=-1)))
        if t in keep:
            frames[t] = q
    return frames, rs, logs


def pushforward(f, orbit, frame=None, seed=0, keep=None):
    """Push a frame forward along an orbit with QR at every step.

    ``orbit`` holds x_0..x_L in forward time; ``frame`` lives at x_0. Returns
    ``(frames, rs, logs)`` with D_t Q_t = Q_{t+1} R_t.
    """
    orbit = np.asarray(orbit, dtype=float)
    n = orbit.shape[-1]
    steps = orbit.shape[-2] - 1
    if frame is None:
        frame = generic_frame(n, seed)
    q = np.broadcast_to(frame, orbit.shape[:-2] + frame.shape).copy()
    keep = range(steps + 1) if keep is None else keep
    keep = set(keep)
    frames = {}
    if 0 in keep:
        frames[0] = q
    rs = np.empty(orbit.shape[:-2] + (steps, frame.shape[1], frame.shape[1]))
    logs = np.zeros(orbit.shape[:-2] + (frame.shape[1],))
    deriv = f.derivative(orbit[..., :-1, :])
    for t in range(steps):
        q, r = _qr(deriv[..., t, :, :] @ q)
        _check_collapse(r)
        rs[..., t, :, :] = r
        logs += np.log(np.abs(np.diagonal(r, axis1=-2, axis2=-1)))
        if t + 1 in keep:
            frames[t + 1] = q
    return frames, rs, logs


def _check_gap(rs, dims):
    """Raise when neighbouring bundle rates are indistinguishable.

    Rates are read from the R factors of the settled half of a pullback
    sweep (times 0..L/2, reached last), where the start-up transient of the
    generic frame has died out.
    """
    s, c, _ = dims
    half = max(1, rs.shape[-3] // 2)
    logs = np.log(np.abs(np.diagonal(rs[..., :half, :, :], axis1=-2, axis2=-1))).sum(axis=-2)
    for pos in sorted({s, s + c}):
        if pos >= logs.shape[-1]:
            continue
        gap = np.abs(logs[..., pos - 1] - logs[..., pos])
        if np.any(gap < GAP_TOL):
            raise SpectralGapError(f"rate gap below {GAP_TOL} at position {pos}")


# ---------------------------------------------------------------------------
# single-point operations

def cocycle_product(f, orbit, direction="forward", tol=1e-9):
    """Derivative cocycle along an orbit, with per-step rescaling.

    ``forward``: ``orbit`` holds x_0..x_{k-1}; returns Df_{x_{k-1}} ... Df_{x_0}.
    ``backward``: ``orbit`` is a BackwardOrbit (or depth-ordered points
    x_0, x_{-1}, ..., x_{-m}); returns Df_{x_{-1}} ... Df_{x_{-m}}.

    Returns ``(matrix, log_scale)``; the product equals ``exp(log_scale) * matrix``.
    """
    if direction == "forward":
        pts = np.atleast_2d(np.asarray(orbit, dtype=float))
    elif direction in ("backward", "backward-pushforward"):
        pts = orbit.points if isinstance(orbit, BackwardOrbit) else np.asarray(orbit, dtype=float)
        pts = pts[::-1][:-1]  # x_{-m}, ..., x_{-1}
        if len(pts) and not np.all(torus_distance(f.evaluate(pts[-1]), np.asarray(
                orbit.points if isinstance(orbit, BackwardOrbit) else orbit)[0]) <= tol):
            raise OrbitError("orbit tail does not map onto its base point")
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if len(pts) > 1:
        err = torus_distance(f.evaluate(pts[:-1]), pts[1:])
        if np.any(err > tol):
            raise OrbitError(f"consecutive points are not an orbit (error {err.max():.3g})")
    m = np.eye(f.n)
    log_scale = 0.0
    for d in f.derivative(pts):
        m = d @ m
        s = np.max(np.abs(m))
        m = m / s
        log_scale += np.log(s)
    return m, log_scale


def _residual(a, b):
    return float(subspace_distance(a, b)) if a.shape[-1] else 0.0


def stable_and_cs_frames(f, x, forward_depth=FORWARD_DEPTH, seed=0):
    """E^s and E^cs at x from forward data only.

    Returns ``(E_s, E_cs, residuals)`` where residuals hold the principal-angle
    drift between depth m and depth m - 5 estimates. There is deliberately no
    branch-code argument.
    """
    x = project(np.asarray(x, dtype=float))
    s, c, _ = f.dims
    orbit = f.orbit(x, forward_depth)
    frames, rs, _ = pullback(f, orbit, seed=seed, keep=[0])
    _check_gap(rs, f.dims)
    short, _, _ = pullback(f, orbit[: forward_depth - DRIFT_WINDOW + 1], seed=seed, keep=[0])
    q, q5 = frames[0], short[0]
    residuals = {"s": _residual(q[:, :s], q5[:, :s]), "cs": _residual(q[:, : s + c], q5[:, : s + c])}
    return SubspaceFrame(q[:, :s], x), SubspaceFrame(q[:, : s + c], x), residuals


def unstable_and_cu_frames(f, orbit, seed=0, initial=None):
    """E^u and E^cu at the base of a backward orbit (branch dependent).

    ``initial`` optionally fixes the leading columns of the starting frame at
    the tail x_{-m}; remaining columns are generic.
    """
    if orbit.depth < 10:
        raise ValueError("backward orbit depth must be at least 10")
    _, c, u = f.dims
    n = f.n
    frame = generic_frame(n, seed)
    if initial is not None:
        init = np.atleast_2d(np.asarray(initial, dtype=float).T).T
        init = init.reshape(n, -1)
        frame = np.linalg.qr(np.hstack([init, frame]))[0][:, :n]
    pts = orbit.time_ordered()
    frames, _, _ = pushforward(f, pts, frame=frame, keep=[pts.shape[0] - 1])
    short, _, _ = pushforward(f, pts[DRIFT_WINDOW:], frame=frame, keep=[pts.shape[0] - 1 - DRIFT_WINDOW])
    q = frames[pts.shape[0] - 1]
    q5 = short[pts.shape[0] - 1 - DRIFT_WINDOW]
    base = orbit.base
    residuals = {"u": _residual(q[:, :u], q5[:, :u]), "cu": _residual(q[:, : c + u], q5[:, : c + u])}
    return SubspaceFrame(q[:, :u], base), SubspaceFrame(q[:, : c + u], base), residuals


def center_frame(e_cu, e_cs, c=None, tol=CENTER_TOL):
    """E^c = E^cu cap E^cs, checked to have dimension c."""
    n = e_cu.n
    if c is None:
        c = e_cu.dim + e_cs.dim - n
    if c < 0:
        raise ValueError("frames cannot intersect in the expected dimension")
    basis, _ = intersection([e_cu, e_cs], tol)
    if basis.shape[1] != c:
        raise SplittingError(f"intersection has dimension {basis.shape[1]}, expected {c}")
    return SubspaceFrame(np.linalg.qr(basis)[0] if c else basis, e_cu.point)


# ---------------------------------------------------------------------------
# batched engine

@dataclass(eq=False)
class OrbitSplitting:
    """Covariant frames along forward orbit segments x_0..x_L (batched).

    Arrays carry a leading batch axis P. ``cs``/``cu`` are nested frames: the
    first s (resp. u) columns span E^s (resp. E^u).
    """

    points: np.ndarray  # (P, L+1, n)
    cs: np.ndarray  # (P, L+1, n, s+c)
    cu: np.ndarray  # (P, L+1, n, c+u)
    center: np.ndarray  # (P, L+1, n, c)
    pull_r: np.ndarray  # (P, L, n, n)
    push_r: np.ndarray  # (P, L, n, n)
    dims: tuple
    codes: np.ndarray = None
    center_residual: np.ndarray = None

    def frame(self, sigma, t=0):
        s, c, u = self.dims
        if sigma == "s":
            return self.cs[:, t, :, :s]
        if sigma == "cs":
            return self.cs[:, t]
        if sigma == "u":
            return self.cu[:, t, :, :u]
        if sigma == "cu":
            return self.cu[:, t]
        if sigma == "c":
            return self.center[:, t]
        raise ValueError(f"unknown bundle {sigma!r}")

    def restricted(self, sigma, f=None):
        """One-step cocycle restricted to a bundle in its own frames, (P, L, d, d)."""
        s, c, u = self.dims
        if sigma in ("s", "cs"):
            k = s if sigma == "s" else s + c
            return np.linalg.inv(self.pull_r[:, :, :k, :k])
        if sigma in ("u", "cu"):
            k = u if sigma == "u" else c + u
            return self.push_r[:, :, :k, :k]
        if sigma == "c":
            if f is None:
                raise ValueError("center cocycle needs the map")
            d = f.derivative(self.points[:, :-1])
            cf = self.center
            return np.swapaxes(cf[:, 1:], -1, -2) @ d @ cf[:, :-1]
        raise ValueError(f"unknown bundle {sigma!r}")


def split_orbits(f, x, codes, length=0, forward_depth=FORWARD_DEPTH, seed=0):
    """Frames along x_0..x_length for a batch of points and branch codes.

    Parameters
    ----------
    x : array (P, n) or (n,)
    codes : int array (P, m); m is the backward depth.
    """
    codes = np.atleast_2d(np.asarray(codes, dtype=int))
    p = codes.shape[0]
    n = f.n
    s, c, u = f.dims
    x = project(np.broadcast_to(np.asarray(x, dtype=float), (p, n)).copy())
    back = backward_orbits(f, x, codes)[:, ::-1]  # x_{-m}..x_0
    m = codes.shape[1]
    fwd = f.orbit(x, length + forward_depth)  # x_0..x_{L+fd}
    frame = generic_frame(n, seed)
    keep = range(length + 1)
    pf, pr, plog = pullback(f, fwd, frame=frame, keep=keep)
    _check_gap(pr, f.dims)
    bi = np.concatenate([back[:, :-1], fwd[:, : length + 1]], axis=1)
    uf, ur, _ = pushforward(f, bi, frame=frame, keep=[m + t for t in keep])
    cs = np.stack([pf[t][..., : s + c] for t in keep], axis=1)
    cu = np.stack([uf[m + t][..., : c + u] for t in keep], axis=1)
    if c:
        center, resid = batched_intersection(cs, cu, c)
        if np.any(resid > CENTER_TOL):
            raise SplittingError("E^cu and E^cs do not intersect in dimension c")
    else:
        center = np.zeros(cs.shape[:-1] + (0,))
        resid = np.zeros(cs.shape[:-2] + (0,))
    return OrbitSplitting(
        points=fwd[:, : length + 1],
        cs=cs,
        cu=cu,
        center=center,
        pull_r=pr[:, :length],
        push_r=ur[:, m : m + length],
        dims=f.dims,
        codes=codes,
        center_residual=resid,
    )


@dataclass(eq=False)
class SplittingEstimate:
    """Splitting E^s + E^c + E^u at a point with convergence diagnostics."""

    point: np.ndarray
    frames: dict
    residuals: dict
    code: BranchCode
    forward_depth: int
    backward_depth: int
    dims: tuple
    log_singular_values: np.ndarray = field(default=None)
    seed: int = 0

    def transversality(self):
        """Smallest principal angle between pairs of E^s, E^c, E^u."""
        keys = [k for k in ("s", "c", "u") if self.frames[k].dim]
        out = []
        for i in range(len(keys)):
            for j in range(i + 1, len(keys)):
                out.append(float(principal_angles(self.frames[keys[i]], self.frames[keys[j]])[0]))
        return min(out)

    def spanning_determinant(self):
        basis = np.hstack([self.frames[k].basis for k in ("s", "c", "u")])
        return float(abs(np.linalg.det(basis)))

    def max_residual(self):
        return max(self.residuals.values())

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "dims": list(self.dims),
            "code": str(self.code),
            "forward_depth": self.forward_depth,
            "backward_depth": self.backward_depth,
            "seed": self.seed,
            "frames": {k: v.to_dict() for k, v in self.frames.items()},
            "residuals": self.residuals,
            "transversality": self.transversality(),
            "spanning_determinant": self.spanning_determinant(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def compute_splitting(f, x, code=None, forward_depth=FORWARD_DEPTH, seed=0):
    """Full splitting at x along the backward branch ``code`` (default all zeros).

    A non-generic starting frame shows up as a collapsed frame or a drift
    residual above ``RETRY_RESIDUAL``; the computation is then repeated with
    the next seeds and the attempt with the smallest residual is kept.
    """
    x = project(np.asarray(x, dtype=float))
    if code is None:
        code = BranchCode((0,) * BACKWARD_DEPTH, f.degree)
    elif not isinstance(code, BranchCode):
        code = BranchCode(tuple(code), f.degree)
    best, error = None, None
    for attempt in range(seed, seed + RETRY_SEEDS):
        try:
            est = _splitting_once(f, x, code, forward_depth, attempt)
        except FrameCollapseError as exc:
            error = exc
            continue
        if best is None or est.max_residual() < best.max_residual():
            best = est
        if best.max_residual() <= RETRY_RESIDUAL:
            break
    if best is None:
        raise error
    return best


def _splitting_once(f, x, code, forward_depth, seed):
    from .branch import backward_orbit

    e_s, e_cs, res_s = stable_and_cs_frames(f, x, forward_depth, seed)
    orbit = backward_orbit(f, x, code)
    e_u, e_cu, res_u = unstable_and_cu_frames(f, orbit, seed)
    e_c = center_frame(e_cu, e_cs, f.dims[1])
    # drift of E^c follows from its two parents
    residuals = {**res_s, **res_u, "c": max(res_s["cs"], res_u["cu"])}
    return SplittingEstimate(
        point=x,
        frames={"s": e_s, "c": e_c, "u": e_u, "cs": e_cs, "cu": e_cu},
        residuals=residuals,
        code=code,
        forward_depth=forward_depth,
        backward_depth=len(code),
        dims=f.dims,
        seed=seed,
    )


def push_code(f, x, code):
    """Branch code at f(x) for the orbit (f(x), x, x_{-1}, ...)."""
    from .branch import preimage_index

    y = f.evaluate(x)
    idx = int(preimage_index(f, y, x))
    if not isinstance(code, BranchCode):
        code = BranchCode(tuple(code), f.degree)
    return code.prefix(idx)


def pushed_cs_frames(f, x, codes, push_steps=10, forward_depth=FORWARD_DEPTH, seed=0):
    """E^cs(x) rebuilt from points on backward branches (batched).

    For each code, E^cs at y = x_{-push_steps} is the orthogonal complement of
    the dominant u-dimensional subspace of the transposed cocycle (swept with
    Df^T from far along the forward orbit of y), then pushed forward to x with
    QR. Different codes start from different y, so agreement across codes
    tests branch independence without using the inverse-derivative sweep.
    """
    codes = np.atleast_2d(np.asarray(codes, dtype=int))[:, :push_steps]
    if codes.shape[1] < push_steps:
        raise ValueError("codes shorter than push_steps")
    n = f.n
    s, c, u = f.dims
    y = backward_orbits(f, x, codes)[:, -1]
    orbit = f.orbit(y, push_steps + forward_depth)
    deriv = f.derivative(orbit[:, :-1])
    q = np.broadcast_to(generic_frame(n, seed)[:, :u], (len(y), n, u)).copy()
    for t in range(orbit.shape[1] - 2, -1, -1):
        q, r = _qr(np.swapaxes(deriv[:, t], -1, -2) @ q)
        _check_collapse(r)
    full, _ = np.linalg.qr(q, mode="complete")
    cs = full[..., u:]
    for t in range(push_steps):
        cs, _ = _qr(deriv[:, t] @ cs)
    return cs


def transversality_floor(f, resolution, chunk=4096, seed=0):
    """Smallest principal angle among E^s, E^c, E^u over a grid of cell centers.

    Uses the all-zeros branch at every node. Returns ``(floor, witness)``.
    """
    n = f.n
    axes = [(np.arange(resolution) + 0.5) / resolution] * n
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    best, witness = np.inf, None
    keys = [k for k, d in zip("scu", f.dims) if d]
    for lo in range(0, len(nodes), chunk):
        x = nodes[lo: lo + chunk]
        sp = split_orbits(f, x, np.zeros((len(x), BACKWARD_DEPTH), dtype=int), seed=seed)
        for i in range(len(keys)):
            for j in range(i + 1, len(keys)):
                ang = principal_angles(sp.frame(keys[i], 0), sp.frame(keys[j], 0))[:, 0]
                k = int(np.argmin(ang))
                if ang[k] < best:
                    best, witness = float(ang[k]), x[k]
    return best, witness
