"""Hyperbolicity constants, angle decay and adapted metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .branch import enumerate_codes, codes_array
from .splitting import FORWARD_DEPTH, generic_frame, split_orbits, stable_and_cs_frames, _qr
from .subspaces import SubspaceFrame, principal_angles, subspace_distance
from .torus import project

ANGLE_FLOOR = 1e-12
MIN_FIT_SAMPLES = 5
MAX_ADAPTED_N = 64


class ConstantsViolation(ValueError):
    """Fitted rates do not satisfy 0 < nu < gamma1 <= gamma2 < mu."""


class AngleUnderflowError(ValueError):
    pass


@dataclass(frozen=True)
class HyperbolicityConstants:
    nu: float
    gamma1: float
    gamma2: float
    mu: float
    C: float
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        problems = self.violations()
        if problems:
            raise ConstantsViolation("; ".join(problems))

    def violations(self):
        out = []
        if not 0 < self.nu < self.gamma1:
            out.append(f"need 0 < nu < gamma1, got nu={self.nu:.6g}, gamma1={self.gamma1:.6g}")
        if not self.gamma1 <= self.gamma2:
            out.append(f"need gamma1 <= gamma2, got {self.gamma1:.6g} > {self.gamma2:.6g}")
        if not self.gamma2 < self.mu:
            out.append(f"need gamma2 < mu, got gamma2={self.gamma2:.6g}, mu={self.mu:.6g}")
        if not self.nu < 1:
            out.append(f"need nu < 1, got {self.nu:.6g}")
        if not self.mu > 1:
            out.append(f"need mu > 1, got {self.mu:.6g}")
        if not self.C >= 1:
            out.append(f"need C >= 1, got {self.C:.6g}")
        return out

    def as_tuple(self):
        return (self.nu, self.gamma1, self.gamma2, self.mu, self.C)

    def to_dict(self):
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(d["nu"], d["gamma1"], d["gamma2"], d["mu"], d["C"], tuple(d["dims"]))


# ---------------------------------------------------------------------------
# constants

def _window_log_svals(blocks):
    """log of extreme singular values of products over all windows.

    ``blocks`` has shape (P, L, k, k). Returns ``(lo, hi)`` of shape
    (P, L, L+1) indexed by (start, length); entries with start + length > L
    are NaN and length 0 is 0.
    """
    p, steps, k, _ = blocks.shape
    lo = np.full((p, steps, steps + 1), np.nan)
    hi = np.full((p, steps, steps + 1), np.nan)
    lo[:, :, 0] = hi[:, :, 0] = 0.0
    for start in range(steps):
        m = np.broadcast_to(np.eye(k), (p, k, k))
        scale = np.zeros(p)
        for length in range(1, steps - start + 1):
            m = blocks[:, start + length - 1] @ m
            sv = np.linalg.svd(m, compute_uv=False)
            top = sv[:, 0]
            m = m / top[:, None, None]
            scale += np.log(top)
            hi[:, start, length] = scale
            lo[:, start, length] = scale + np.log(sv[:, -1] / top)
    return lo, hi


def _fit_rate(logs):
    """Least-squares slope of logs[n] against n (n = 0..len-1), per row."""
    n = np.arange(logs.shape[-1], dtype=float)
    n_c = n - n.mean()
    return (logs - logs.mean(axis=-1, keepdims=True)) @ n_c / (n_c @ n_c)


def _clean(value, target=1.0, tol=1e-9):
    return target if abs(value - target) <= tol else float(value)


def bundle_growth(f, points, depth, codes=None, seed=0):
    """Window log-singular-values of Df^n restricted to each bundle.

    Returns a dict ``sigma -> (lo, hi)`` over the orbit segment of length
    ``2 * depth`` starting at each sample point.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if codes is None:
        codes = np.zeros((points.shape[0], FORWARD_DEPTH), dtype=int)
    sp = split_orbits(f, points, codes, length=2 * depth, seed=seed)
    s, c, u = f.dims
    out = {}
    for sigma, dim in (("s", s), ("c", c), ("u", u)):
        if dim:
            out[sigma] = _window_log_svals(sp.restricted(sigma, f))
    return out, sp


def estimate_constants(f, sample_points, depth=20, codes=None, seed=0):
    """Fit (nu, gamma1, gamma2, mu, C) from bundle growth along sample orbits.

    Rates are least-squares exponential slopes of the extremal singular
    values of Df^n restricted to each bundle (n = 0..depth, from each sample),
    taking the worst case over samples. C is the smallest constant making
    every inequality hold on every window of length <= depth along an orbit
    segment of length 2 * depth, clamped below at 1.

    Raises
    ------
    ConstantsViolation
        If the fitted rates break 0 < nu < gamma1 <= gamma2 < mu.
    """
    growth, _ = bundle_growth(f, sample_points, depth, codes, seed)
    lo_s, hi_s = growth["s"]
    lo_u, hi_u = growth["u"]
    nu = math.exp(np.max(_fit_rate(hi_s[:, 0, : depth + 1])))
    mu = math.exp(np.min(_fit_rate(lo_u[:, 0, : depth + 1])))
    if "c" in growth:
        lo_c, hi_c = growth["c"]
        gamma1 = math.exp(np.min(_fit_rate(lo_c[:, 0, : depth + 1])))
        gamma2 = math.exp(np.max(_fit_rate(hi_c[:, 0, : depth + 1])))
    else:
        gamma1 = gamma2 = 1.0
    lengths = np.arange(depth + 1, dtype=float)
    win = (slice(None), slice(0, depth), slice(0, depth + 1))
    env = [
        hi_s[win] - lengths * math.log(nu),
        lengths * math.log(mu) - lo_u[win],
    ]
    if "c" in growth:
        env.append(lengths * math.log(gamma1) - lo_c[win])
        env.append(hi_c[win] - lengths * math.log(gamma2))
    log_c = max(float(np.nanmax(e)) for e in env)
    big_c = _clean(max(1.0, math.exp(log_c)))
    gamma1, gamma2 = _clean(gamma1), _clean(gamma2)
    if gamma1 > gamma2:
        # one-dimensional center: both are fits of the same quantity
        gamma1 = gamma2 = math.sqrt(gamma1 * gamma2)
    return HyperbolicityConstants(nu, gamma1, gamma2, mu, big_c, f.dims)


def rate_certificate(f, constants, points, length=20, seed=0):
    """Worst ratios ||Df^n v^s|| / (C nu^n ||v^s||) and C mu^n ||v^u|| / ||Df^n v^u||.

    Both are <= 1 when the constants bound the growth along the given orbits.
    """
    growth, _ = bundle_growth(f, points, length, seed=seed)
    n = np.arange(length + 1, dtype=float)
    lc = math.log(constants.C)
    s_ratio = np.nanmax(growth["s"][1][:, 0, : length + 1] - lc - n * math.log(constants.nu))
    u_ratio = np.nanmax(n * math.log(constants.mu) - lc - growth["u"][0][:, 0, : length + 1])
    return math.exp(s_ratio), math.exp(u_ratio)


# ---------------------------------------------------------------------------
# angle decay

@dataclass
class AngleSeries:
    n: np.ndarray
    angle: np.ndarray
    slope: float = None
    flagged: str = None
    fit_range: tuple = None

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "angle", "log_angle"])
        for k, a in zip(self.n, self.angle):
            w.writerow([int(k), repr(float(a)), repr(float(np.log(a))) if a > 0 else "-inf"])
        return buf.getvalue()


def _contained(frame, container, tol=1e-8):
    return float(subspace_distance(frame, container)) < tol


def angle_decay_series(f, x, e1, e2, n_max=40, forward_depth=FORWARD_DEPTH, seed=0):
    """Angles between Df^n E1 and Df^n E2 for n = 0..n_max with a fitted log-slope.

    When both subspaces lie in E^cs(x) they are pushed with the cocycle
    restricted to E^cs (expressed in its own orthonormal frames), because the
    full derivative would amplify rounding errors along E^u. Otherwise the
    full derivative with per-step QR is used.
    """
    x = project(np.asarray(x, dtype=float))
    b1 = e1.basis if isinstance(e1, SubspaceFrame) else np.asarray(e1, dtype=float).reshape(f.n, -1)
    b2 = e2.basis if isinstance(e2, SubspaceFrame) else np.asarray(e2, dtype=float).reshape(f.n, -1)
    if b1.shape[1] != b2.shape[1]:
        raise ValueError("subspaces must have equal dimension")
    ns = np.arange(n_max + 1)
    a0 = float(subspace_distance(b1, b2))
    if a0 <= ANGLE_FLOOR:
        return AngleSeries(ns, np.zeros(n_max + 1), None, "identical subspaces: slope undefined")
    _, e_cs, _ = stable_and_cs_frames(f, x, forward_depth, seed)
    angles = np.empty(n_max + 1)
    if e_cs.dim > b1.shape[1] and _contained(b1, e_cs) and _contained(b2, e_cs):
        sp = split_orbits(f, x[None], np.zeros((1, 1), dtype=int), length=n_max,
                          forward_depth=forward_depth, seed=seed)
        blocks = sp.restricted("cs")[0]
        q0 = sp.frame("cs", 0)[0]
        y1, y2 = q0.T @ b1, q0.T @ b2
        for k in range(n_max + 1):
            y1, y2 = np.linalg.qr(y1)[0], np.linalg.qr(y2)[0]
            angles[k] = subspace_distance(y1, y2)
            if k < n_max:
                y1, y2 = blocks[k] @ y1, blocks[k] @ y2
    else:
        orbit = f.orbit(x, n_max)
        deriv = f.derivative(orbit[:-1])
        y1, y2 = b1, b2
        for k in range(n_max + 1):
            y1, y2 = np.linalg.qr(y1)[0], np.linalg.qr(y2)[0]
            angles[k] = subspace_distance(y1, y2)
            if k < n_max:
                y1, y2 = deriv[k] @ y1, deriv[k] @ y2
    usable = 0
    while usable <= n_max and angles[usable] > ANGLE_FLOOR:
        usable += 1
    if usable < MIN_FIT_SAMPLES:
        raise AngleUnderflowError(f"only {usable} angles above {ANGLE_FLOOR} before underflow")
    start = usable // 2
    if usable - start < MIN_FIT_SAMPLES:
        start = usable - MIN_FIT_SAMPLES
    slope = float(np.polyfit(ns[start:usable], np.log(angles[start:usable]), 1)[0])
    return AngleSeries(ns, angles, slope, None, (int(start), int(usable - 1)))


# ---------------------------------------------------------------------------
# adapted metric

def gram_matrix(f, x, big_n):
    """G(x) = sum_{j<N} (Df^j_x)^T Df^j_x, batched over x."""
    x = np.asarray(x, dtype=float)
    orbit = f.orbit(x, max(big_n - 1, 0))
    deriv = f.derivative(orbit[..., :-1, :]) if big_n > 1 else None
    m = np.broadcast_to(np.eye(f.n), x.shape[:-1] + (f.n, f.n)).copy()
    g = m.copy()
    for j in range(1, big_n):
        m = deriv[..., j - 1, :, :] @ m
        g = g + np.swapaxes(m, -1, -2) @ m
    return g


def derived_constants(constants, big_n, k):
    """(nu', gamma1', gamma2', mu') for the metric summed over N iterates with bound K."""
    c = constants.C
    a_s = (c * constants.nu**big_n) ** 2
    a_u = (constants.mu**big_n / c) ** 2
    a_1 = (constants.gamma1**big_n / c) ** 2
    a_2 = (c * constants.gamma2**big_n) ** 2
    nu_p = math.sqrt(max(1.0 + (a_s - 1.0) / k, 0.0))
    mu_p = math.sqrt(1.0 + (a_u - 1.0) / k)
    g1_p = math.sqrt(1.0 + (a_1 - 1.0) / k) if a_1 >= 1.0 else math.sqrt(a_1)
    g2_p = math.sqrt(a_2) if a_2 >= 1.0 else math.sqrt(1.0 + (a_2 - 1.0) / k)
    return nu_p, g1_p, g2_p, mu_p


def _chain_ok(nu_p, g1_p, g2_p, mu_p):
    return 0 < nu_p < g1_p <= g2_p < mu_p and nu_p < 1 < mu_p


@dataclass(eq=False)
class AdaptedMetricOperator:
    point: np.ndarray
    N: int
    G: np.ndarray
    K: float
    nu: float
    gamma1: float
    gamma2: float
    mu: float
    constants: HyperbolicityConstants
    margins: dict = field(default_factory=dict)

    def norm(self, v, g=None):
        g = self.G if g is None else g
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ g @ v))

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "N": self.N,
            "G": self.G.tolist(),
            "K": self.K,
            "nu_prime": self.nu,
            "gamma1_prime": self.gamma1,
            "gamma2_prime": self.gamma2,
            "mu_prime": self.mu,
            "constants": self.constants.to_dict(),
            "margins": self.margins,
        }


def admissible_n(constants, gram_bound, big_n=None):
    candidates = [big_n] if big_n is not None else range(1, MAX_ADAPTED_N + 1)
    for n in candidates:
        c = constants.C
        if not (c * constants.nu**n < 1 and (constants.mu**n / c) ** 2 > 1):
            continue
        k = gram_bound(n)
        derived = derived_constants(constants, n, k)
        if _chain_ok(*derived):
            return n, k, derived
    return None


def one_step_margins(f, metric_n, derived, points, codes=None, seed=0):
    """Worst margins of the one-step inequalities in the summed metric.

    Margins: ``nu' - max ratio on E^s``, ``min ratio on E^u - mu'``,
    ``min ratio on E^c - gamma1'`` and ``gamma2' - max ratio on E^c``, where
    ratio = ||Df v||'_{f(x)} / ||v||'_x.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if codes is None:
        codes = np.zeros((points.shape[0], FORWARD_DEPTH), dtype=int)
    sp = split_orbits(f, points, codes, length=1, seed=seed)
    g0 = gram_matrix(f, points, metric_n)
    g1 = gram_matrix(f, f.evaluate(points), metric_n)
    d = f.derivative(points)
    nu_p, g1_p, g2_p, mu_p = derived
    out = {}
    for sigma in ("s", "c", "u"):
        q = sp.frame(sigma, 0)
        if q.shape[-1] == 0:
            continue
        qt = np.swapaxes(q, -1, -2)
        top = qt @ np.swapaxes(d, -1, -2) @ g1 @ d @ q
        bottom = qt @ g0 @ q
        ev = np.array([scipy.linalg.eigh(a, b, eigvals_only=True) for a, b in zip(top, bottom)])
        lo, hi = np.sqrt(ev.min(axis=-1)), np.sqrt(ev.max(axis=-1))
        if sigma == "s":
            out["s"] = float(nu_p - hi.max())
        elif sigma == "u":
            out["u"] = float(lo.min() - mu_p)
        else:
            out["c_lower"] = float(lo.min() - g1_p)
            out["c_upper"] = float(g2_p - hi.max())
    return out


def adapted_metric(f, x, constants, sample_points=None, big_n=None, seed=0):
    """Adapted metric at x built from the first N iterates.

    N is the smallest integer in 1..64 with C nu^N < 1, (C^-1 mu^N)^2 > 1 and
    a consistent chain of derived constants. K is the largest eigenvalue of
    G over the sample points (default: x) and their images. The one-step
    inequalities are checked at the same points and reported as margins.

    Raises
    ------
    ValueError
        If no admissible N <= 64 exists.
    """
    x = project(np.asarray(x, dtype=float))
    pts = np.atleast_2d(x if sample_points is None else np.asarray(sample_points, dtype=float))
    both = np.concatenate([pts, f.evaluate(pts)])

    def bound(n):
        return float(np.max(np.linalg.eigvalsh(gram_matrix(f, both, n))))

    found = admissible_n(constants, bound, big_n)
    if found is None:
        raise ValueError("no admissible N <= 64 for these constants")
    n, k, derived = found
    op = AdaptedMetricOperator(x, n, gram_matrix(f, x, n), k, *derived, constants)
    op.margins = one_step_margins(f, n, derived, pts, seed=seed)
    return op
