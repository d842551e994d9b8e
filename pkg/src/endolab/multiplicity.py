"""Counting distinct c/u/cu directions over backward branches."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .branch import BranchCode, codes_array, enumerate_codes, preimage_index
from .splitting import split_orbits
from .subspaces import subspace_distance

CLUSTER_DELTA = 1e-3


@dataclass(eq=False)
class MultiplicityReport:
    point: np.ndarray
    sigma: str
    depth: int
    count: int
    representatives: list
    min_inter_cluster_angle: float
    witnesses: list
    delta: float
    n_codes: int
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "sigma": self.sigma,
            "depth": self.depth,
            "cluster_count": self.count,
            "representatives": [r.T.tolist() for r in self.representatives],
            "min_inter_cluster_angle": self.min_inter_cluster_angle,
            "witnesses": [[str(c) for c in w] for w in self.witnesses],
            "delta": self.delta,
            "codes_evaluated": self.n_codes,
            "notes": self.notes,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def cluster_frames(frames, delta=CLUSTER_DELTA):
    """Single-linkage clusters of frames under the max principal angle.

    Returns ``(labels, distances)``; labels are numbered by first appearance,
    so the result does not depend on anything but the input order of codes.
    """
    frames = np.asarray(frames)
    dist = subspace_distance(frames[:, None], frames[None, :])
    _, raw = connected_components(dist < delta, directed=False)
    relabel = {}
    labels = np.array([relabel.setdefault(r, len(relabel)) for r in raw])
    return labels, dist


def count_directions(f, x, sigma="cu", depth=40, code_budget=64, seed=0, extra_codes=(),
                     delta=CLUSTER_DELTA):
    """Cluster the sigma-frames at x over enumerated (and extra) branch codes.

    Parameters
    ----------
    sigma : {"c", "u", "cu"}
    code_budget : int
        Number of enumerated codes; 0 uses only ``extra_codes``.
    extra_codes : sequence of BranchCode or int sequences
        Witness branches evaluated in addition to the enumeration.
    """
    if sigma not in ("c", "u", "cu"):
        raise ValueError("sigma must be one of c, u, cu")
    x = np.asarray(x, dtype=float)
    codes = [c if isinstance(c, BranchCode) else BranchCode(tuple(c), f.degree) for c in extra_codes]
    if code_budget:
        codes += enumerate_codes(f.degree, depth, code_budget, seed)
    notes = []
    if not codes:
        raise ValueError("no branch codes to evaluate")
    lengths = {len(c) for c in codes}
    width = max(lengths)
    # shorter codes are padded with zeros at the far end of the branch
    arr = np.zeros((len(codes), width), dtype=int)
    for i, c in enumerate(codes):
        arr[i, : len(c)] = c.word
    frames = split_orbits(f, x, arr, seed=seed).frame(sigma, 0)
    labels, dist = cluster_frames(frames, delta)
    count = int(labels.max()) + 1
    reps = [frames[np.argmax(labels == k)] for k in range(count)]
    witnesses = [[codes[i] for i in np.flatnonzero(labels == k)] for k in range(count)]
    if count > 1:
        between = labels[:, None] != labels[None, :]
        min_angle = float(dist[between].min())
    else:
        min_angle = None
        notes.append("single cluster")
    return MultiplicityReport(x, sigma, width, count, reps, min_angle, witnesses, delta, len(codes), notes)


def push_codes(f, x, codes):
    """Codes at f(x) continuing each branch through x."""
    idx = int(preimage_index(f, f.evaluate(x), x))
    return [c.prefix(idx) for c in codes]


def growth_probe(f, x, steps=3, sigma="cu", witnesses=(), code_budget=0, depth=40, seed=0,
                 delta=CLUSTER_DELTA):
    """Direction counts at x, f(x), ..., f^steps(x) along pushed branches.

    Every code evaluated at one iterate is pushed to the next one (by
    prefixing the letter that selects the previous point), so distinct
    directions are followed rather than resampled. ``code_budget`` adds fresh
    enumerated codes at each iterate; those can form clusters only just
    above ``delta``, which forward iteration then merges, so the default
    follows the witnesses alone.
    """
    reports = []
    codes = [c if isinstance(c, BranchCode) else BranchCode(tuple(c), f.degree) for c in witnesses]
    y = np.asarray(x, dtype=float)
    for k in range(steps + 1):
        rep = count_directions(f, y, sigma, depth, code_budget, seed + k, codes, delta)
        reports.append(rep)
        codes = push_codes(f, y, [c for group in rep.witnesses for c in group])
        y = f.evaluate(y)
    return reports
