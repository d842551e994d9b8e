"""Named maps shipped with the package."""

from __future__ import annotations

import numpy as np

from .maps import Endomorphism, LinearPart

COMPANION = [[0, 0, -3], [1, 0, -1], [0, 1, 4]]  # x^3 - 4x^2 + x + 3
THEOREM_D_ANGLE = 0.2
THEOREM_D_SEED = 0

_LINEAR = {
    "linear-t2-n2": [[2, 1], [1, 1]],
    "linear-t2-deg2": [[3, 1], [1, 1]],
    "t3-block-n2": [[2, 1, 0], [1, 1, 0], [0, 0, 1]],
    "t3-anosov-deg3": COMPANION,
}

PRESETS = tuple(_LINEAR) + ("theorem-d-t3",)


def block_matrix(n):
    """diag([[n, 1], [1, 1]], 1) on T^3."""
    return [[n, 1, 0], [1, 1, 0], [0, 0, 1]]


def diagonal_test_map(rates=(0.5, 1.0, 2.0)):
    """Formal diagonal map with exact rates (not a genuine torus map)."""
    return Endomorphism(LinearPart(np.diag(rates)))


def preset(name, verify=False):
    """Endomorphism for a preset name.

    ``theorem-d-t3`` is rebuilt deterministically from the degree-3 companion
    matrix with rotation angle 0.2 and seed 0.
    """
    if name in _LINEAR:
        return Endomorphism(LinearPart(_LINEAR[name]))
    if name == "theorem-d-t3":
        from .construction import build_theorem_d_map

        f, _ = build_theorem_d_map(COMPANION, THEOREM_D_ANGLE, seed=THEOREM_D_SEED, verify=verify)
        return f
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def theorem_d_design(verify=False):
    from .construction import build_theorem_d_map

    return build_theorem_d_map(COMPANION, THEOREM_D_ANGLE, seed=THEOREM_D_SEED, verify=verify)
