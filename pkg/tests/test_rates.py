import math

import numpy as np
import pytest

from endolab.presets import diagonal_test_map, preset
from endolab.rates import (
    AngleUnderflowError, ConstantsViolation, HyperbolicityConstants, adapted_metric, admissible_n,
    angle_decay_series, derived_constants, estimate_constants, gram_matrix, rate_certificate,
)
from endolab.splitting import stable_and_cs_frames

SQ5 = math.sqrt(5.0)
DIAG = (0.5, 1.0, 1.0, 2.0, 1.0)


def test_constants_validation():
    with pytest.raises(ConstantsViolation):
        HyperbolicityConstants(0.5, 0.4, 1.0, 2.0, 1.0, (1, 1, 1))
    with pytest.raises(ConstantsViolation):
        HyperbolicityConstants(0.5, 1.0, 1.0, 2.0, 0.9, (1, 1, 1))
    c = HyperbolicityConstants(*DIAG, (1, 1, 1))
    assert HyperbolicityConstants.from_dict(c.to_dict()) == c


def test_constants_of_diagonal_map(rng):
    got = estimate_constants(diagonal_test_map(), rng.random((8, 3)))
    assert np.allclose(got.as_tuple(), DIAG, atol=1e-9)


def test_constants_of_block_map(rng):
    got = estimate_constants(preset("t3-block-n2"), rng.random((8, 3)))
    expected = ((3 - SQ5) / 2, 1.0, 1.0, (3 + SQ5) / 2, 1.0)
    assert np.allclose(got.as_tuple(), expected, atol=1e-8)


def test_theorem_d_constants_near_linear(theorem_d, rng):
    f, _ = theorem_d
    got = estimate_constants(f, rng.random((32, 3)))
    lin = f.linear.moduli
    for value, ref in zip((got.nu, got.gamma1, got.mu), lin):
        assert abs(value - ref) <= 0.1 * ref
    assert got.C >= 1
    s_ratio, u_ratio = rate_certificate(f, got, rng.random((16, 3)))
    assert s_ratio <= 1.05 and u_ratio <= 1.05


def test_angle_decay_on_diagonal_map():
    f = diagonal_test_map()
    e1 = np.array([0.0, 1.0, 0.0])
    e2 = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    series = angle_decay_series(f, [0.1, 0.2, 0.3], e1, e2)
    assert abs(series.slope + math.log(2)) < 1e-6
    assert series.angle[0] == pytest.approx(math.pi / 4)
    assert series.to_csv().startswith("n,angle,log_angle\n")


def test_identical_subspaces_are_flagged():
    e = np.array([1.0, 0.0, 0.0])
    series = angle_decay_series(diagonal_test_map(), [0.1, 0.2, 0.3], e, e)
    assert series.slope is None and "identical" in series.flagged


def test_angle_underflow_raises():
    f = diagonal_test_map((1e-4, 1.0, 1e4))
    e1 = np.array([0.0, 1.0, 0.0])
    e2 = np.array([1.0, 1.0, 0.0])
    with pytest.raises(AngleUnderflowError):
        angle_decay_series(f, [0.1, 0.2, 0.3], e1, e2)


def test_angle_decay_bounded_by_rate_ratio(theorem_d, rng):
    f, _ = theorem_d
    consts = estimate_constants(f, rng.random((32, 3)))
    x = rng.random(3)
    _, e_cs, _ = stable_and_cs_frames(f, x)
    # two directions inside E^cs, neither of them stable
    series = angle_decay_series(f, x, e_cs.basis @ np.array([0.6, 0.8]), e_cs.basis @ np.array([-0.6, 0.8]))
    assert series.slope < 0
    assert abs(series.slope - math.log(consts.nu / consts.gamma1)) <= 0.25 * abs(
        math.log(consts.nu / consts.gamma1))


def test_unit_constant_gives_identity_metric(rng):
    f = diagonal_test_map()
    op = adapted_metric(f, [0.1, 0.2, 0.3], HyperbolicityConstants(*DIAG, (1, 1, 1)))
    assert op.N == 1 and np.allclose(op.G, np.eye(3))
    assert all(m >= -1e-12 for m in op.margins.values())


def test_forced_n2_on_diagonal_map():
    f = diagonal_test_map()
    op = adapted_metric(f, [0.1, 0.2, 0.3], HyperbolicityConstants(*DIAG, (1, 1, 1)), big_n=2)
    assert np.allclose(op.G, np.eye(3) + np.diag([0.25, 1.0, 4.0]))
    assert op.K == pytest.approx(5.0)
    v = np.array([0.0, 0.0, 1.0])
    assert op.norm(v) == pytest.approx(math.sqrt(5.0))


def _brute_force_n(consts, k_of_n):
    for n in range(1, 65):
        c = consts.C
        if c * consts.nu**n >= 1 or consts.mu**n / c <= 1:
            continue
        k = k_of_n(n)
        nu = math.sqrt(max(1 + ((c * consts.nu**n) ** 2 - 1) / k, 0))
        mu = math.sqrt(1 + ((consts.mu**n / c) ** 2 - 1) / k)
        a1 = (consts.gamma1**n / c) ** 2
        a2 = (c * consts.gamma2**n) ** 2
        g1 = math.sqrt(1 + (a1 - 1) / k) if a1 >= 1 else math.sqrt(a1)
        g2 = math.sqrt(a2) if a2 >= 1 else math.sqrt(1 + (a2 - 1) / k)
        if 0 < nu < g1 <= g2 < mu and nu < 1 < mu:
            return n
    return None


@pytest.mark.parametrize("big_c", [1.0, 1.1, 1.5, 2.0, 4.0])
@pytest.mark.parametrize("rates", [(0.5, 0.9, 1.1, 2.0), (0.7, 1.2, 1.25, 3.4), (0.95, 0.98, 1.0, 1.05)])
def test_admissible_n_matches_brute_force(rates, big_c):
    consts = HyperbolicityConstants(*rates, big_c, (1, 1, 1))

    def k_of_n(n):
        return sum(rates[3] ** (2 * j) for j in range(n))

    found = admissible_n(consts, k_of_n)
    expected = _brute_force_n(consts, k_of_n)
    assert (found[0] if found else None) == expected
    if found:
        assert found[2] == pytest.approx(derived_constants(consts, found[0], k_of_n(found[0])))


def test_no_admissible_n_raises():
    f = diagonal_test_map()
    consts = HyperbolicityConstants(0.99, 0.995, 1.0, 1.01, 1e6, (1, 1, 1))
    with pytest.raises(ValueError, match="no admissible N"):
        adapted_metric(f, [0.1, 0.2, 0.3], consts)


def test_gram_matrix_is_positive_definite(theorem_d, rng):
    f, _ = theorem_d
    g = gram_matrix(f, rng.random((10, 3)), 3)
    assert np.all(np.linalg.eigvalsh(g) >= 1 - 1e-12)
    assert np.allclose(g, np.swapaxes(g, -1, -2))


def test_theorem_d_adapted_metric(theorem_d, rng):
    f, _ = theorem_d
    consts = estimate_constants(f, rng.random((64, 3)))
    op = adapted_metric(f, rng.random(3), consts, sample_points=rng.random((64, 3)))
    assert op.N <= 16
    assert min(op.margins.values()) > 0
