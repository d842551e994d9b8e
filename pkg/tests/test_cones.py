import numpy as np
import pytest

from endolab.cones import (
    ConeError, ConeFamily, ConeField, ReferenceSplitting, boundary_coordinates, in_cone,
    verify_cone_conditions,
)
from endolab.construction import build_theorem_d_map
from endolab.presets import COMPANION, diagonal_test_map, preset

HYPERBOLIC = diagonal_test_map((0.5, 2.0))


def test_cone_field_validation():
    for beta in (0.0, 1.0, 1.5):
        with pytest.raises(ConeError):
            ConeField(beta, "u")
    with pytest.raises(ConeError):
        ConeField(0.5, "x")
    assert set(ConeFamily(0.3)) == {"s", "u", "cs", "cu"}


def test_in_cone_examples():
    u = ConeField(0.5, "u")
    x = [0.2, 0.3]
    assert in_cone(u, x, [0.0, 3.0], HYPERBOLIC)
    assert not in_cone(u, x, [1.0, 0.0], HYPERBOLIC)
    # the boundary ||v_F|| = beta ||v_E|| belongs to the cone
    assert in_cone(u, x, [0.5, 1.0], HYPERBOLIC)
    assert not in_cone(u, x, [0.5 + 1e-9, 1.0], HYPERBOLIC)
    with pytest.raises(ConeError):
        in_cone(u, x, [0.0, 0.0], HYPERBOLIC)


def test_boundary_vectors_sit_on_the_boundary():
    y = boundary_coordinates((1, 1, 1), "cu", 0.3, seed=4)
    assert y.shape == (64 + 2, 3)
    ratio = np.abs(y[:, 0]) / np.linalg.norm(y[:, 1:], axis=1)
    assert np.allclose(ratio, 0.3)
    assert np.array_equal(y, boundary_coordinates((1, 1, 1), "cu", 0.3, seed=4))


def test_diagonal_map_margins_are_analytic():
    beta = 0.5
    cert = verify_cone_conditions(HYPERBOLIC, ConeFamily(beta), grid_resolution=8)
    assert cert.passed
    # the image of a boundary vector has ratio beta * (1/2) / 2
    for fam in ("s", "u", "cs", "cu"):
        assert abs(cert.margins[f"invariance_{fam}"] - (beta - beta / 4)) < 1e-9
    # weakest expansion on the u-cone: |(beta/2, 2)| / |(beta, 1)|
    mu = np.hypot(beta / 2, 2) / np.hypot(beta, 1)
    assert abs(cert.margins["u"] - (mu - 1)) < 1e-9
    assert abs(cert.margins["s"] - (mu - 1)) < 1e-9
    assert cert.to_dict()["pass"] is True


def test_linear_t3_margins_are_analytic():
    f = preset("t3-anosov-deg3")
    lam = np.sort(np.abs(f.linear.eigenvalues))
    beta = 0.4
    cert = verify_cone_conditions(f, ConeFamily(beta), grid_resolution=8)
    # in eigen-coordinates the cone images are explicit
    assert abs(cert.margins["invariance_u"] - (beta - beta * lam[1] / lam[2])) < 1e-9
    assert abs(cert.margins["invariance_s"] - (beta - beta * lam[0] / lam[1])) < 1e-9
    assert cert.passed


def test_grid_resolution_minimum():
    with pytest.raises(ConeError):
        verify_cone_conditions(HYPERBOLIC, grid_resolution=4)


def test_singular_derivative_is_fatal():
    from endolab.maps import Endomorphism, LinearPart, RotationBump

    # a huge rotation angle does not make Dphi singular, so fake one with a zero row
    class Flat(Endomorphism):
        def derivative(self, x):
            d = super().derivative(x)
            d[..., 0, :] = 0.0
            return d

    f = Flat(LinearPart([[3, 1], [1, 1]]))
    with pytest.raises(ConeError, match="singular"):
        verify_cone_conditions(f, grid_resolution=8)


@pytest.mark.parametrize("name", ["linear-t2-n2", "linear-t2-deg2", "t3-block-n2", "t3-anosov-deg3"])
def test_linear_margins_do_not_depend_on_the_grid(name):
    f = preset(name)
    coarse = verify_cone_conditions(f, grid_resolution=8).margins
    fine = verify_cone_conditions(f, grid_resolution=16).margins
    for key in coarse:
        assert abs(fine[key] - coarse[key]) <= 0.15 * abs(coarse[key]) + 1e-12


def test_theorem_d_margins_stable_under_grid_doubling(theorem_d):
    f, _ = theorem_d
    coarse = verify_cone_conditions(f, grid_resolution=12)
    fine = verify_cone_conditions(f, grid_resolution=24)
    assert coarse.passed and fine.passed
    assert abs(min(fine.margins.values()) - min(coarse.margins.values())) < 0.15 * min(coarse.margins.values())


def test_pass_is_monotone_in_the_angle():
    verdicts = []
    for theta in (0.0, 0.1, 0.2, 0.3, 0.6):
        f, _ = build_theorem_d_map(COMPANION, theta, verify=False)
        verdicts.append(verify_cone_conditions(f, grid_resolution=12).passed)
    assert verdicts[:3] == [True, True, True]
    first_fail = verdicts.index(False) if False in verdicts else len(verdicts)
    assert all(not v for v in verdicts[first_fail:])


def test_reference_sources_agree_on_linear_maps(rng):
    f = preset("t3-anosov-deg3")
    x = rng.random((5, 3))
    lin = ReferenceSplitting(f, "linear").basis(x)
    for source in ("computed", "pointwise"):
        other = ReferenceSplitting(f, source, resolution=4).basis(x)
        # columns agree up to sign
        assert np.allclose(np.abs(np.sum(lin * other, axis=-2)), 1.0, atol=1e-8)
