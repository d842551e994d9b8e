import numpy as np
import pytest
from hypothesis import given, strategies as st

from endolab.branch import BackwardOrbit, BranchCode, backward_orbit
from endolab.maps import Endomorphism, LinearPart
from endolab.presets import block_matrix, diagonal_test_map, preset
from endolab.splitting import (
    OrbitError, SpectralGapError, SplittingError, center_frame, cocycle_product, compute_splitting,
    generic_frame, pushed_cs_frames, split_orbits, stable_and_cs_frames, transversality_floor,
    unstable_and_cu_frames,
)
from endolab.subspaces import SubspaceFrame, principal_angles, subspace_distance
from endolab.torus import torus_distance

SQ5 = np.sqrt(5.0)


def test_cocycle_product_examples(rng):
    f = preset("t3-anosov-deg3")
    x = rng.random(3)
    m, log_scale = cocycle_product(f, f.orbit(x, 5)[:-1])
    assert np.allclose(np.exp(log_scale) * m, np.linalg.matrix_power(f.matrix, 5))
    m1, s1 = cocycle_product(f, f.orbit(x, 1)[:-1])
    assert np.allclose(np.exp(s1) * m1, f.derivative(x))
    d = diagonal_test_map((0.5, 2.0))
    m, s = cocycle_product(d, d.orbit(np.array([0.1, 0.3]), 10)[:-1])
    assert np.allclose(np.exp(s) * m, np.diag([2.0**-10, 2.0**10]))


def test_cocycle_product_backward_and_bad_orbits(theorem_d, rng):
    f, _ = theorem_d
    x = rng.random(3)
    orb = backward_orbit(f, x, BranchCode((0, 1, 2, 0), 3))
    m, s = cocycle_product(f, orb, "backward")
    fwd, sf = cocycle_product(f, orb.time_ordered()[:-1])
    assert np.allclose(m * np.exp(s), fwd * np.exp(sf))
    with pytest.raises(OrbitError):
        cocycle_product(f, rng.random((4, 3)))


def test_stable_line_of_cat_map():
    f = preset("linear-t2-n2")
    e_s, e_cs, res = stable_and_cs_frames(f, [0.2, 0.7])
    closed = np.array([[(1 - SQ5) / 2], [1.0]])
    closed /= np.linalg.norm(closed)
    assert subspace_distance(e_s, closed) < 1e-12
    assert subspace_distance(e_cs, e_s) < 1e-12
    assert res["s"] < 1e-10


def test_block_map_center_stable_plane():
    f = Endomorphism(LinearPart(block_matrix(2)))
    _, e_cs, _ = stable_and_cs_frames(f, [0.4, 0.1, 0.9])
    v_s = np.array([(1 - SQ5) / 2, 1.0, 0.0])
    expected = np.column_stack([v_s / np.linalg.norm(v_s), [0, 0, 1.0]])
    assert subspace_distance(e_cs, expected) < 1e-12


def test_diagonal_stable_axis():
    e_s, _, _ = stable_and_cs_frames(diagonal_test_map(), [0.3, 0.3, 0.3])
    assert subspace_distance(e_s, np.eye(3)[:, :1]) < 1e-12


def test_stable_frames_take_no_branch_argument():
    import inspect

    params = inspect.signature(stable_and_cs_frames).parameters
    assert not any("code" in p or "orbit" in p for p in params)


def test_gap_error_when_rates_nearly_coincide():
    f = diagonal_test_map((0.5, 0.5 * (1 + 1e-13), 2.0))
    with pytest.raises(SpectralGapError):
        stable_and_cs_frames(f, [0.1, 0.2, 0.3])


def test_unstable_frames_linear_codes_agree(rng):
    f = preset("t3-anosov-deg3")
    x = rng.random(3)
    b = f.linear.bundles()
    for _ in range(4):
        orb = backward_orbit(f, x, BranchCode(tuple(rng.integers(0, 3, 40)), 3))
        e_u, e_cu, res = unstable_and_cu_frames(f, orb)
        assert subspace_distance(e_u, b["u"]) < 1e-8
        assert subspace_distance(e_cu, b["cu"]) < 1e-8


def test_unstable_frame_power_iteration_ratio():
    f = diagonal_test_map((0.5, 2.0))
    orb = backward_orbit(f, [0.3, 0.6], BranchCode((0,) * 30, 1))
    e_u, _, _ = unstable_and_cu_frames(f, orb, initial=np.array([1.0, 1.0]) / np.sqrt(2))
    assert subspace_distance(e_u, np.array([[0.0], [1.0]])) <= 2.0**-30


def test_unstable_needs_depth():
    f = preset("linear-t2-deg2")
    with pytest.raises(ValueError):
        unstable_and_cu_frames(f, backward_orbit(f, [0.1, 0.1], (0,) * 5))


def test_designed_branches_give_three_cu_planes(theorem_d):
    f, rep = theorem_d
    frames = []
    for code in rep.branches:
        _, e_cu, _ = unstable_and_cu_frames(f, backward_orbit(f, rep.point, code))
        frames.append(e_cu.basis)
    from endolab.construction import triple_intersection

    angle, dim = triple_intersection(frames)
    assert dim == 0 and angle > 1e-3


def test_center_frame_examples():
    e = np.eye(3)
    c = center_frame(SubspaceFrame(e[:, :2]), SubspaceFrame(e[:, 1:]))
    assert subspace_distance(c, e[:, 1:2]) < 1e-12
    same = center_frame(SubspaceFrame(e[:, :2]), SubspaceFrame(e[:, :2]), c=2)
    assert subspace_distance(same, e[:, :2]) < 1e-12
    with pytest.raises(SplittingError):
        center_frame(SubspaceFrame(e[:, :2]), SubspaceFrame(e[:, :2]), c=1)


def test_center_of_linear_t3_example():
    f = preset("t3-anosov-deg3")
    lin = f.linear
    v = [lin.eigenvector(i) for i in range(3)]
    c = center_frame(SubspaceFrame.span(np.column_stack(v[1:])), SubspaceFrame.span(np.column_stack(v[:2])))
    assert subspace_distance(c, v[1][:, None]) < 1e-12


def test_splitting_estimate_invariants(theorem_d, rng):
    f, _ = theorem_d
    for x in rng.random((5, 3)):
        est = compute_splitting(f, x, BranchCode(tuple(rng.integers(0, 3, 40)), 3))
        assert est.transversality() > 0.1
        assert est.spanning_determinant() > 1e-8
        for fr in est.frames.values():
            assert np.allclose(fr.basis.T @ fr.basis, np.eye(fr.dim), atol=1e-12)
        assert est.max_residual() < 1e-6
        assert '"frames"' in est.to_json()


def test_equivariance_along_pushed_branch(theorem_d, rng):
    f, _ = theorem_d
    x = rng.random((8, 3))
    codes = rng.integers(0, 3, (8, 40))
    sp = split_orbits(f, x, codes, length=1)
    d = f.derivative(x)
    for sigma in ("s", "c", "u", "cs", "cu"):
        pushed = np.linalg.qr(d @ sp.frame(sigma, 0))[0]
        assert subspace_distance(pushed, sp.frame(sigma, 1)).max() < 1e-6, sigma
    # the frames at f(x) equal a fresh computation with the pushed code
    from endolab.multiplicity import push_codes

    for i in range(3):
        code = push_codes(f, x[i], [BranchCode(tuple(codes[i]), 3)])[0]
        fresh = compute_splitting(f, f.evaluate(x[i]), code)
        assert subspace_distance(fresh.frames["cu"], sp.frame("cu", 1)[i]) < 1e-6


def test_branch_independence_small(theorem_d, rng):
    f, _ = theorem_d
    x = rng.random(3)
    ref = stable_and_cs_frames(f, x)[1]
    cs = pushed_cs_frames(f, x, rng.integers(0, 3, (8, 40)))
    assert subspace_distance(cs, ref.basis).max() < 1e-6


def test_continuity_in_the_branch(theorem_d, rng):
    """Angles between E^u along branches agreeing to depth k decay geometrically."""
    f, rep = theorem_d
    ks = np.arange(0, 14)
    worst = []
    base = rng.integers(0, 3, (12, 40))
    for k in ks:
        other = base.copy()
        other[:, k:] = rng.integers(0, 3, (12, 40 - k))
        a = split_orbits(f, rep.point, base).frame("u", 0)
        b = split_orbits(f, rep.point, other).frame("u", 0)
        worst.append(subspace_distance(a, b).max())
    worst = np.maximum(np.array(worst), 1e-16)
    slope = np.polyfit(ks, np.log(worst), 1)[0]
    rho = np.exp(slope)
    amp = np.max(worst / rho**ks)
    assert rho < 1
    assert np.all(worst <= amp * rho**ks * (1 + 1e-12))


@pytest.mark.parametrize("name", ["linear-t2-n2", "linear-t2-deg2"])
def test_transversality_floor_t2(name):
    f = preset(name)
    coarse, _ = transversality_floor(f, 32)
    fine, _ = transversality_floor(f, 64)
    assert coarse > 0.5
    assert abs(fine - coarse) <= 0.1 * coarse


def test_transversality_floor_theorem_d(theorem_d):
    f, _ = theorem_d
    coarse, _ = transversality_floor(f, 24)
    fine, witness = transversality_floor(f, 32)
    assert fine > 0.1
    assert abs(fine - coarse) <= 0.1 * coarse


def test_generic_frame_is_orthogonal_and_seeded():
    q = generic_frame(3, 7)
    assert np.allclose(q.T @ q, np.eye(3))
    assert np.array_equal(q, generic_frame(3, 7))


def test_collapsed_start_frame_is_retried(monkeypatch):
    import endolab.splitting as sp_mod

    real = sp_mod.generic_frame

    def degenerate_for_seed_zero(n, seed=0):
        if seed == 0:
            return np.zeros((n, n))
        return real(n, seed)

    monkeypatch.setattr(sp_mod, "generic_frame", degenerate_for_seed_zero)
    est = compute_splitting(preset("t3-anosov-deg3"), [0.2, 0.4, 0.6])
    assert est.seed == 1 and est.max_residual() < 1e-6
