import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from endolab.branch import (
    BackwardOrbit, BranchCode, PreconditionError, avoiding_backward_orbit, backward_orbit,
    backward_orbits, check_orbit, enumerate_codes, preimages,
)
from endolab.maps import Endomorphism, LinearPart, separation_constant
from endolab.presets import PRESETS, preset
from endolab.torus import torus_distance


def _brute_force_offsets(a):
    """A^{-1} k mod 1 over a box of integer vectors (independent of the adjugate route)."""
    a = np.asarray(a, dtype=float)
    inv = np.linalg.inv(a)
    found = []
    for k in itertools.product(range(-3, 4), repeat=a.shape[0]):
        p = np.mod(inv @ np.array(k, dtype=float), 1.0)
        p[np.isclose(p, 1.0)] = 0.0
        if all(torus_distance(p, q) > 1e-9 for q in found):
            found.append(p)
    return np.array(sorted(map(tuple, np.round(found, 12))))


def test_preimages_of_origin_for_degree_two():
    f = preset("linear-t2-deg2")
    pre = preimages(f, [0.0, 0.0])
    assert np.allclose(pre, [[0.0, 0.0], [0.5, 0.5]])
    assert np.allclose(pre, _brute_force_offsets([[3, 1], [1, 1]]))


def test_offsets_match_brute_force_on_companion():
    f = preset("t3-anosov-deg3")
    assert np.allclose(f.linear.offsets(), _brute_force_offsets(f.matrix), atol=1e-12)


def test_degree_one_map_has_single_preimage():
    f = preset("linear-t2-n2")
    y = np.array([0.3, 0.8])
    pre = preimages(f, y)
    assert pre.shape == (1, 2)
    assert np.allclose(pre[0], np.mod(np.linalg.solve(f.matrix, y), 1))


def test_designed_point_preimages_near_linear_ones(theorem_d):
    f, rep = theorem_d
    pre = preimages(f, rep.point)
    lin = preimages(f.linear_only(), rep.point)
    r = rep.bumps[0][1]
    assert pre.shape == (3, 3)
    assert torus_distance(pre, lin).max() <= r


@pytest.mark.parametrize("name", PRESETS)
def test_preimage_count_precision_and_separation(name, rng):
    f = preset(name)
    ys = rng.random((40, f.n))
    pre = preimages(f, ys)
    assert pre.shape == (40, f.degree, f.n)
    assert torus_distance(f.evaluate(pre), ys[:, None, :]).max() < 1e-12
    if f.degree > 1:
        tau = separation_constant(f)
        i, j = np.triu_indices(f.degree, 1)
        assert torus_distance(pre[:, i], pre[:, j]).min() >= tau - 1e-9


def test_backward_orbit_examples():
    f = preset("linear-t2-deg2")
    orb = backward_orbit(f, [0.0, 0.0], BranchCode((1,), 2))
    assert np.allclose(orb.points, [[0, 0], [0.5, 0.5]])
    fixed = backward_orbit(f, [0.0, 0.0], BranchCode((0,) * 5, 2))
    assert np.all(fixed.points == 0)


@given(st.lists(st.integers(0, 2), min_size=1, max_size=60), st.floats(0, 0.999), st.floats(0, 0.999), st.floats(0, 0.999))
def test_backward_orbits_are_stepwise_consistent(word, a, b, c):
    f = preset("t3-anosov-deg3")
    orb = backward_orbit(f, [a, b, c], BranchCode(tuple(word), 3))
    assert orb.depth == len(word)
    assert check_orbit(f, orb.points, 1e-12)


def test_backward_orbits_of_theorem_d_map_are_consistent(theorem_d, rng):
    f, _ = theorem_d
    codes = rng.integers(0, 3, (16, 60))
    pts = backward_orbits(f, rng.random((16, 3)), codes)
    err = torus_distance(f.evaluate(pts[:, 1:]), pts[:, :-1])
    assert err.max() < 1e-12


@given(st.integers(0, 19), st.integers(0, 10**6))
def test_codes_differing_at_depth_k_first_differ_there(k, seed):
    f = preset("linear-t2-deg2")
    rng = np.random.default_rng(seed)
    word = rng.integers(0, 2, 20)
    other = word.copy()
    other[k] = 1 - other[k]
    pts = backward_orbits(f, rng.random(2), np.stack([word, other]))
    d = torus_distance(pts[0], pts[1])
    assert np.all(d[: k + 1] == 0)
    assert d[k + 1] > 0.1


def test_code_letters_are_checked():
    f = preset("linear-t2-deg2")
    with pytest.raises(ValueError):
        backward_orbit(f, [0.1, 0.2], (0, 2))


def test_branch_code_string_round_trip():
    code = BranchCode((0, 2, 1, 1), 3)
    assert str(code) == "0211"
    assert BranchCode.from_string("0211", 3) == code
    assert code.prefix(2).word == (2, 0, 2, 1, 1)


def test_backward_orbit_csv():
    f = preset("linear-t2-deg2")
    text = backward_orbit(f, [0.0, 0.0], BranchCode((1, 0), 2)).to_csv().splitlines()
    assert text[0] == "depth,x0,x1"
    assert len(text) == 4 and text[2].startswith("1,0.5,0.5")


def test_enumerate_codes_examples():
    assert len(enumerate_codes(2, 3, 100)) == 8
    four = enumerate_codes(3, 2, 4, seed=1)
    assert len({c.word for c in four}) == 4 and all(max(c.word) < 3 for c in four)
    assert enumerate_codes(1, 5, 10) == [BranchCode((0,) * 5, 1)]
    assert enumerate_codes(3, 10, 7, seed=3) == enumerate_codes(3, 10, 7, seed=3)


def test_avoiding_orbit_without_balls_is_all_zeros(rng):
    f = preset("t3-anosov-deg3")
    x = rng.random(3)
    a = avoiding_backward_orbit(f, x, [], m=10)
    b = backward_orbit(f, x, BranchCode((0,) * 10, 3))
    assert a.code == b.code
    assert torus_distance(a.points, b.points).max() < 1e-13


def test_avoiding_orbit_stays_outside_designed_balls(theorem_d):
    f, rep = theorem_d
    orb = avoiding_backward_orbit(f, rep.point, rep.bumps, m=40)
    for c, r in rep.bumps:
        assert torus_distance(orb.points[1:], c).min() >= r
    assert check_orbit(f, orb.points, 1e-12)


def test_avoidance_preconditions():
    f = preset("linear-t2-deg2")
    pre = preimages(f, [0.1, 0.2])
    with pytest.raises(PreconditionError):
        avoiding_backward_orbit(f, [0.1, 0.2], [(pre[0], 0.2), (pre[1], 0.2)], m=3)
    with pytest.raises(PreconditionError):
        avoiding_backward_orbit(f, [0.1, 0.2], [(pre[0], 0.5)], m=3)
