import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import silt_double_loop
from sawlab.walk import (LatticePath, apply_symmetry, endpoint_distance, format_path,
                         hull_radius, lattice_symmetries, parse_path, silt)


def paths(max_d=3, max_n=60):
    return st.integers(1, max_d).flatmap(
        lambda d: st.lists(st.integers(0, 2 * d - 1), max_size=max_n).map(
            lambda codes: LatticePath(d, np.array(codes, dtype=np.int64))))


def test_from_signed_roundtrip():
    p = LatticePath.from_signed(2, [+1, +2, -1])
    assert p.signed() == [1, 2, -1]
    assert p.sites.tolist() == [[0, 0], [1, 0], [1, 1], [0, 1]]
    assert format_path(p) == "2:3:+1 +2 -1"


def test_parse_accepts_unicode_minus():
    assert parse_path("2:3:+1 +2 −1") == LatticePath.from_signed(2, [1, 2, -1])


@pytest.mark.parametrize("line", ["2:3:+1 +2", "2:x:+1", "nonsense", "2:1:+3"])
def test_parse_rejects(line):
    with pytest.raises(ValueError):
        parse_path(line)


def test_from_steps_rejects_diagonal():
    with pytest.raises(ValueError):
        LatticePath.from_steps([[1, 1]])


def test_bad_code():
    with pytest.raises(ValueError):
        LatticePath(2, [4])


def test_backtrack_silt():
    phi = silt(LatticePath.from_signed(1, [1, -1, 1, -1]))
    # sites 0,1,0,1,0: origin visited 3 times, 1 visited twice
    assert phi.J == 3 + 1
    assert dict(phi.points) == {(0,): 3, (1,): 1}


def test_empty_walk():
    p = LatticePath(2, [])
    assert silt(p).J == 0
    assert endpoint_distance(p) == 0.0
    assert hull_radius(p) == 0.0


def test_symmetry_group():
    for d in (1, 2, 3):
        perms, signs = lattice_symmetries(d)
        assert len(perms) == 2**d * np.prod(range(1, d + 1))
        assert perms[0].tolist() == list(range(d)) and signs[0].tolist() == [1] * d


@settings(max_examples=80, deadline=None)
@given(paths(max_n=200))
def test_silt_matches_double_loop(p):
    assert silt(p).J == silt_double_loop(p.sites.tolist())
    assert sum(silt(p).points.values()) == silt(p).J


@settings(max_examples=80, deadline=None)
@given(paths())
def test_reversal_invariance(p):
    r = p.reversed()
    assert silt(r).J == silt(p).J
    assert np.isclose(endpoint_distance(r), endpoint_distance(p))
    assert r.reversed() == p


@settings(max_examples=80, deadline=None)
@given(paths(), st.data())
def test_symmetry_invariance(p, data):
    perms, signs = lattice_symmetries(p.d)
    g = data.draw(st.integers(0, len(perms) - 1))
    q = p.transformed(perms[g], signs[g])
    assert silt(q).J == silt(p).J
    assert np.isclose(endpoint_distance(q), endpoint_distance(p))
    assert np.array_equal(q.sites, apply_symmetry(p.sites, perms[g], signs[g]))


@settings(max_examples=80, deadline=None)
@given(paths())
def test_hull_dominates_distance(p):
    assert hull_radius(p) >= endpoint_distance(p)


@settings(max_examples=50, deadline=None)
@given(paths())
def test_format_parse_roundtrip(p):
    assert parse_path(format_path(p)) == p
