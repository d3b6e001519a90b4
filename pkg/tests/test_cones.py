import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import condition_d_two_sums, cube_surface_points, weighted_quotient
from sawlab.cones import (ConeParams, TestSet, assign_cones, build_test_set, classify_lines,
                          condition_d_check, cone_process_distance, cube_grid_count,
                          estimate_ax, lr_upper_bound, palm_line_probability, shape_csv,
                          shape_of)
from sawlab.errors import EmptyClass, EnsembleMismatch, ParamError
from sawlab.walk import LatticePath, SiltPointProcess, silt


def decomp_from_silt(silt_values, d=2):
    """Decomposition with the given cone SILTs: one point far out along each ray."""
    V = build_test_set(d, 1, size=len(silt_values))
    sites = [10.0 * u for u, s in zip(V.directions, silt_values) if s]
    masses = [s for s in silt_values if s]
    return assign_cones((np.array(sites).reshape(-1, d), np.array(masses, dtype=np.int64)), V)


# --- test set -------------------------------------------------------------

def test_square_lattice_directions():
    V = build_test_set(2, 100, size=8)
    ang = np.mod(np.arctan2(V.directions[:, 1], V.directions[:, 0]), 2 * np.pi)
    assert np.allclose(ang, np.arange(8) * np.pi / 4)


@pytest.mark.parametrize("n", [1, 7, 1000])
def test_line_has_two_rays(n):
    assert build_test_set(1, n).directions.tolist() == [[1.0], [-1.0]]


def test_cube_grid_dedup_count():
    V = build_test_set(3, 1, m=4)
    assert len(V) == cube_surface_points(3, 4) == cube_grid_count(3, 4) == 56
    assert cube_grid_count(4, 3) == cube_surface_points(4, 3)


@pytest.mark.parametrize("d,n", [(3, 64), (3, 256), (3, 5000), (2, 300)])
def test_test_set_size_and_norms(d, n):
    V = build_test_set(d, n)
    target = n ** (1 - 1 / d)
    assert target / 2 <= len(V) <= 2 * target
    assert np.allclose(np.linalg.norm(V.directions, axis=1), 1.0)
    assert len({tuple(np.round(u, 12)) for u in V.directions}) == len(V)


# --- assignment -----------------------------------------------------------

def test_point_on_ray():
    V = build_test_set(2, 1, size=8)
    dec = assign_cones((np.array([[3.0, 3.0]]), np.array([2])), V)
    assert dec.silt.tolist() == [0, 2, 0, 0, 0, 0, 0, 0]


def test_equidistant_pair_split():
    V = build_test_set(2, 1, size=4)
    # (1,1) and (2,2) are equidistant from the rays +e1 and +e2
    dec = assign_cones((np.array([[1.0, 1.0], [2.0, 2.0]]), np.array([1, 1])), V)
    assert sorted(dec.silt.tolist()) == [0, 0, 1, 1]
    assert dec.silt[0] == 1 and dec.silt[1] == 1


def test_origin_tie_break_is_deterministic():
    V = build_test_set(2, 1, size=6)
    dec = assign_cones((np.zeros((1, 2)), np.array([5])), V)
    assert dec.silt.sum() == 5 and np.count_nonzero(dec.silt) == 1


def test_empty_process():
    V = build_test_set(3, 64)
    dec = assign_cones(SiltPointProcess({}, 0), V)
    assert not dec.silt.any()
    cl = classify_lines(dec, 0.5, 4, 0.05, 64)
    assert cl.empty.all()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 3), st.lists(st.integers(0, 5), min_size=5, max_size=80), st.integers(0, 9))
def test_partition_sums_to_silt(d, codes, seed):
    codes = [c % (2 * d) for c in codes]
    phi = silt(LatticePath(d, codes))
    for V in (build_test_set(d, len(codes)), build_test_set(d, 1, size=3 + seed)
              if d == 2 else build_test_set(d, 1, m=2 + seed % 3)):
        dec = assign_cones(phi, V)
        assert dec.silt.sum() == phi.J


def test_rotation_equivariance_plane():
    rng = np.random.default_rng(4)
    theta = 0.3141
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    V = build_test_set(2, 1, size=9)
    for _ in range(20):
        phi = silt(LatticePath.random(2, 120, rng))
        # the origin ties with every ray; its tie-break is not rotation invariant
        keep = np.any(phi.sites() != 0, axis=1)
        sites, masses = phi.sites()[keep].astype(float), phi.masses()[keep]
        a = assign_cones((sites, masses), V)
        b = assign_cones((sites @ R.T, masses), V.rotated(R))
        assert sorted(a.silt) == sorted(b.silt)
        assert np.array_equal(a.silt, b.silt)
        ca = classify_lines(a, 0.5, 4.0, 0.05, 120)
        cb = classify_lines(b, 0.5, 4.0, 0.05, 120)
        assert np.array_equal(ca.half, cb.half)
        assert shape_of(ca, a.J, 0.05, 0.05).flagged == shape_of(cb, b.J, 0.05, 0.05).flagged


# --- classes --------------------------------------------------------------

def test_closed_left_end_of_half():
    n = 16
    dec = decomp_from_silt([1, 0, 0, 0])  # 2|C| = 2 = 0.5 * sqrt(16)
    cl = classify_lines(dec, 0.5, 4.0, 0.05, n)
    assert cl.half[0] and cl.half_pm[0] and not cl.minus[0]


def test_closed_right_end_of_plus():
    n = 16
    dec = decomp_from_silt([8, 0, 0])  # 2|C| = 16 = 2 * b2 * n with b2 = 0.5
    cl = classify_lines(dec, 0.5, 1.0, 0.05, n, b2=0.5)
    assert cl.plus[0] and not cl.over[0]
    dec = decomp_from_silt([9, 0, 0])
    assert classify_lines(dec, 0.5, 1.0, 0.05, n, b2=0.5).over[0]


def test_param_error():
    dec = decomp_from_silt([1, 2])
    with pytest.raises(ParamError):
        classify_lines(dec, 2.0, 1.0, 0.05, 10)
    with pytest.raises(ParamError):
        ConeParams(a1=1.0, a2=1.0, b1=0.0, b2=1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=1, max_size=30), st.integers(4, 400),
       st.floats(0.1, 2.0), st.floats(1.1, 10.0), st.floats(0.01, 0.3))
def test_class_consistency(silts, n, a1, ratio, delta):
    dec = decomp_from_silt(silts)
    b2 = sum(silts) / n + 0.5
    cl = classify_lines(dec, a1, a1 * ratio, delta, n, b2=b2)
    assert np.all(cl.half <= cl.half_pm)
    parts = np.vstack([cl.empty, cl.minus, cl.half_pm, cl.plus, cl.over]).astype(int)
    assert np.all(parts.sum(axis=0) == 1)
    assert not cl.over.any()  # J <= b2 n forces every cone below 2 b2 n
    for r in np.arange(0, 1.01, 0.1):
        assert cl.L_r(r).sum() <= lr_upper_bound(a1, b2, n, r) + 1e-9


# --- shape ----------------------------------------------------------------

def test_shape_circular():
    n = 100
    dec = decomp_from_silt([5, 10, 20, 0, 0])  # 2|C| in [0.5*10, 4*10]
    cl = classify_lines(dec, 0.5, 4.0, 0.05, n)
    assert cl.half[:3].all()
    rep = shape_of(cl, dec.J, 0.05, 0.05)
    assert 0.5 in rep.shapes


def test_shape_linear():
    n = 100
    J = 60
    dec = decomp_from_silt([J, 0, 0, 0])  # 2|C| = 2J = 1.2 n
    cl = classify_lines(dec, 0.5, 4.0, 0.05, n)
    assert 1.0 in shape_of(cl, J, 0.05, 0.05).shapes


def test_shape_degenerate():
    dec = decomp_from_silt([0, 0, 0])
    rep = shape_of(classify_lines(dec, 0.5, 4, 0.05, 10), 0, 0.05, 0.05)
    assert rep.degenerate and rep.shapes == ()


def test_shape_csv_columns():
    dec = decomp_from_silt([3, 1])
    rep = shape_of(classify_lines(dec, 0.5, 4, 0.1, 10), 4, 0.05, 0.1)
    text = shape_csv(rep.rows(1.0))
    assert text.splitlines()[0] == "n,beta,r,class_size,class_silt,flagged"
    assert len(text.splitlines()) == 1 + len(rep.r_grid)


# --- Palm probabilities ---------------------------------------------------

def synthetic_ensemble(k, seed=0, size=7):
    rng = np.random.default_rng(seed)
    V = build_test_set(2, 1, size=size)
    out = []
    for _ in range(k):
        s = rng.integers(0, 12, size=size) * (rng.random(size) < 0.6)
        sites = [10.0 * u for u, v in zip(V.directions, s) if v]
        dec = assign_cones((np.array(sites).reshape(-1, 2), s[s > 0]), V)
        out.append(classify_lines(dec, 0.5, 4.0, 0.05, 25, b2=10.0))
    return out


def test_palm_trivial_classes():
    ens = synthetic_ensemble(10)
    assert palm_line_probability(ens, "all") == 1.0
    empty = [classify_lines(decomp_from_silt([0] * 5), 0.5, 4, 0.05, 9)] * 3
    assert palm_line_probability(empty, "empty") == 1.0


def test_palm_two_pass_oracle():
    ens = synthetic_ensemble(100, seed=3)
    for name in ("half", "minus", "empty", "plus"):
        total = 0
        for cl in ens:
            for L in range(len(cl.V)):
                total += bool(getattr(cl, name)[L])
        ref = total / len(ens) / len(ens[0].V)
        assert abs(palm_line_probability(ens, name) - ref) <= 1e-12


def test_palm_mismatch():
    ens = synthetic_ensemble(3) + synthetic_ensemble(1, size=8)
    with pytest.raises(EnsembleMismatch):
        palm_line_probability(ens, "half")


# --- a_x ------------------------------------------------------------------

def test_ax_constant_exponent():
    n, r, beta, a = 64, 0.5, 1.0, 2.0
    s = int(a * n**r / 2)  # 2|C| = a n^r = 16
    cl = classify_lines(decomp_from_silt([s, s, 0]), 0.5, 4.0, 0.05, n)
    tab = estimate_ax([(1.0, cl), (1.0, cl), (2.0, cl)], "half", r, beta, n)
    assert tab[1.0] == pytest.approx(a, rel=1e-13) and tab[2.0] == pytest.approx(a, rel=1e-13)


def test_ax_two_term_closed_form():
    n, r, beta = 64, 0.5, 2.0
    u, v = 2.0 * 3, 2.0 * 5  # SILT u/beta = 3 and v/beta = 5
    cl = classify_lines(decomp_from_silt([3, 5]), 0.5, 4.0, 0.05, n)
    tab = estimate_ax([(0.0, cl)], "all", r, beta, n)
    ref = -(2 / (beta * n**r)) * math.log((math.exp(-u) + math.exp(-v)) / 2)
    assert tab[0.0] == pytest.approx(ref, rel=1e-14)


def test_ax_empty_bin():
    cl = classify_lines(decomp_from_silt([0, 0]), 0.5, 4.0, 0.05, 16)
    with pytest.raises(EmptyClass):
        estimate_ax([(1.0, cl)], "half", 0.5, 1.0, 16)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(0, 200), min_size=1, max_size=12), min_size=1, max_size=8),
       st.sampled_from([0.25, 0.5, 0.75]), st.floats(0.2, 3.0))
def test_ax_bracketing_on_lr(samples, r, beta):
    n = 256
    a1, a2 = 0.5 / beta, 4.0 / beta
    ens = [classify_lines(decomp_from_silt(s), a1, a2, 0.05, n) for s in samples]
    pairs = [(0.0, cl) for cl in ens if cl.L_r(r).any()]
    if not pairs:
        return
    tab = estimate_ax(pairs, ("r", r), r, beta, n)
    assert a1 - 1e-12 <= tab[0.0] <= a2 + 1e-12


def test_ax_saturation_flag():
    cl = classify_lines(decomp_from_silt([900]), 0.5, 4000.0, 0.05, 16)
    tab = estimate_ax([(1.0, cl)], "all", 0.5, 1.0, 16)
    assert tab.saturated == (1.0,)


# --- Condition D ----------------------------------------------------------

def chi_law(n, seed=0):
    rng = np.random.default_rng(seed)
    xs = [math.sqrt(k) for k in range(0, n * n + 1, 3)]
    p = rng.random(len(xs))
    return xs, p / p.sum()


@pytest.mark.parametrize("one_dim", [False, True])
def test_condition_d_constant_ax(one_dim):
    n, beta, gamma, eps = 30, 1.0, 0.4, 0.05
    xs, P = chi_law(n)
    a = [1.5] * len(xs)
    rep = condition_d_check(dict(zip(xs, a)), dict(zip(xs, P)), gamma, eps, beta, n,
                            d_one_variant=one_dim)
    r1, rho = condition_d_two_sums(xs, a, P, gamma, eps, beta, n, one_dim)
    assert rep.r1 == r1 and abs(rep.rho_n - rho) <= 1e-12 * max(1.0, rho)
    # q is constant, so rho is the ratio of the x P masses
    up = sum(x * p for x, p in zip(xs, P) if x > r1)
    lo = sum(x * p for x, p in zip(xs, P) if x <= r1)
    assert abs(rep.rho_n - up / lo) <= 1e-12 * max(1.0, up / lo)
    assert rep.d_one_variant is one_dim


def test_condition_d_large_gamma():
    n = 20
    xs, P = chi_law(n, 1)
    rep = condition_d_check({x: 1.0 for x in xs}, dict(zip(xs, P)), 1e6, 0.05, 1.0, n)
    assert rep.r1 == max(xs) and rep.rho_n == 0.0


def test_condition_d_degenerate_split():
    n = 10
    xs = [float(x) for x in range(n + 1)]
    a = {x: 0.01 + x for x in xs}  # increasing a_x
    P = {x: (1.0 if x == n else 0.0) for x in xs}
    rep = condition_d_check(a, P, 0.5, 0.05, 1.0, n)
    assert rep.r1 < n and rep.degenerate and rep.rho_n == math.inf


# --- cone quotients -------------------------------------------------------

def test_quotients_at_beta_zero():
    ens = synthetic_ensemble(50, seed=8)
    chis = list(np.random.default_rng(1).random(50) * 10)
    rep = cone_process_distance(chis, ens, 0.0, 25)
    keep_h = [x for x, cl in zip(chis, ens) if cl.half.any()]
    keep_e = [x for x, cl in zip(chis, ens) if cl.empty.any()]
    assert abs(rep.quotient_half - np.mean(keep_h)) <= 1e-12
    assert abs(rep.quotient_empty - np.mean(keep_e)) <= 1e-12


def test_quotients_all_empty():
    ens = [classify_lines(decomp_from_silt([0] * 4), 0.5, 4, 0.05, 9)] * 5
    chis = [1.0, 2.0, 3.0, 4.0, 6.0]
    rep = cone_process_distance(chis, ens, 1.0, 9)
    assert rep.quotient_empty == pytest.approx(3.2, abs=1e-12)
    assert rep.quotient_half is None and "half" in rep.errors


def test_quotients_on_exact_ensemble():
    d, n, beta = 2, 8, 0.5
    V = build_test_set(d, n)
    p = ConeParams.for_beta(beta, d)
    chis, ens, silts_half, silts_empty = [], [], [], []
    for codes in itertools.product(range(4), repeat=n):
        path = LatticePath(d, np.array(codes))
        cl = classify_lines(assign_cones(silt(path), V), p.a1, p.a2, p.delta, n, p.b2)
        x = math.sqrt(float(path.sites[-1] @ path.sites[-1]))
        chis.append(x)
        ens.append(cl)
        silts_half.append(cl.silt[cl.half].tolist())
        silts_empty.append(cl.silt[cl.empty].tolist())
    rep = cone_process_distance(chis, ens, beta, n)
    ref_h = weighted_quotient(chis, silts_half, beta)
    ref_e = weighted_quotient(chis, silts_empty, beta)
    assert abs(rep.quotient_half - ref_h) <= 1e-10 * ref_h
    assert abs(rep.quotient_empty - ref_e) <= 1e-10 * ref_e
