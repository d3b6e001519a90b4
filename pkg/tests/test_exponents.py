from fractions import Fraction

import numpy as np
import pytest

from oracles import mu_reference
from sawlab.errors import InsufficientData
from sawlab.exponents import (MomentRow, MomentSeries, exponent_row, exponents_csv,
                              fit_exponent, hull_sandwich, mu_formula, theorem_report)
from sawlab.mcmc import sample_srw


def power_series(d, ns, c, nu, source="exact"):
    ns = np.asarray(ns, dtype=float)
    return MomentSeries.from_arrays(d, 1.0, ns.astype(int), c * ns**nu, c**2 * ns ** (2 * nu),
                                    source=source)


def test_mu_values():
    assert [mu_formula(d) for d in (1, 2, 3, 4)] == [1, Fraction(3, 4), Fraction(7, 12), Fraction(1, 2)]
    assert mu_formula(100) == Fraction(1, 2)
    for d in range(1, 12):
        assert mu_formula(d) == mu_reference(d)
        assert mu_formula(d + 1) <= mu_formula(d)
    with pytest.raises(ValueError):
        mu_formula(0)


def test_exact_power_law():
    s = power_series(2, [8, 16, 32, 64, 128], 3.0, 0.75)
    for obs in ("chi", "chi2"):
        f = fit_exponent(s, obs, window=(8, 128))
        assert abs(f.nu_hat - 0.75) < 1e-12
        assert f.half_width < 1e-10 and max(map(abs, f.residuals)) < 1e-12


def test_chi2_three_halves():
    ns = np.array([10, 20, 40, 80])
    s = MomentSeries.from_arrays(2, 1.0, ns, np.sqrt(3 * ns**1.5), 3 * ns**1.5)
    assert abs(fit_exponent(s, "chi2", window=(10, 80)).nu_hat - 0.75) < 1e-12


def test_srw_half():
    ns = np.arange(2, 13)
    s = MomentSeries.from_arrays(2, 0.0, ns, np.sqrt(ns), ns.astype(float))
    assert abs(fit_exponent(s, "chi2").nu_hat - 0.5) < 1e-12


def test_scale_invariance():
    ns = [16, 32, 64, 128]
    rng = np.random.default_rng(0)
    m = np.array(ns, float) ** 1.2 * (1 + 0.01 * rng.normal(size=4))
    a = MomentSeries.from_arrays(3, 1, ns, np.sqrt(m), m)
    b = MomentSeries.from_arrays(3, 1, ns, 7 * np.sqrt(m), 49 * m)
    fa = fit_exponent(a, "chi2", window=(16, 128))
    fb = fit_exponent(b, "chi2", window=(16, 128))
    assert fa.nu_hat == pytest.approx(fb.nu_hat, abs=1e-12)


def test_insufficient_rows():
    s = power_series(2, [8, 16], 1.0, 0.7)
    with pytest.raises(InsufficientData):
        fit_exponent(s, "chi")


def test_default_window_upper_half():
    s = power_series(2, [4, 8, 16, 32, 64, 128, 256, 512], 1.0, 0.7)
    f = fit_exponent(s, "chi")
    assert (f.n_min, f.n_max) == (64, 512)
    short = fit_exponent(power_series(2, [4, 8, 16, 32], 1.0, 0.7), "chi")
    assert (short.n_min, short.n_max) == (8, 32)


def test_series_validation():
    with pytest.raises(ValueError):
        MomentSeries(2, 1.0, [MomentRow(8, 1, 1), MomentRow(8, 1, 1)])
    with pytest.raises(ValueError):
        MomentSeries(2, 1.0, [MomentRow(8, 1, 1, 0.1, 0.1, "exact")])


def test_noisy_power_law_coverage():
    rng = np.random.default_rng(20240601)
    ns = np.array([32, 64, 128, 256, 512], float)
    hits = 0
    for _ in range(1000):
        m = 3.0 * ns**0.6
        noisy = m * (1 + 0.01 * rng.normal(size=ns.size))
        s = MomentSeries.from_arrays(2, 1.0, ns.astype(int), noisy, noisy**2,
                                     stderr_chi=0.01 * m, stderr_chi2=0.02 * m**2,
                                     source="mcmc")
        hits += fit_exponent(s, "chi", window=(32, 512)).covers(0.6)
    assert hits >= 950


def test_single_point_statistic():
    s = power_series(2, [16, 64, 256], 1.0, 0.75)
    f = fit_exponent(s, "chi2", window=(16, 256))
    assert f.single_point[256] == pytest.approx(0.75, abs=1e-12)


def test_theorem_report_constant_and_trend():
    s = power_series(2, [8, 16, 32], 2.5, 0.75)
    rep = theorem_report(s, 2, 1.0)
    assert rep.min_chi == pytest.approx(2.5) and rep.max_chi == pytest.approx(2.5)
    assert rep.trend_chi == "constant"
    ns = np.arange(2, 13)
    srw = MomentSeries.from_arrays(2, 0.0, ns, np.sqrt(ns), ns.astype(float))
    rep = theorem_report(srw, 2, 0.0)
    assert rep.trend_chi2 == "decreasing"
    assert "0.59" in theorem_report(power_series(3, [8, 16, 32], 1, 0.6), 3, 1).text()


def test_exponent_csv():
    f = fit_exponent(power_series(2, [8, 16, 32], 1.0, 0.7), "chi")
    text = exponents_csv([exponent_row(2, 1.0, f)])
    head, row = text.splitlines()
    assert head == "d,beta,observable,n_min,n_max,nu_hat,ci,mu_formula,gap"
    assert row.split(",")[7] == "0.75"


def test_hull_sandwich_small():
    chi, hull = sample_srw(2, 64, 20000, seed=5)
    rep = hull_sandwich(chi, hull)
    assert rep.pathwise and rep.holds and rep.grid.size == 20
