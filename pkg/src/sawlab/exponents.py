"""Exponent estimates from moment tables and comparison with mu(d)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .errors import InsufficientData

# Monte Carlo estimates for the 3-d SAW cluster around this value.
D3_SIMULATION_REFERENCE = 0.59


def mu_formula(d: int) -> Fraction:
    """1 for d = 1 and max(1/2, 1/4 + 1/d) for d >= 2."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if d == 1:
        return Fraction(1)
    return max(Fraction(1, 2), Fraction(1, 4) + Fraction(1, d))


def reference_lines(d: int) -> list[tuple[str, float]]:
    refs = [("mu_formula", float(mu_formula(d)))]
    if d == 3:
        refs.append(("simulation", D3_SIMULATION_REFERENCE))
    return refs


@dataclass(frozen=True)
class MomentRow:
    n: int
    mean_chi: float
    mean_chi2: float
    stderr_chi: float = 0.0
    stderr_chi2: float = 0.0
    source: str = "exact"


@dataclass
class MomentSeries:
    d: int
    beta: float
    rows: list = field(default_factory=list)

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n must be strictly increasing")
        for r in self.rows:
            if r.source == "exact" and (r.stderr_chi or r.stderr_chi2):
                raise ValueError("exact rows carry zero standard error")

    @classmethod
    def from_arrays(cls, d, beta, n, mean_chi, mean_chi2, stderr_chi=None,
                    stderr_chi2=None, source="exact"):
        k = len(n)
        se1 = np.zeros(k) if stderr_chi is None else stderr_chi
        se2 = np.zeros(k) if stderr_chi2 is None else stderr_chi2
        rows = [MomentRow(int(n[i]), float(mean_chi[i]), float(mean_chi2[i]),
                          float(se1[i]), float(se2[i]), source) for i in range(k)]
        return cls(d, beta, rows)

    def column(self, observable: str):
        n = np.array([r.n for r in self.rows], dtype=np.float64)
        if observable == "chi":
            m = [r.mean_chi for r in self.rows]
            se = [r.stderr_chi for r in self.rows]
        elif observable == "chi2":
            m = [r.mean_chi2 for r in self.rows]
            se = [r.stderr_chi2 for r in self.rows]
        else:
            raise ValueError(f"unknown observable {observable!r}")
        return n, np.array(m, dtype=np.float64), np.array(se, dtype=np.float64)


@dataclass(frozen=True)
class ExponentFit:
    observable: str
    nu_hat: float
    half_width: float
    n_min: int
    n_max: int
    intercept: float
    residuals: tuple
    chi2_reduced: float
    weighted: bool
    single_point: dict

    @property
    def interval(self) -> tuple[float, float]:
        return self.nu_hat - self.half_width, self.nu_hat + self.half_width

    def covers(self, value: float) -> bool:
        lo, hi = self.interval
        return lo <= value <= hi


def default_window(ns) -> tuple[int, int]:
    """Upper half of the available n values, widened to at least three rows."""
    ns = sorted(ns)
    k = max(3, (len(ns) + 1) // 2)
    sel = ns[-k:]
    return sel[0], sel[-1]


def fit_exponent(series: MomentSeries, observable: str = "chi2", window=None,
                 level: float = 0.95) -> ExponentFit:
    """Weighted least-squares slope of ln(moment) against ln(n).

    Weights are 1/sigma^2 with sigma = stderr / moment; when any row has zero
    error the fit is unweighted.  The half-width is the Student-t quantile
    times the slope standard error, inflated by sqrt(reduced chi^2) when that
    exceeds one.  For chi2 the slope and half-width are halved.
    """
    n, m, se = series.column(observable)
    lo, hi = window if window is not None else default_window(n.astype(int).tolist())
    sel = (n >= lo) & (n <= hi)
    if sel.sum() < 3:
        raise InsufficientData(f"need at least 3 rows in [{lo}, {hi}], have {int(sel.sum())}")
    n, m, se = n[sel], m[sel], se[sel]
    if np.any(m <= 0):
        raise ValueError("moments must be positive")
    x, y = np.log(n), np.log(m)
    weighted = bool(np.all(se > 0))
    w = (m / se) ** 2 if weighted else np.ones_like(x)
    k = x.size
    xw = np.sum(w * x) / w.sum()
    yw = np.sum(w * y) / w.sum()
    sxx = np.sum(w * (x - xw) ** 2)
    slope = np.sum(w * (x - xw) * (y - yw)) / sxx
    intercept = yw - slope * xw
    resid = y - (intercept + slope * x)
    rss = float(np.sum(w * resid**2))
    chi2_red = rss / (k - 2)
    if weighted:
        se_slope = math.sqrt(max(chi2_red, 1.0) / sxx)
    else:
        se_slope = math.sqrt(chi2_red / sxx)
    half = float(stats.t.ppf(0.5 + level / 2, k - 2) * se_slope)
    scale = 0.5 if observable == "chi2" else 1.0
    single = {int(nn): float(scale * math.log(mm) / math.log(nn))
              for nn, mm in zip(n, m) if nn > 1}
    return ExponentFit(observable, float(scale * slope), scale * half, int(n[0]), int(n[-1]),
                       float(intercept), tuple(float(r) for r in resid), float(chi2_red),
                       weighted, single)


EXPONENT_COLUMNS = ("d", "beta", "observable", "n_min", "n_max", "nu_hat", "ci",
                    "mu_formula", "gap")


def exponent_row(d: int, beta: float, fit: ExponentFit) -> tuple:
    mu = float(mu_formula(d))
    return (d, beta, fit.observable, fit.n_min, fit.n_max, fit.nu_hat, fit.half_width,
            mu, fit.nu_hat - mu)


def exponents_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EXPONENT_COLUMNS)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


@dataclass(frozen=True)
class TheoremReport:
    d: int
    beta: float
    mu: Fraction
    n: tuple
    rescaled_chi: tuple
    rescaled_chi2: tuple
    min_chi: float
    max_chi: float
    min_chi2: float
    max_chi2: float
    trend_chi: str
    trend_chi2: str

    def text(self) -> str:
        lines = [f"d={self.d} beta={self.beta} mu(d)={self.mu} ({float(self.mu):.4f})"]
        for label, value in reference_lines(self.d)[1:]:
            lines.append(f"reference {label} = {value}")
        lines.append("n, n^-mu E chi, n^-2mu E chi^2")
        for n, a, b in zip(self.n, self.rescaled_chi, self.rescaled_chi2):
            lines.append(f"{n}, {a:.6g}, {b:.6g}")
        lines.append(f"chi: min {self.min_chi:.6g} max {self.max_chi:.6g} ({self.trend_chi})")
        lines.append(f"chi2: min {self.min_chi2:.6g} max {self.max_chi2:.6g} ({self.trend_chi2})")
        return "\n".join(lines)


def _trend(seq, rtol=1e-12) -> str:
    diff = np.diff(seq)
    tol = rtol * np.max(np.abs(seq)) if len(seq) else 0.0
    if np.all(np.abs(diff) <= tol):
        return "constant"
    if np.all(diff <= tol):
        return "decreasing"
    if np.all(diff >= -tol):
        return "increasing"
    return "mixed"


def theorem_report(series: MomentSeries, d: int, beta: float) -> TheoremReport:
    """Rescaled sequences n^-mu E chi and n^-2mu E chi^2 with their min and max."""
    if not series.rows:
        raise ValueError("empty series")
    mu = mu_formula(d)
    n, m1, _ = series.column("chi")
    _, m2, _ = series.column("chi2")
    a = m1 / n ** float(mu)
    b = m2 / n ** (2 * float(mu))
    return TheoremReport(d, beta, mu, tuple(int(x) for x in n), tuple(a.tolist()),
                         tuple(b.tolist()), float(a.min()), float(a.max()),
                         float(b.min()), float(b.max()), _trend(a), _trend(b))


@dataclass(frozen=True)
class HullSandwich:
    grid: np.ndarray
    p_chi: np.ndarray
    p_hull: np.ndarray
    se_lower: np.ndarray
    se_upper: np.ndarray
    pathwise: bool
    k: float

    @property
    def lower_ok(self) -> np.ndarray:
        return self.p_chi <= self.p_hull + self.k * self.se_lower

    @property
    def upper_ok(self) -> np.ndarray:
        return self.p_hull <= 2.0 * self.p_chi + self.k * self.se_upper

    @property
    def holds(self) -> bool:
        return bool(self.pathwise and self.lower_ok.all() and self.upper_ok.all())


def hull_sandwich(chi, hull, grid=None, points: int = 20, k: float = 3.0) -> HullSandwich:
    """Check P(chi >= x) <= P(R >= x) <= 2 P(chi >= x) on a grid of x.

    Standard errors are those of the per-sample differences
    1{chi >= x} - 1{R >= x} and 1{R >= x} - 2 1{chi >= x}.
    """
    chi = np.asarray(chi, dtype=np.float64)
    hull = np.asarray(hull, dtype=np.float64)
    if grid is None:
        grid = np.linspace(0.0, hull.max(), points + 1)[1:]
    grid = np.asarray(grid, dtype=np.float64)
    N = chi.size
    pc, ph, sl, su = [], [], [], []
    for x in grid:
        a = (chi >= x).astype(np.float64)
        b = (hull >= x).astype(np.float64)
        pc.append(a.mean())
        ph.append(b.mean())
        sl.append(np.std(a - b, ddof=1) / math.sqrt(N))
        su.append(np.std(b - 2 * a, ddof=1) / math.sqrt(N))
    # tiny slack for float rounding of sqrt(r2) against sqrt(h2)
    pathwise = bool(np.all(hull >= chi - 1e-12))
    return HullSandwich(grid, np.array(pc), np.array(ph), np.array(sl), np.array(su),
                        pathwise, k)
