"""Cone decomposition of the self-intersection point process.

A test set V of half-lines from the origin partitions the self-intersection
sites: each site, carrying its pair multiplicity, joins the cone of the ray it
is closest to.  Lines are then classified by the SILT of their cone, which is
what the shape, Palm-probability, a_x and Condition D diagnostics consume.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyClass, EnsembleMismatch, ParamError
from .walk import SiltPointProcess

TIE_RTOL = 1e-9


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeParams:
    """Class thresholds; a1, a2, b1, b2 are stored as absolute SILT scales."""

    a1: float
    a2: float
    b1: float
    b2: float
    delta: float = 0.05
    rho: float = 0.05
    gamma: float = 1.0
    epsilon: float = 0.05
    v: float = 1.0

    def __post_init__(self):
        if not 0 < self.a1 < self.a2:
            raise ParamError(f"need 0 < a1 < a2, got a1={self.a1}, a2={self.a2}")
        if not 0 <= self.b1 < self.b2:
            raise ParamError(f"need 0 <= b1 < b2, got b1={self.b1}, b2={self.b2}")
        if self.delta <= 0 or self.rho <= 0:
            raise ParamError("delta and rho must be positive")

    @classmethod
    def for_beta(cls, beta: float, d: int, **overrides) -> "ConeParams":
        """Defaults beta*a1 = 0.5, beta*a2 = 4, beta*b1 = 0.1, beta*b2 = ln(2d) - ln d.

        For beta = 0 the products are used as the values themselves.
        """
        scale = 1.0 / beta if beta > 0 and math.isfinite(beta) else 1.0
        base = dict(a1=0.5 * scale, a2=4.0 * scale, b1=0.1 * scale,
                    b2=(math.log(2 * d) - math.log(d)) * scale)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def r_grid(self) -> np.ndarray:
        return np.round(np.arange(0.0, 1.0 + 0.5 * self.delta, self.delta), 12)


# ---------------------------------------------------------------------------
# Test set of directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TestSet:
    __test__ = False  # not a pytest class despite the name

    d: int
    directions: np.ndarray = field(repr=False)

    def __post_init__(self):
        dirs = np.array(self.directions, dtype=np.float64, copy=True).reshape(-1, self.d)
        dirs.setflags(write=False)
        object.__setattr__(self, "directions", dirs)

    def __len__(self):
        return self.directions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TestSet):
            return NotImplemented
        return self.d == other.d and np.array_equal(self.directions, other.directions)

    def __hash__(self):
        return hash((self.d, self.directions.tobytes()))

    def rotated(self, rotation: np.ndarray) -> "TestSet":
        return TestSet(self.d, self.directions @ np.asarray(rotation).T)


def cube_grid_count(d: int, m: int) -> int:
    """Distinct points of a closed m^(d-1) grid on every face of the cube."""
    return m**d - max(m - 2, 0) ** d


def cube_grid_directions(d: int, m: int) -> np.ndarray:
    """Closed face grids (``linspace(-1, 1, m)``) projected radially to the sphere."""
    if m < 2:
        raise ValueError("need at least 2 grid points per edge")
    ticks = np.linspace(-1.0, 1.0, m)
    pts = set()
    for axis in range(d):
        for side in (-1.0, 1.0):
            for rest in np.array(np.meshgrid(*([ticks] * (d - 1)), indexing="ij")).reshape(d - 1, -1).T:
                p = np.insert(rest, axis, side)
                pts.add(tuple(np.round(p, 12) + 0.0))
    arr = np.array(sorted(pts))
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def build_test_set(d: int, n: int, v: float = 1.0, size: int | None = None,
                   m: int | None = None) -> TestSet:
    """Half-line generators with |V| of order v * n^(1 - 1/d).

    d = 1 gives the two rays; d = 2 gives ``size`` equally spaced angles; d >= 3
    uses cube-face grids with ``m`` points per edge chosen so that the count is
    as close as possible (in ratio) to the target.
    """
    if d < 1 or n < 1 or v <= 0:
        raise ValueError("need d >= 1, n >= 1 and v > 0")
    if d == 1:
        return TestSet(1, np.array([[1.0], [-1.0]]))
    target = size if size is not None else max(1, round(v * n ** (1.0 - 1.0 / d)))
    if d == 2:
        angles = 2.0 * np.pi * np.arange(target) / target
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
        dirs[np.abs(dirs) < 1e-15] = 0.0
        return TestSet(2, dirs)
    if m is None:
        m = 2
        while cube_grid_count(d, m + 1) <= target or (
            abs(math.log(cube_grid_count(d, m + 1) / target))
            < abs(math.log(cube_grid_count(d, m) / target))
        ):
            m += 1
    return TestSet(d, cube_grid_directions(d, m))


# ---------------------------------------------------------------------------
# Cone assignment
# ---------------------------------------------------------------------------

def ray_distances_sq(points: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Squared distance from every point to every ray ``{t u : t >= 0}``."""
    points = np.asarray(points, dtype=np.float64)
    dots = points @ dirs.T
    norm2 = np.einsum("ij,ij->i", points, points)
    return np.maximum(norm2[:, None] - np.maximum(dots, 0.0) ** 2, 0.0)


@dataclass(frozen=True, eq=False)
class ConeDecomposition:
    V: TestSet
    sites: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    line_of_site: np.ndarray = field(repr=False)
    silt: np.ndarray = field(repr=False)
    J: int

    def members(self, line: int) -> np.ndarray:
        return self.sites[self.line_of_site == line]


def _lex_order(rows: np.ndarray) -> np.ndarray:
    return np.lexsort(rows.T[::-1]) if rows.size else np.arange(rows.shape[0])


def _tie_order(x, dirs, ranks):
    """Dealing order of tied rays: counterclockwise from x in the plane, else lexicographic."""
    if x.size == 2 and np.any(x != 0):
        cross = x[0] * dirs[:, 1] - x[1] * dirs[:, 0]
        return np.argsort(np.arctan2(cross, dirs @ x), kind="stable")
    return np.argsort(ranks, kind="stable")


def assign_cones(phi: SiltPointProcess | tuple, V: TestSet) -> ConeDecomposition:
    """Assign every self-intersection site to the cone of its nearest ray.

    Sites equidistant from several rays are taken in order of distance from
    the origin and dealt round-robin over the tied rays, so tied mass is split
    as evenly as whole sites allow.  In the plane the rays are dealt in angular
    order around the site, which keeps the split rotation-equivariant; in other
    dimensions, and for the origin (tied with every ray), rays go in
    lexicographic order of their directions.  ``phi`` may also be a
    ``(sites, masses)`` pair with real-valued sites.
    """
    if len(V) == 0:
        raise ValueError("empty test set")
    if isinstance(phi, SiltPointProcess):
        sites = phi.sites().astype(np.float64).reshape(-1, V.d)
        masses = phi.masses()
        J = int(phi.J)
    else:
        sites = np.asarray(phi[0], dtype=np.float64).reshape(-1, V.d)
        masses = np.asarray(phi[1], dtype=np.int64)
        J = int(masses.sum())
    K = len(V)
    line = np.zeros(sites.shape[0], dtype=np.int64)
    if sites.shape[0]:
        order = _lex_order(sites)
        sites, masses = sites[order], masses[order]
        d2 = ray_distances_sq(sites, V.directions)
        best = d2.min(axis=1)
        scale = np.maximum(np.einsum("ij,ij->i", sites, sites), 1.0)
        tied = d2 <= (best + TIE_RTOL * scale)[:, None]
        line = np.argmin(d2, axis=1)
        multi = np.nonzero(tied.sum(axis=1) > 1)[0]
        if multi.size:
            dir_rank = np.empty(K, dtype=np.int64)
            dir_rank[_lex_order(V.directions)] = np.arange(K)
            norm2 = np.round(np.einsum("ij,ij->i", sites[multi], sites[multi]), 9)
            multi = multi[np.lexsort((np.arange(multi.size), norm2))]
            dealt = defaultdict(int)
            for p in multi:  # by distance from the origin, then lexicographically
                lines = np.nonzero(tied[p])[0]
                key = tuple(lines.tolist())
                lines = lines[_tie_order(sites[p], V.directions[lines], dir_rank[lines])]
                line[p] = lines[dealt[key] % lines.size]
                dealt[key] += 1
    silt = np.bincount(line, weights=masses, minlength=K).astype(np.int64)
    if int(silt.sum()) != J:
        raise AssertionError(f"cone partition broken: sum |C_L| = {silt.sum()} != J = {J}")
    return ConeDecomposition(V, sites, masses, line, silt, J)


# ---------------------------------------------------------------------------
# Line classes
# ---------------------------------------------------------------------------

CLASS_NAMES = ("half", "half_pm", "minus", "plus", "empty", "over")


@dataclass(frozen=True, eq=False)
class LineClasses:
    """Boolean masks over V for the SILT classes of one decomposition.

    ``over`` holds lines with 2|C_L| > 2 b2 n, which only occur outside the
    band J_n <= b2 n; with it the classes empty, minus, half_pm, plus, over
    partition V.
    """

    V: TestSet
    silt: np.ndarray = field(repr=False)
    n: int
    a1: float
    a2: float
    delta: float
    b2: float
    half: np.ndarray = field(repr=False)
    half_pm: np.ndarray = field(repr=False)
    minus: np.ndarray = field(repr=False)
    plus: np.ndarray = field(repr=False)
    empty: np.ndarray = field(repr=False)
    over: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return int(self.silt.sum())

    def L_r(self, r: float) -> np.ndarray:
        x = 2 * self.silt
        return (x >= self.a1 * self.n**r) & (x <= self.a2 * self.n**r)

    def L_r_star(self, r: float, delta: float | None = None) -> np.ndarray:
        delta = self.delta if delta is None else delta
        x = 2 * self.silt
        return (x >= self.a1 * self.n**r) & (x <= self.a2 * self.n ** (r + delta))

    def mask(self, selector) -> np.ndarray:
        if callable(selector):
            return np.asarray(selector(self), dtype=bool)
        if selector == "all":
            return np.ones(len(self.V), dtype=bool)
        if isinstance(selector, str):
            return getattr(self, selector)
        kind, r = selector
        return self.L_r(r) if kind == "r" else self.L_r_star(r)


def classify_lines(decomp: ConeDecomposition, a1: float, a2: float, delta: float, n: int,
                   b2: float = math.inf) -> LineClasses:
    """Interval tests on 2|C_L| for every line of the decomposition."""
    if not 0 < a1 < a2:
        raise ParamError(f"need 0 < a1 < a2, got a1={a1}, a2={a2}")
    if delta <= 0:
        raise ParamError("delta must be positive")
    x = 2 * decomp.silt
    lo_pm = a1 * n ** (0.5 - delta)
    hi_pm = a2 * n ** (0.5 + delta)
    return LineClasses(
        V=decomp.V, silt=decomp.silt, n=n, a1=a1, a2=a2, delta=delta, b2=b2,
        half=(x >= a1 * math.sqrt(n)) & (x <= a2 * math.sqrt(n)),
        half_pm=(x >= lo_pm) & (x <= hi_pm),
        minus=(x > 0) & (x < lo_pm),
        plus=(x > hi_pm) & (x <= 2 * b2 * n),
        empty=x == 0,
        over=x > 2 * b2 * n,
    )


def lr_upper_bound(params_or_a1, b2: float, n: int, r: float) -> float:
    """(2 b2 / a1) n^(1-r): the largest |L_r| compatible with J_n <= b2 n."""
    a1 = getattr(params_or_a1, "a1", params_or_a1)
    return 2.0 * b2 / a1 * n ** (1.0 - r)


# ---------------------------------------------------------------------------
# Shape
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeReport:
    n: int
    J: int
    rho: float
    delta: float
    r_grid: tuple
    class_size: tuple
    class_silt: tuple
    flagged: tuple
    degenerate: bool

    @property
    def shapes(self) -> tuple:
        return tuple(r for r, f in zip(self.r_grid, self.flagged) if f)

    def rows(self, beta: float) -> list[tuple]:
        return [(self.n, beta, r, s, c, int(f)) for r, s, c, f in
                zip(self.r_grid, self.class_size, self.class_silt, self.flagged)]


def shape_of(classes: LineClasses, J: int, rho: float, delta: float,
             r_grid=None) -> ShapeReport:
    """Flag r when the widened class L_{r*} carries at least J^(1-rho)/2 of the SILT."""
    if J < 0:
        raise ValueError("J must be nonnegative")
    if r_grid is None:
        r_grid = np.round(np.arange(0.0, 1.0 + 0.5 * delta, delta), 12)
    r_grid = tuple(float(r) for r in r_grid)
    if J == 0:
        zeros = (0,) * len(r_grid)
        return ShapeReport(classes.n, 0, rho, delta, r_grid, zeros, zeros,
                           (False,) * len(r_grid), True)
    threshold = 0.5 * J ** (1.0 - rho)
    sizes, silts, flags = [], [], []
    for r in r_grid:
        m = classes.L_r_star(r, delta)
        s = int(classes.silt[m].sum())
        sizes.append(int(m.sum()))
        silts.append(s)
        flags.append(s >= threshold)
    return ShapeReport(classes.n, int(J), rho, delta, r_grid, tuple(sizes), tuple(silts),
                       tuple(flags), False)


SHAPE_COLUMNS = ("n", "beta", "r", "class_size", "class_silt", "flagged")


def shape_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SHAPE_COLUMNS)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return repr(round(x, 12)) if math.isfinite(x) else str(x)
    return x


# ---------------------------------------------------------------------------
# Ensemble statistics
# ---------------------------------------------------------------------------

def _check_same_V(ensemble) -> TestSet:
    if not ensemble:
        raise ValueError("empty ensemble")
    V = ensemble[0].V
    for c in ensemble[1:]:
        if c.V is not V and c.V != V:
            raise EnsembleMismatch("ensemble members use different test sets")
    return V


def palm_line_probability(ensemble, class_selector="half") -> float:
    """Ensemble mean of |L| over |V|: the chance a typical line falls in the class."""
    V = _check_same_V(ensemble)
    sizes = np.array([np.count_nonzero(c.mask(class_selector)) for c in ensemble], dtype=np.float64)
    return float(sizes.mean() / len(V))


def class_penalty(classes: LineClasses, selector, beta: float) -> float | None:
    """|L|^-1 sum_{L in class} exp(-beta |C_L|), or None for an empty class."""
    m = classes.mask(selector)
    if not m.any():
        return None
    return float(np.mean(np.exp(-beta * classes.silt[m])))


@dataclass(frozen=True)
class AxTable:
    r: float
    beta: float
    n: int
    values: dict
    saturated: tuple = ()
    counts: dict = field(default_factory=dict)

    def __getitem__(self, x):
        return self.values[x]


def estimate_ax(samples, selector, r: float, beta: float, n: int,
                weights=None) -> AxTable:
    """a_x = -(2 / (beta n^r)) ln(average class penalty among samples with chi = x).

    ``samples`` is a sequence of ``(x, LineClasses)`` pairs.  Samples whose
    class is empty carry no lines and are left out of their bin's average; a
    bin in which every sample has an empty class raises EmptyClass.
    """
    if beta <= 0:
        raise ValueError("a_x needs beta > 0")
    num = defaultdict(float)
    den = defaultdict(float)
    seen = set()
    for i, (x, classes) in enumerate(samples):
        seen.add(x)
        h = class_penalty(classes, selector, beta)
        if h is None:
            continue
        w = 1.0 if weights is None else float(weights[i])
        num[x] += w * h
        den[x] += w
    missing = sorted(x for x in seen if den.get(x, 0.0) == 0.0)
    if missing:
        raise EmptyClass(f"class {selector!r} is empty in every sample of bins {missing}")
    scale = -2.0 / (beta * n**r)
    values, saturated = {}, []
    for x in sorted(den):
        avg = num[x] / den[x]
        if avg < 1e-300:
            avg = 1e-300
            saturated.append(x)
        values[x] = scale * math.log(avg)
    return AxTable(r, beta, n, values, tuple(saturated), dict(den))


@dataclass(frozen=True)
class ConditionDReport:
    r1: float
    r2: float
    rho_n: float
    I_n: float
    g_n: float
    degenerate: bool
    d_one_variant: bool


def condition_d_check(ax, chi_pmf, gamma: float, epsilon: float, beta: float, n: int,
                      d_one_variant: bool = False) -> ConditionDReport:
    """Split of sum x q(x) P(x) at r1 = sup{x : x <= gamma mu_x n^-eps}.

    ``ax`` and ``chi_pmf`` map distances x to a_x and P(chi_n = x).  The usual
    scales are mu_x = (beta a_x)^(1/2) n^(3/4), q = exp(-beta a_x n^(1/2) / 2);
    the one-dimensional variant uses mu_x = (beta a_x)^(1/2) n and
    q = exp(-beta a_x n / 2).
    """
    if isinstance(ax, AxTable):
        ax = ax.values
    xs = np.array(sorted(x for x, p in chi_pmf.items() if p > 0), dtype=np.float64)
    if xs.size == 0:
        raise ValueError("empty chi distribution")
    try:
        a = np.array([ax[x] for x in xs.tolist()], dtype=np.float64)
    except KeyError as exc:
        raise ValueError(f"no a_x value for x = {exc.args[0]}") from None
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise ValueError("a_x must be positive and finite")
    P = np.array([chi_pmf[x] for x in xs.tolist()], dtype=np.float64)
    if d_one_variant:
        mu = np.sqrt(beta * a) * n
        q = np.exp(-beta * a * n / 2.0)
    else:
        mu = np.sqrt(beta * a) * n**0.75
        q = np.exp(-beta * a * math.sqrt(n) / 2.0)

    def sup_below(eps):
        ok = xs <= gamma * mu * n ** (-eps)
        return float(xs[ok].max()) if ok.any() else 0.0

    r1, r2 = sup_below(epsilon), sup_below(0.0)
    mass = xs * q * P
    upper = float(mass[xs > r1].sum())
    lower = float(mass[xs <= r1].sum())
    degenerate = lower == 0.0
    rho = math.inf if degenerate else upper / lower
    return ConditionDReport(r1, r2, rho, float(mass.sum()),
                            float((np.sqrt(a) * q * P).sum()), degenerate, d_one_variant)


@dataclass(frozen=True)
class ConeProcessReport:
    quotient_half: float | None
    quotient_empty: float | None
    palm_half: float
    palm_empty: float
    upper_bound: float | None
    lower_bound: float | None
    errors: dict


def cone_quotient(chis, ensemble, selector, beta: float, weights=None) -> float:
    """Empirical E(chi h) / E(h) with h the per-sample class penalty average.

    Samples with an empty class are left out; EmptyClass if none remain.
    """
    num = den = 0.0
    for i, (x, classes) in enumerate(zip(chis, ensemble)):
        h = class_penalty(classes, selector, beta)
        if h is None:
            continue
        w = 1.0 if weights is None else float(weights[i])
        num += w * x * h
        den += w * h
    if den == 0.0:
        raise EmptyClass(f"class {selector!r} is empty across the ensemble")
    return num / den


def cone_process_distance(chis, ensemble, beta: float, n: int, weights=None) -> ConeProcessReport:
    """The two competing cone quotients and their Palm-weighted combinations.

    ``upper_bound`` is P(half) q_half + P(empty) q_empty and ``lower_bound`` the
    half-class term alone; either is None when a quotient is unavailable.
    """
    _check_same_V(ensemble)
    errors, quotients = {}, {}
    for name in ("half", "empty"):
        try:
            quotients[name] = cone_quotient(chis, ensemble, name, beta, weights)
        except EmptyClass as exc:
            quotients[name] = None
            errors[name] = str(exc)
    p_half = palm_line_probability(ensemble, "half")
    p_empty = palm_line_probability(ensemble, "empty")
    qh, qe = quotients["half"], quotients["empty"]
    upper = p_half * qh + p_empty * qe if qh is not None and qe is not None else None
    lower = p_half * qh if qh is not None else None
    return ConeProcessReport(qh, qe, p_half, p_empty, upper, lower, errors)
