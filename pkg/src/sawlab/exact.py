"""Exact results by exhaustive enumeration and return-probability recursions.

Everything here is deterministic and exact up to double rounding; these are the
oracles the Monte Carlo side is checked against.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import binom

from . import _kernels
from .errors import BudgetExceeded, CapExceeded

DEFAULT_BUDGET = 10**9
DEFAULT_SILT_CAP = 5000


def budget_from_env(default: int = DEFAULT_BUDGET) -> int:
    value = os.environ.get("SAWLAB_BUDGET")
    return int(float(value)) if value else default


def _group_order(d: int) -> int:
    return 2**d * math.factorial(d)


def enumeration_cost(d: int, n: int) -> float:
    """Path-steps walked by the symmetry-reduced enumeration of all (2d)^n walks."""
    return n * float(2 * d) ** n / _group_order(d)


def saw_search_cost(d: int, n: int) -> float:
    if n == 0:
        return 0.0
    return n * 2 * d * float(2 * d - 1) ** (n - 1) / _group_order(d)


def _check_budget(cost: float, budget: int | None, what: str) -> None:
    budget = budget_from_env() if budget is None else budget
    if cost > budget:
        raise BudgetExceeded(
            f"{what} needs ~{cost:.3g} path-steps, budget is {budget:.3g}; "
            "use engine=mcmc (or raise SAWLAB_BUDGET)"
        )


def canonical_prefixes(d: int, depth: int):
    """Canonical step prefixes of the given depth as (codes, weight, axes_used).

    A walk is canonical when each newly used axis is entered in the + direction
    and axes are introduced in order; the weight counts the symmetric images.
    """
    out = [((), 1, 0)]
    for _ in range(depth):
        nxt = []
        for codes, w, k in out:
            for axis in range(k):
                nxt.append((codes + (2 * axis,), w, k))
                nxt.append((codes + (2 * axis + 1,), w, k))
            if k < d:
                nxt.append((codes + (2 * k,), w * 2 * (d - k), k + 1))
        out = nxt
    return out


def _run_branches(fn, d, n, threads):
    prefixes = canonical_prefixes(d, min(2, n))
    args = [(np.array(c, dtype=np.int64), w, k) for c, w, k in prefixes]
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda a: fn(*a), args))
    return [fn(*a) for a in args]


@lru_cache(maxsize=64)
def _joint_table(d: int, n: int, threads: int) -> np.ndarray:
    jmax = n * (n + 1) // 2

    def branch(prefix, w, k):
        hist = np.zeros((jmax + 1, n * n + 1), dtype=np.int64)
        _kernels.enumerate_branch(d, n, prefix, w, k, hist)
        return hist

    parts = _run_branches(branch, d, n, threads)
    table = np.zeros((jmax + 1, n * n + 1), dtype=np.int64)
    for part in parts:  # fixed branch order; integer sums are exact anyway
        table += part
    table.setflags(write=False)
    return table


def joint_table(d: int, n: int, budget: int | None = None, threads: int = 1) -> np.ndarray:
    """Counts ``T[J, r2]`` of walks with SILT J and squared end distance r2."""
    if d < 1 or n < 0:
        raise ValueError("need d >= 1 and n >= 0")
    _check_budget(enumeration_cost(d, n), budget, f"enumeration of d={d}, n={n}")
    return _joint_table(d, n, max(1, threads))


@dataclass
class ExactMoments:
    d: int
    n: int
    beta: float
    Z: float
    mean_chi: float
    mean_chi2: float
    mean_J: float
    J_histogram: dict = field(repr=False)

    def to_json(self) -> str:
        hist = [{"J": j, "count": c} for j, (_, c) in sorted(self.J_histogram.items())]
        return json.dumps(
            {"d": self.d, "n": self.n, "beta": self.beta, "Z": self.Z,
             "mean_chi": self.mean_chi, "mean_chi2": self.mean_chi2,
             "mean_J": self.mean_J, "histogram": hist},
            sort_keys=False,
        )


def moments_from_table(table: np.ndarray, d: int, n: int, beta: float) -> ExactMoments:
    J = np.arange(table.shape[0], dtype=np.float64)
    r2 = np.arange(table.shape[1], dtype=np.float64)
    w = np.exp(-beta * J)[:, None] * table
    total = w.sum()
    Z = total / float(2 * d) ** n
    mean_chi = (w * np.sqrt(r2)[None, :]).sum() / total
    mean_chi2 = (w * r2[None, :]).sum() / total
    mean_J = (w * J[:, None]).sum() / total
    counts = table.sum(axis=1)
    hist = {int(j): (float(math.exp(-beta * j) * c), int(c))
            for j, c in enumerate(counts.tolist()) if c}
    return ExactMoments(d, n, float(beta), float(Z), float(mean_chi), float(mean_chi2),
                        float(mean_J), hist)


def enumerate_ensemble(d: int, n: int, beta: float, budget: int | None = None,
                       threads: int = 1) -> ExactMoments:
    """Exact Q^beta_n moments by summing over all (2d)^n walks."""
    return moments_from_table(joint_table(d, n, budget, threads), d, n, beta)


@dataclass(frozen=True)
class SawCount:
    d: int
    n: int
    count: int

    @property
    def connective_estimate(self) -> float:
        return self.count ** (1.0 / self.n) if self.n else float("nan")


@lru_cache(maxsize=128)
def _saw_count(d: int, n: int) -> int:
    parts = _run_branches(lambda p, w, k: _kernels.saw_count_branch(d, n, p, w, k), d, n, 1)
    return int(sum(parts))


def saw_count(d: int, n: int, budget: int | None = None) -> SawCount:
    """Number c_n of n-step self-avoiding walks, by depth-first search."""
    _check_budget(saw_search_cost(d, n), budget, f"SAW search d={d}, n={n}")
    return SawCount(d, n, _saw_count(d, n))


# ---------------------------------------------------------------------------
# Return probabilities and E_0 J_n
# ---------------------------------------------------------------------------

def _trim(dist: np.ndarray, lo: int, tol: float):
    """Drop tails whose mass is below ``tol``; return (array, new offset)."""
    keep = np.nonzero(dist >= tol)[0]
    if keep.size == 0:
        return dist, lo
    a, b = keep[0], keep[-1] + 1
    return dist[a:b].copy(), lo + a


def one_dim_return_probabilities(n: int, tol: float = 1e-16) -> np.ndarray:
    """``q[m] = P(X_m = 0)`` for the simple walk on Z, m = 0..n, by convolution."""
    q = np.zeros(n + 1)
    dist = np.ones(1)
    lo = 0
    q[0] = 1.0
    for m in range(1, n + 1):
        new = np.zeros(dist.size + 2)
        new[:-2] += 0.5 * dist
        new[2:] += 0.5 * dist
        dist, lo = _trim(new, lo - 1, tol)
        if lo <= 0 < lo + dist.size:
            q[m] = dist[-lo]
    return q


def return_probabilities(d: int, n: int) -> np.ndarray:
    """``p[m] = P(S_m = 0)`` on Z^d for m = 0..n.

    Each step picks an axis uniformly, so the number of steps spent on the last
    axis is Binomial(m, 1/d) and the walk returns iff every axis returns:
    ``p_d[m] = sum_k Binom(m, k; 1/d) q[k] p_{d-1}[m - k]``.
    """
    q = one_dim_return_probabilities(n)
    p = q.copy()
    for j in range(2, d + 1):
        nxt = np.zeros(n + 1)
        for m in range(n + 1):
            k = np.arange(m + 1)
            nxt[m] = np.dot(binom.pmf(k, m, 1.0 / j) * q[: m + 1], p[m::-1])
        p = nxt
    return p


def box_return_probabilities(d: int, n: int, tol: float = 1e-16) -> np.ndarray:
    """Same quantity by dense convolution of the full d-dimensional law.

    Cost grows like n^(d+1); intended for small n as an independent check.
    """
    dist = np.ones((1,) * d)
    p = np.zeros(n + 1)
    p[0] = 1.0
    for m in range(1, n + 1):
        new = np.zeros(tuple(s + 2 for s in dist.shape))
        inner = tuple(slice(1, -1) for _ in range(d))
        for axis in range(d):
            for shift in (slice(0, -2), slice(2, None)):
                idx = list(inner)
                idx[axis] = shift
                new[tuple(idx)] += dist / (2 * d)
        new[new < tol] = 0.0
        dist = new
        if m % 2 == 0:
            p[m] = dist[tuple(s // 2 for s in dist.shape)]
    return p


def srw_silt_mean(d: int, n: int, cap: int = DEFAULT_SILT_CAP) -> float:
    """Exact E_0 J_n = sum_{m=1}^n (n + 1 - m) P(S_m = 0)."""
    if n > cap:
        raise CapExceeded(f"n={n} exceeds the cap {cap} for srw_silt_mean")
    if n == 0:
        return 0.0
    p = return_probabilities(d, n)
    m = np.arange(1, n + 1)
    return float(np.dot(n + 1 - m, p[1:]))


# ---------------------------------------------------------------------------
# SILT band checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UpperBandReport:
    d: int
    n: int
    beta: float
    B: float
    lhs: float
    rhs: float
    holds: bool
    B_star: float
    B_star_bracket: tuple

    @property
    def in_hypothesis(self) -> bool:
        return self.B > self.B_star


@dataclass(frozen=True)
class LowerBandReport:
    d: int
    n: int
    beta: float
    delta: float
    b: float
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("inf")


def _weighted_J(d, n, beta, budget):
    counts = joint_table(d, n, budget).sum(axis=1)
    J = np.arange(counts.size)
    return J, counts * np.exp(-beta * J) / float(2 * d) ** n


def silt_band_check(d: int, n: int, beta: float, B: float,
                    budget: int | None = None) -> UpperBandReport:
    """Compare E_0(e^{-beta J} 1{J > Bn}) against E_0(e^{-beta J} 1{J = 0})."""
    J, w = _weighted_J(d, n, beta, budget)
    lhs = float(w[J > B * n].sum())
    rhs = float(w[0])
    if beta > 0:
        omega = math.log(saw_count(d, n, budget).connective_estimate) if n else math.log(d)
        b_star = (math.log(2 * d) - omega) / beta
        bracket = ((math.log(2 * d) - math.log(2 * d - 1)) / beta,
                   (math.log(2 * d) - math.log(d)) / beta)
    else:
        b_star, bracket = float("inf"), (float("inf"), float("inf"))
    return UpperBandReport(d, n, beta, B, lhs, rhs, lhs < rhs, b_star, bracket)


def silt_lower_band_check(d: int, n: int, beta: float, delta: float, b: float,
                          budget: int | None = None) -> LowerBandReport:
    """Exact E_0(e^{-beta J} 1{J <= n^(1-delta)}) and E_0(e^{-beta J} 1{J < bn})."""
    J, w = _weighted_J(d, n, beta, budget)
    lhs = float(w[J <= n ** (1.0 - delta)].sum())
    rhs = float(w[J < b * n].sum())
    return LowerBandReport(d, n, beta, delta, b, lhs, rhs)
