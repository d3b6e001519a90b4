"""Markov-chain Monte Carlo for the weakly self-avoiding walk and the SAW.

Error bars come from batch means (32 batches per chain, pooled over chains);
the integrated autocorrelation time uses Geyer's initial positive sequence.
Chain ``i`` of a run seeded with ``seed`` draws from
``default_rng(SeedSequence(seed, spawn_key=(i,)))`` so that every chain is
reproducible on its own, independent of how chains are scheduled on threads.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidConfig
from .walk import lattice_symmetries

logger = logging.getLogger(__name__)

N_BATCHES = 32
OBSERVABLES = ("chi", "chi2", "J", "hull")


@dataclass
class ChainConfig:
    d: int
    n: int
    beta: float = 0.0
    sweeps: int = 10_000
    burn_in: int = 1_000
    move_mix: float = 0.2
    seed: int = 0
    chains: int = 4
    thin: int = 0
    max_snapshots: int = 0
    band: tuple | None = None
    band_kappa: float = 4.0
    record_states: bool = False
    histogram: bool = False

    def validate(self) -> None:
        if self.d < 1 or self.n < 1:
            raise InvalidConfig("need d >= 1 and n >= 1")
        if self.beta < 0:
            raise InvalidConfig("beta must be nonnegative")
        if self.sweeps < 1 or self.burn_in < 1 or self.burn_in >= self.sweeps:
            raise InvalidConfig("need 1 <= burn_in < sweeps")
        if not 0.0 <= self.move_mix <= 1.0:
            raise InvalidConfig("move_mix must lie in [0, 1]")
        if self.chains < 1:
            raise InvalidConfig("need at least one chain")
        if self.sweeps - self.burn_in < N_BATCHES:
            raise InvalidConfig(f"need at least {N_BATCHES} post-burn-in sweeps")
        if self.record_states and (2 * self.d) ** self.n > 2**20:
            raise InvalidConfig("record_states is only for tiny state spaces")


def chain_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def chain_seed(seed: int, index: int) -> int:
    """64-bit seed of chain ``index``, as recorded in output files."""
    state = np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


# ---------------------------------------------------------------------------
# Error analysis
# ---------------------------------------------------------------------------

def batch_means(x: np.ndarray, n_batches: int = N_BATCHES) -> np.ndarray:
    """Means of ``n_batches`` consecutive equal blocks (a short tail is dropped)."""
    x = np.asarray(x, dtype=np.float64)
    size = x.size // n_batches
    if size == 0:
        raise ValueError(f"series of length {x.size} is too short for {n_batches} batches")
    return x[: size * n_batches].reshape(n_batches, size).mean(axis=1)


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    n = x.size
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def tau_int(x: np.ndarray) -> float:
    """Integrated autocorrelation time 1 + 2 sum_t rho_t (initial positive sequence)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 4 or np.all(x == x[0]):
        return 1.0
    rho = autocorrelation(x)
    total = 0.0
    for k in range(0, rho.size // 2):
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        total += pair
    return max(2.0 * total - 1.0, 1.0 / x.size)


@dataclass(frozen=True)
class ObservableStats:
    mean: float
    stderr: float
    tau_int: float


@dataclass
class _ChainSummary:
    sums: dict
    batches: dict
    taus: dict
    counters: np.ndarray
    n_samples: int
    snapshots: np.ndarray
    J_batches: np.ndarray | None = None
    state_batches: np.ndarray | None = None


def _pool(summaries, name) -> ObservableStats:
    bm = np.concatenate([s.batches[name] for s in summaries])
    total = sum(s.n_samples for s in summaries)
    mean = sum(s.sums[name] for s in summaries) / total
    se = float(np.std(bm, ddof=1) / math.sqrt(bm.size)) if bm.size > 1 else 0.0
    tau = float(np.mean([s.taus[name] for s in summaries]))
    return ObservableStats(float(mean), se, tau)


def _hist_batches(values, n_bins, n_batches=N_BATCHES):
    size = values.size // n_batches
    out = np.zeros((n_batches, n_bins))
    for b in range(n_batches):
        out[b] = np.bincount(values[b * size:(b + 1) * size], minlength=n_bins)[:n_bins] / size
    return out


def _pool_hist(batches):
    stacked = np.concatenate(batches, axis=0)
    mean = stacked.mean(axis=0)
    se = stacked.std(axis=0, ddof=1) / math.sqrt(stacked.shape[0])
    return {int(k): (float(mean[k]), float(se[k])) for k in np.nonzero(mean)[0]}


def _summarize(series: dict, counters, snapshots, J=None, jmax=0, states=None, n_states=0):
    n_samples = next(iter(series.values())).size
    sums = {k: float(np.sum(v, dtype=np.float64)) for k, v in series.items()}
    batches = {k: batch_means(v) for k, v in series.items()}
    taus = {k: tau_int(v) for k, v in series.items()}
    jb = _hist_batches(J, jmax + 1) if J is not None else None
    sb = _hist_batches(states, n_states) if states is not None else None
    return _ChainSummary(sums, batches, taus, counters, n_samples, snapshots, jb, sb)


@dataclass
class SampleStats:
    d: int
    n: int
    beta: float
    observables: dict
    acc_A: float
    acc_B: float
    samples: int
    sweeps: int
    seed: int
    chains: int
    snapshots: np.ndarray = field(repr=False, default=None)
    J_histogram: dict | None = field(repr=False, default=None)
    state_histogram: dict | None = field(repr=False, default=None)
    debug_violations: int = 0

    def __getitem__(self, name) -> ObservableStats:
        return self.observables[name]

    def to_records(self) -> list[dict]:
        beta = self.beta if math.isfinite(self.beta) else "inf"
        return [
            {"d": self.d, "n": self.n, "beta": beta, "observable": name,
             "mean": s.mean, "stderr": s.stderr, "tau_int": s.tau_int,
             "acc_A": _finite(self.acc_A), "acc_B": _finite(self.acc_B), "sweeps": self.sweeps,
             "seed": self.seed}
            for name, s in self.observables.items()
        ]

    def to_json_lines(self) -> str:
        return "\n".join(json.dumps(r) for r in self.to_records())


def _symmetry_arrays(d):
    perms, signs = lattice_symmetries(d)
    invperms = np.argsort(perms, axis=1).astype(np.int64)
    return perms, signs, invperms


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _rate(acc, att):
    return float(acc / att) if att else float("nan")


def _finite(x):
    """JSON-safe float: None for an unavailable (NaN) rate."""
    return float(x) if math.isfinite(x) else None


def sample_weakly_saw(config: ChainConfig, threads: int = 1) -> SampleStats:
    """Estimate E_beta of chi, chi^2, J_n and hull radius by Metropolis sampling.

    With ``config.band = (lo, hi)`` the target becomes
    ``exp(-beta*J - kappa*dist(J, [lo, hi]))``, which is flat on the band: for
    beta = 0 the in-band samples are then exact draws of the simple random walk
    conditioned on ``lo <= J_n <= hi``.
    """
    config.validate()
    d, n = config.d, config.n
    perms, signs, invperms = _symmetry_arrays(d)
    post = config.sweeps - config.burn_in
    lo, hi = config.band if config.band is not None else (-1.0, math.inf)
    kappa = config.band_kappa if config.band is not None else 0.0
    jmax = n * (n + 1) // 2
    n_states = (2 * d) ** n if config.record_states else 0

    def run(index):
        rng = chain_rng(config.seed, index)
        codes = np.zeros(n, dtype=np.int64)
        out_r2 = np.zeros(post, dtype=np.int64)
        out_J = np.zeros(post, dtype=np.int64)
        out_h2 = np.zeros(post, dtype=np.int64)
        out_state = np.zeros(post if config.record_states else 1, dtype=np.int64)
        snaps = np.zeros((config.max_snapshots, n), dtype=np.int8)
        counters = np.zeros(5, dtype=np.int64)
        _kernels.weak_chain(rng, d, n, codes, config.sweeps, config.burn_in,
                            config.move_mix, float(config.beta), float(lo), float(hi),
                            float(kappa), perms, signs, invperms, config.thin, snaps,
                            config.record_states, out_r2, out_J, out_h2, out_state,
                            counters)
        series = {"chi": np.sqrt(out_r2), "chi2": out_r2, "J": out_J, "hull": np.sqrt(out_h2)}
        return _summarize(series, counters, snaps[: counters[4]],
                          J=out_J if config.histogram else None, jmax=jmax,
                          states=out_state if config.record_states else None,
                          n_states=n_states)

    summaries = _map(run, list(range(config.chains)), threads)
    counters = np.sum([s.counters for s in summaries], axis=0)
    stats = SampleStats(
        d, n, float(config.beta),
        {name: _pool(summaries, name) for name in OBSERVABLES},
        acc_A=_rate(counters[1], counters[0]), acc_B=_rate(counters[3], counters[2]),
        samples=int(sum(s.n_samples for s in summaries)), sweeps=config.sweeps,
        seed=config.seed, chains=config.chains,
        snapshots=np.concatenate([s.snapshots for s in summaries]),
    )
    if config.histogram:
        stats.J_histogram = _pool_hist([s.J_batches for s in summaries])
    if config.record_states:
        stats.state_histogram = _pool_hist([s.state_batches for s in summaries])
    logger.debug("weak chain d=%d n=%d beta=%g acc_A=%.3f acc_B=%.3f", d, n,
                 config.beta, stats.acc_A, stats.acc_B)
    return stats


def sample_saw_pivot(d: int, n: int, sweeps: int, burn_in: int, seed: int, chains: int,
                     threads: int = 1, thin: int = 0, max_snapshots: int = 0,
                     debug: bool = False) -> SampleStats:
    """Pivot-algorithm estimates over uniformly weighted n-step SAWs.

    Each chain starts from the straight rod along +e_1.  A sweep is n pivot
    attempts.  ``debug`` re-verifies self-avoidance after every sweep and
    reports the number of violations in ``debug_violations``.
    """
    ChainConfig(d, n, float("inf"), sweeps, burn_in, 1.0, seed, chains).validate()
    perms, signs, invperms = _symmetry_arrays(d)
    post = sweeps - burn_in

    def run(index):
        rng = chain_rng(seed, index)
        codes = np.zeros(n, dtype=np.int64)
        out_r2 = np.zeros(post, dtype=np.int64)
        out_h2 = np.zeros(post, dtype=np.int64)
        snaps = np.zeros((max_snapshots, n), dtype=np.int8)
        counters = np.zeros(4, dtype=np.int64)
        _kernels.saw_chain(rng, d, n, codes, sweeps, burn_in, perms, signs, invperms,
                           thin, snaps, debug, out_r2, out_h2, counters)
        series = {"chi": np.sqrt(out_r2), "chi2": out_r2,
                  "J": np.zeros(post, dtype=np.int64), "hull": np.sqrt(out_h2)}
        return _summarize(series, counters, snaps[: counters[2]])

    summaries = _map(run, list(range(chains)), threads)
    counters = np.sum([s.counters for s in summaries], axis=0)
    return SampleStats(
        d, n, float("inf"), {name: _pool(summaries, name) for name in OBSERVABLES},
        acc_A=float("nan"), acc_B=_rate(counters[1], counters[0]),
        samples=int(sum(s.n_samples for s in summaries)), sweeps=sweeps, seed=seed,
        chains=chains, snapshots=np.concatenate([s.snapshots for s in summaries]),
        debug_violations=int(counters[3]),
    )


def sample_paths(d: int, n: int, count: int, beta: float = 0.0, band: tuple | None = None,
                 seed: int = 0, chains: int = 4, thin: int = 5, burn_in: int = 2000,
                 threads: int = 1) -> np.ndarray:
    """Draw ``count`` walk snapshots (step codes) from a weakly-SAW or band chain."""
    per_chain = -(-count // chains)
    cfg = ChainConfig(d, n, beta, sweeps=burn_in + max(per_chain * thin, N_BATCHES),
                      burn_in=burn_in, seed=seed, chains=chains, thin=thin,
                      max_snapshots=per_chain, band=band)
    return sample_weakly_saw(cfg, threads).snapshots[:count]


def sample_srw(d: int, n: int, count: int, seed: int = 0,
               chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Independent simple random walks: returns (chi_n, hull radius R_n) per sample.

    beta = 0 needs no Markov chain; samples are exact and independent.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    chi = np.empty(count)
    hull = np.empty(count)
    for start in range(0, count, chunk):
        m = min(chunk, count - start)
        codes = rng.integers(0, 2 * d, size=(m, n))
        axis, sign = codes // 2, 1 - 2 * (codes % 2)
        r2 = np.zeros((m, n + 1), dtype=np.int64)
        for b in range(d):
            pos = np.zeros((m, n + 1), dtype=np.int64)
            np.cumsum(np.where(axis == b, sign, 0), axis=1, out=pos[:, 1:])
            r2 += pos * pos
        chi[start:start + m] = np.sqrt(r2[:, -1])
        hull[start:start + m] = np.sqrt(r2.max(axis=1))
    return chi, hull
