"""Nearest-neighbour lattice walks on Z^d and their elementary observables.

Steps are stored as integer codes ``2*axis + (0 if positive else 1)`` so that
a walk is a compact int array; the signed-axis notation ``+1, -2, ...`` is used
only at the text boundary (see :func:`format_path` / :func:`parse_path`).
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


def code_to_vector(code: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=np.int64)
    v[code // 2] = 1 - 2 * (code % 2)
    return v


def step_table(d: int) -> np.ndarray:
    """(2d, d) array whose row ``c`` is the unit vector of step code ``c``."""
    table = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        table[2 * axis, axis] = 1
        table[2 * axis + 1, axis] = -1
    return table


@dataclass(frozen=True, eq=False)
class LatticePath:
    """A length-n nearest-neighbour walk on Z^d started at the origin."""

    d: int
    codes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")
        codes = np.ascontiguousarray(self.codes, dtype=np.int64).reshape(-1)
        if codes.size and (codes.min() < 0 or codes.max() >= 2 * self.d):
            raise ValueError("step code out of range for dimension %d" % self.d)
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @classmethod
    def from_steps(cls, steps) -> "LatticePath":
        """Build from an (n, d) array of signed unit vectors."""
        steps = np.asarray(steps, dtype=np.int64)
        if steps.ndim != 2:
            raise ValueError("steps must be a 2-d array of unit vectors")
        if steps.shape[0] and np.any(np.abs(steps).sum(axis=1) != 1):
            raise ValueError("every step must have L1 norm exactly 1")
        axis = np.argmax(np.abs(steps), axis=1)
        sign = steps[np.arange(len(steps)), axis]
        return cls(steps.shape[1], 2 * axis + (sign < 0))

    @classmethod
    def from_signed(cls, d: int, signed) -> "LatticePath":
        """Build from signed 1-based axis indices, e.g. ``[+1, +2, -1]``."""
        codes = []
        for s in signed:
            s = int(s)
            if s == 0 or abs(s) > d:
                raise ValueError(f"bad signed axis {s} for d={d}")
            codes.append(2 * (abs(s) - 1) + (s < 0))
        return cls(d, np.array(codes, dtype=np.int64))

    @classmethod
    def random(cls, d: int, n: int, rng: np.random.Generator) -> "LatticePath":
        return cls(d, rng.integers(0, 2 * d, size=n))

    @property
    def n(self) -> int:
        return int(self.codes.size)

    @cached_property
    def steps(self) -> np.ndarray:
        return step_table(self.d)[self.codes]

    @cached_property
    def sites(self) -> np.ndarray:
        sites = np.zeros((self.n + 1, self.d), dtype=np.int64)
        np.cumsum(self.steps, axis=0, out=sites[1:])
        sites.setflags(write=False)
        return sites

    def signed(self) -> list[int]:
        return [(c // 2 + 1) * (1 - 2 * (c % 2)) for c in self.codes.tolist()]

    def reversed(self) -> "LatticePath":
        """The same trajectory walked backwards and re-anchored at the origin."""
        return LatticePath(self.d, (self.codes ^ 1)[::-1])

    def transformed(self, perm, signs) -> "LatticePath":
        """Apply the signed coordinate permutation ``x -> signs * x[perm]``."""
        return LatticePath.from_steps(apply_symmetry(self.steps, perm, signs))

    def __eq__(self, other):
        if not isinstance(other, LatticePath):
            return NotImplemented
        return self.d == other.d and np.array_equal(self.codes, other.codes)

    def __hash__(self):
        return hash((self.d, self.codes.tobytes()))


@dataclass(frozen=True)
class SiltPointProcess:
    """Self-intersection sites with pair multiplicities C(k_x, 2)."""

    points: dict
    J: int

    def sites(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 0), dtype=np.int64)
        return np.array(sorted(self.points), dtype=np.int64)

    def masses(self) -> np.ndarray:
        return np.array([self.points[x] for x in sorted(self.points)], dtype=np.int64)


@dataclass(frozen=True)
class PathObservables:
    chi: float
    hull_radius: float
    silt: SiltPointProcess


def silt(path: LatticePath) -> SiltPointProcess:
    """Self-intersection local time J_n with its point process of sites.

    A site visited k times contributes k(k-1)/2 colliding pairs, so the
    multiplicities sum to J_n exactly.
    """
    visits = Counter(map(tuple, path.sites.tolist()))
    points = {x: k * (k - 1) // 2 for x, k in visits.items() if k > 1}
    return SiltPointProcess(points, sum(points.values()))


def endpoint_distance(path: LatticePath) -> float:
    end = path.sites[-1]
    return float(np.sqrt(np.dot(end, end)))


def hull_radius(path: LatticePath) -> float:
    """Largest distance from the start reached by any site of the walk."""
    r2 = np.einsum("ij,ij->i", path.sites, path.sites)
    return float(np.sqrt(r2.max()))


def observables(path: LatticePath) -> PathObservables:
    return PathObservables(endpoint_distance(path), hull_radius(path), silt(path))


def lattice_symmetries(d: int) -> tuple[np.ndarray, np.ndarray]:
    """All 2^d d! signed permutations of Z^d, identity first.

    Returns ``(perms, signs)``; element g acts as ``(g x)[b] = signs[b] * x[perms[b]]``.
    """
    perms, signs = [], []
    for p in itertools.permutations(range(d)):
        for s in itertools.product((1, -1), repeat=d):
            perms.append(p)
            signs.append(s)
    return np.array(perms, dtype=np.int64), np.array(signs, dtype=np.int64)


def apply_symmetry(x: np.ndarray, perm, signs) -> np.ndarray:
    x = np.asarray(x)
    return x[..., np.asarray(perm)] * np.asarray(signs)


def format_path(path: LatticePath) -> str:
    """Serialize as ``d:n:s1 s2 ... sn`` with signed 1-based axis indices."""
    body = " ".join(f"{s:+d}" for s in path.signed())
    return f"{path.d}:{path.n}:{body}"


def parse_path(line: str) -> LatticePath:
    try:
        d_text, n_text, body = line.strip().split(":", 2)
        d, n = int(d_text), int(n_text)
        signed = [int(tok) for tok in body.replace("−", "-").split()]
    except ValueError as exc:
        raise ValueError(f"malformed path line {line!r}") from exc
    if len(signed) != n:
        raise ValueError(f"path line declares n={n} but has {len(signed)} steps")
    return LatticePath.from_signed(d, signed)
