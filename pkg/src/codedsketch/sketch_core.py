"""Pairwise-independent hashing and the classic count-sketch on vectors.

Hash functions come from the modular family

    h(x) = ((a*x + b) mod P) mod range

with ``P`` the smallest prime above ``max(domain, 2**31)``. Sign functions
are ``2*g(x) - 1`` for an independently seeded hash ``g`` into ``{0, 1}``.
Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Protocol, Sequence

import numpy as np

from .errors import ParameterError

_PRIME_FLOOR = 2**31


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for q in small:
        if n % q == 0:
            return n == q
    # deterministic Miller-Rabin for n < 3.3e24
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


@lru_cache(maxsize=None)
def next_prime(n: int) -> int:
    """Smallest prime strictly greater than ``n``."""
    c = n + 1
    while not _is_prime(c):
        c += 1
    return c


def modulus_for(domain: int) -> int:
    return next_prime(max(domain, _PRIME_FLOOR))


def derive_seeds(seed: int, count: int) -> list[int]:
    """Expand one 64-bit seed into ``count`` independent 64-bit seeds."""
    state = np.random.SeedSequence(int(seed)).generate_state(count, dtype=np.uint64)
    return [int(s) for s in state]


class IndexMap(Protocol):
    """Anything usable as a hash or sign over ``range(domain)``."""

    domain: int

    @property
    def table(self) -> np.ndarray: ...


@dataclass(frozen=True)
class HashFn:
    seed: int
    a: int
    b: int
    prime: int
    range: int
    domain: int

    def __post_init__(self):
        if not 1 <= self.a < self.prime or not 0 <= self.b < self.prime:
            raise ParameterError("hash coefficients outside [1, P-1] x [0, P-1]")
        # x -> a*x + b mod P is injective on [0, domain) only if P >= domain
        if self.prime < self.domain:
            raise ParameterError("prime must be at least the domain size")
        if self.range < 1 or self.domain < 1:
            raise ParameterError("hash range and domain must be >= 1")

    @classmethod
    def from_seed(cls, seed: int, domain: int, range: int) -> "HashFn":
        prime = modulus_for(domain)
        rng = np.random.default_rng(int(seed))
        a = int(rng.integers(1, prime))
        b = int(rng.integers(0, prime))
        return cls(seed=int(seed), a=a, b=b, prime=prime, range=range, domain=domain)

    def __call__(self, x):
        if isinstance(x, (int, np.integer)):
            return ((self.a * int(x) + self.b) % self.prime) % self.range
        x = np.asarray(x)
        if self.prime.bit_length() * 2 < 63:
            xi = x.astype(np.int64)
            return (self.a * xi + self.b) % self.prime % self.range
        flat = [((self.a * int(v) + self.b) % self.prime) % self.range for v in x.ravel()]
        return np.array(flat, dtype=np.int64).reshape(x.shape)

    @cached_property
    def table(self) -> np.ndarray:
        return np.asarray(self(np.arange(self.domain)), dtype=np.int64)


@dataclass(frozen=True)
class SignFn:
    seed: int
    hash: HashFn

    @property
    def domain(self) -> int:
        return self.hash.domain

    @classmethod
    def from_seed(cls, seed: int, domain: int) -> "SignFn":
        return cls(seed=int(seed), hash=HashFn.from_seed(seed, domain, 2))

    def __call__(self, x):
        g = self.hash(x)
        return 2 * g - 1

    @cached_property
    def table(self) -> np.ndarray:
        return 2 * self.hash.table - 1


@dataclass(frozen=True)
class FixedHash:
    """Hash given by an explicit lookup table (used for hand-built fixtures)."""

    values: tuple[int, ...]
    range: int

    def __post_init__(self):
        if any(not 0 <= v < self.range for v in self.values):
            raise ParameterError("fixed hash value outside [0, range-1]")

    @property
    def domain(self) -> int:
        return len(self.values)

    def __call__(self, x):
        return self.table[x]

    @cached_property
    def table(self) -> np.ndarray:
        return np.array(self.values, dtype=np.int64)


@dataclass(frozen=True)
class FixedSign:
    values: tuple[int, ...]

    def __post_init__(self):
        if any(v not in (-1, 1) for v in self.values):
            raise ParameterError("fixed sign values must be +1 or -1")

    @property
    def domain(self) -> int:
        return len(self.values)

    def __call__(self, x):
        return self.table[x]

    @cached_property
    def table(self) -> np.ndarray:
        return np.array(self.values, dtype=np.int64)


def _check_sizes(count: int, domain: int, range: int | None = None) -> None:
    if count < 1 or domain < 1 or (range is not None and range < 1):
        raise ParameterError(
            f"need count >= 1, domain >= 1, range >= 1; got {count}, {domain}, {range}"
        )


def make_hash_family(seed: int, count: int, domain: int, range: int) -> list[HashFn]:
    """Draw ``count`` hash functions ``[0, domain) -> [0, range)``, reproducibly."""
    _check_sizes(count, domain, range)
    return [HashFn.from_seed(s, domain, range) for s in derive_seeds(seed, count)]


def make_sign_family(seed: int, count: int, domain: int) -> list[SignFn]:
    _check_sizes(count, domain)
    return [SignFn.from_seed(s, domain) for s in derive_seeds(seed, count)]


@dataclass
class CountSketchTable:
    values: np.ndarray
    hashes: Sequence[IndexMap] = field(repr=False)
    signs: Sequence[IndexMap] = field(repr=False)

    @property
    def depth(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def domain(self) -> int:
        return self.hashes[0].domain


def count_sketch(a, hashes: Sequence[IndexMap], signs: Sequence[IndexMap]) -> CountSketchTable:
    """Build the ``d x width`` table: ``C[t, h_t(i)] += s_t(i) * a[i]``."""
    a = np.asarray(a, dtype=float)
    if len(hashes) != len(signs) or not hashes:
        raise ParameterError(f"{len(hashes)} hashes vs {len(signs)} signs")
    n = a.shape[0]
    for fn in (*hashes, *signs):
        if fn.domain != n:
            raise ParameterError(f"function domain {fn.domain} != vector length {n}")
    width = hashes[0].range
    if any(h.range != width for h in hashes):
        raise ParameterError("all hashes must share one range")
    values = np.zeros((len(hashes), width))
    for t, (h, s) in enumerate(zip(hashes, signs)):
        np.add.at(values[t], h.table, s.table * a)
    return CountSketchTable(values=values, hashes=tuple(hashes), signs=tuple(signs))


def median(values, axis: int = 0):
    """Median along ``axis``; even counts average the two middle order statistics."""
    return np.median(values, axis=axis)


def estimates(table: CountSketchTable, j: int) -> np.ndarray:
    """The ``d`` per-row estimates ``s_t(j) * C[t, h_t(j)]`` of entry ``j``."""
    if not 0 <= j < table.domain:
        raise ParameterError(f"index {j} outside [0, {table.domain - 1}]")
    return np.array(
        [s.table[j] * table.values[t, h.table[j]]
         for t, (h, s) in enumerate(zip(table.hashes, table.signs))]
    )


def recover(table: CountSketchTable, j: int) -> float:
    return float(median(estimates(table, j)))


def recover_all(table: CountSketchTable) -> np.ndarray:
    """Vectorised :func:`recover` for every index of the domain."""
    rows = np.arange(table.depth)[:, None]
    h = np.stack([fn.table for fn in table.hashes])
    s = np.stack([fn.table for fn in table.signs])
    return median(s * table.values[rows, h])


def tail_norm(a, k: int) -> float:
    """l2 norm of ``a`` after removing its ``k`` largest-magnitude entries.

    Ties in magnitude are removed lowest index first.
    """
    a = np.asarray(a, dtype=float)
    if not 0 <= k <= a.size:
        raise ParameterError(f"k={k} outside [0, {a.size}]")
    order = np.argsort(-np.abs(a), kind="stable")
    return float(np.linalg.norm(a[order[k:]]))


def sketch_size_for(epsilon: float, delta: float, log_base: float = 2) -> tuple[int, int]:
    """Width and depth ``(ceil(3/eps^2), ceil(log(1/delta)))``."""
    if not 0 < epsilon or not 0 < delta < 1:
        raise ParameterError("need epsilon > 0 and 0 < delta < 1")
    width = math.ceil(Fraction(3) / Fraction(str(epsilon)) ** 2)
    depth = math.log(1 / delta, log_base) if log_base != 2 else math.log2(1 / delta)
    if abs(depth - round(depth)) < 1e-9:
        depth = round(depth)
    return width, max(1, math.ceil(depth))
