"""Bernoulli shift toy base system.

The doubling map ``x -> 2x mod 1`` is realised exactly on binary expansions:
a point is a 64-bit window onto an unbounded bit sequence, and one step
drops the leading bit and pulls the next one in.  Bits past any explicit
prefix come from :func:`zextavg.rng.counter_words`, so an orbit of any
length is reproducible from ``(key, stream)``.

Observables are functions of the 64-bit window that only read the leading
``depth`` bits.  They are locally constant, so exact expectations follow
from enumerating dyadic cylinders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rng import counter_words

_ONE = np.uint64(1)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
MAX_ENUMERATION_DEPTH = 30
_CHUNK = 1 << 22


class DepthOverflow(ValueError):
    """Cylinder enumeration would exceed the configured depth cap."""


@dataclass(frozen=True)
class BitStreamPoint:
    """Batch of points of the doubling map, one bit stream per orbit.

    The full bit sequence of orbit ``i`` is ``prefix[i]`` followed by the
    counter-based stream ``(key, streams[i])``.  ``window`` holds bits
    ``shift .. shift + 63`` with the leading bit in the most significant
    position.
    """

    window: np.ndarray
    key: int
    streams: np.ndarray
    shift: int = 0
    prefix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.uint8))
    invert: bool = False
    _cache: tuple = field(default=(-1, None), compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.window)

    def value(self) -> np.ndarray:
        """Point of [0, 1) encoded by the window (rounded to float64)."""
        return self.window.astype(np.float64) / 2.0**64

    def leading_bits(self, k: int) -> np.ndarray:
        """``(n, k)`` array of the first ``k`` bits, ``k <= 64``."""
        shifts = np.arange(63, 63 - k, -1, dtype=np.uint64)
        return ((self.window[:, None] >> shifts) & _ONE).astype(np.uint8)

    @classmethod
    def random(cls, n: int, key: int, first_stream: int = 0) -> "BitStreamPoint":
        streams = np.arange(first_stream, first_stream + n, dtype=np.uint64)
        window = counter_words(key, streams, 0)
        return cls(window, int(key), streams)

    @classmethod
    def from_bits(cls, bits, key: int = 0, first_stream: int = 0) -> "BitStreamPoint":
        """Points whose expansions start with the explicit ``bits`` (one row per orbit)."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        n, n_explicit = bits.shape
        streams = np.arange(first_stream, first_stream + n, dtype=np.uint64)
        pt = cls(np.zeros(n, np.uint64), int(key), streams, 0, bits)
        window = np.zeros(n, np.uint64)
        for pos in range(64):
            window = (window << _ONE) | pt._bit_at(pos)[0]
        return cls(window, int(key), streams, 0, bits)

    def _bit_at(self, pos: int):
        """Bit at absolute position ``pos`` of every sequence, with the stream word used."""
        n_explicit = self.prefix.shape[1] if self.prefix.size else 0
        if pos < n_explicit:
            bit = self.prefix[:, pos].astype(np.uint64)
            word_state = self._cache
        else:
            q = pos - n_explicit
            idx = q // 64
            cached_idx, word = self._cache
            if cached_idx != idx:
                word = counter_words(self.key, self.streams, idx)
            bit = (word >> np.uint64(63 - q % 64)) & _ONE
            word_state = (idx, word)
        if self.invert:
            bit = bit ^ _ONE
        return bit, word_state


def toy_step(p: BitStreamPoint) -> BitStreamPoint:
    """Doubling map: drop the leading bit, append the next one."""
    bit, cache = p._bit_at(p.shift + 64)
    window = (p.window << _ONE) | bit
    return BitStreamPoint(window, p.key, p.streams, p.shift + 1, p.prefix, p.invert, cache)


def flip(p: BitStreamPoint) -> BitStreamPoint:
    """Complement every bit (present and future); preserves Lebesgue measure."""
    return BitStreamPoint(p.window ^ _MASK, p.key, p.streams, p.shift, p.prefix,
                          not p.invert, p._cache)


class Observable:
    """Function of the leading ``depth`` bits of a window."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], depth: int, name: str = ""):
        if not 0 <= depth <= 64:
            raise ValueError("depth must lie in [0, 64]")
        self.fn = fn
        self.depth = depth
        self.name = name or getattr(fn, "__name__", "observable")

    def __call__(self, window: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(window, dtype=np.uint64))

    def at(self, p: BitStreamPoint) -> np.ndarray:
        return self(p.window)

    def shifted(self, k: int) -> "Observable":
        """``self o Tbar^k``."""
        if self.depth + k > 64:
            raise DepthOverflow("shifted observable would read past 64 bits")
        sk = np.uint64(k)
        return Observable(lambda w: self.fn(w << sk), self.depth + k, f"{self.name}oT^{k}")

    def __add__(self, other: "Observable") -> "Observable":
        return Observable(lambda w: self.fn(w) + other.fn(w), max(self.depth, other.depth),
                          f"({self.name}+{other.name})")

    def __mul__(self, c: float) -> "Observable":
        return Observable(lambda w: c * self.fn(w), self.depth, f"{c}*{self.name}")

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Observable({self.name}, depth={self.depth})"


def _phi(w: np.ndarray) -> np.ndarray:
    return 1 - 2 * (w >> np.uint64(63)).astype(np.int64)


toy_phi = Observable(_phi, 1, "phi")
constant_one = Observable(lambda w: np.ones(len(w)), 0, "one")
zero_observable = Observable(lambda w: np.zeros(len(w), dtype=np.int64), 0, "zero")


def cylinder_mean(fn: Callable[[np.ndarray], np.ndarray], depth: int) -> float:
    """Exact mean of a depth-``depth`` locally constant function under Lebesgue."""
    if depth > MAX_ENUMERATION_DEPTH:
        raise DepthOverflow(f"depth {depth} exceeds enumeration cap {MAX_ENUMERATION_DEPTH}")
    total = 2**depth
    shift = np.uint64(64 - depth) if depth else None
    partial = []
    for start in range(0, total, _CHUNK):
        c = np.arange(start, min(total, start + _CHUNK), dtype=np.uint64)
        window = c << shift if depth else np.zeros(1, np.uint64)
        partial.append(float(np.sum(np.asarray(fn(window), dtype=np.float64))))
    return math.fsum(partial) / total


def exact_cylinder_expectation(f: Observable, g: Observable, lag: int) -> float:
    """``E[f * g o Tbar^lag]`` by summing over all dyadic cylinders of the needed depth."""
    if lag < 0:
        raise ValueError("lag must be non-negative")
    depth = max(f.depth, g.depth + lag)
    if depth > MAX_ENUMERATION_DEPTH:
        raise DepthOverflow(f"depth {depth} exceeds enumeration cap {MAX_ENUMERATION_DEPTH}")
    gl = g.shifted(lag)
    return cylinder_mean(lambda w: np.asarray(f(w), float) * gl(w), depth)


def toy_sigma(phi: Observable = toy_phi, k_max: int = 20, convention: str = "two-sided") -> float:
    """Asymptotic variance of the Birkhoff sums of ``phi``, computed exactly.

    ``two-sided``: ``E[phi^2] + 2 sum_{k=1}^{k_max} E[phi phi o T^k]`` (CLT form).
    ``one-sided``: ``sum_{k=0}^{k_max} E[phi o T^k phi]``.
    Past lag ``depth - 1`` the two factors read disjoint bits, so those
    correlations equal ``E[phi]^2`` and are not enumerated.
    """
    last = min(k_max, max(phi.depth - 1, 0))
    corr = [exact_cylinder_expectation(phi, phi, k) for k in range(last + 1)]
    if k_max > last:
        # bits beyond the observable's depth are independent
        mean = cylinder_mean(lambda w: np.asarray(phi(w), float), phi.depth)
        corr += [mean * mean] * (k_max - last)
    if convention == "two-sided":
        return corr[0] + 2.0 * math.fsum(corr[1:])
    if convention == "one-sided":
        return math.fsum(corr)
    raise ValueError(f"unknown convention {convention!r}")


class ShiftToy:
    """Doubling map with a bounded integer step function, as a base system."""

    def __init__(self, phi: Observable = toy_phi, phi_bound: int = 1):
        self.phi_obs = phi
        self.phi_bound = int(phi_bound)

    def step(self, base: BitStreamPoint) -> BitStreamPoint:
        return toy_step(base)

    def phi(self, base: BitStreamPoint) -> np.ndarray:
        return np.asarray(self.phi_obs(base.window), dtype=np.int64)

    def sample_invariant(self, n: int, rng: np.random.Generator, first_stream: int = 0) -> BitStreamPoint:
        key = int(rng.integers(0, 2**63))
        return BitStreamPoint.random(n, key, first_stream)

    def batch_size(self, base: BitStreamPoint) -> int:
        return len(base)

    def exact_sigma(self, k_max: int = 20) -> float:
        return toy_sigma(self.phi_obs, k_max)
