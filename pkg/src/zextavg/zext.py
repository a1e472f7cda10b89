"""Z-extensions over probability-preserving base systems.

The skew product is ``T(omega, m) = (Tbar omega, m + phi(omega))``.  Base
points are opaque: this module only calls the base system's ``step``,
``phi`` and ``sample_invariant``.  Everything is batched -- a base point
carries ``n`` independent orbits and ``level`` is an ``(n,)`` int64 array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol

import numpy as np

_LEVEL_LIMIT = 2**62


class BaseSystem(Protocol):
    """What a base dynamical system ``(Mbar, Tbar, mubar)`` must provide."""

    phi_bound: int

    def step(self, base: Any) -> Any: ...

    def phi(self, base: Any) -> np.ndarray: ...

    def sample_invariant(self, n: int, rng: np.random.Generator) -> Any: ...

    def batch_size(self, base: Any) -> int: ...


@dataclass(frozen=True)
class ZExtensionPoint:
    base: Any
    level: np.ndarray

    def __len__(self) -> int:
        return len(self.level)


def lift(system: BaseSystem, base, level=0) -> ZExtensionPoint:
    n = system.batch_size(base)
    lev = np.broadcast_to(np.asarray(level, dtype=np.int64), (n,)).copy()
    return ZExtensionPoint(base, lev)


def step_z(p: ZExtensionPoint, system: BaseSystem) -> ZExtensionPoint:
    """One application of the skew product."""
    jump = np.asarray(system.phi(p.base), dtype=np.int64)
    level = p.level + jump
    if np.any(np.abs(level) > _LEVEL_LIMIT):
        raise OverflowError("cell level left the int64 safety range")
    return ZExtensionPoint(system.step(p.base), level)


def birkhoff_phi(base, n: int, system: BaseSystem) -> np.ndarray:
    """``S_n phi = sum_{k<n} phi(Tbar^k base)`` for every orbit in the batch."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n * system.phi_bound > _LEVEL_LIMIT:
        raise OverflowError("n * phi_bound exceeds the int64 safety range")
    total = np.zeros(system.batch_size(base), dtype=np.int64)
    for _ in range(n):
        total += np.asarray(system.phi(base), dtype=np.int64)
        base = system.step(base)
    return total


def orbit(base, n: int, system: BaseSystem) -> list[ZExtensionPoint]:
    """``n + 1`` consecutive skew-product points starting at level 0."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p = lift(system, base, 0)
    out = [p]
    for _ in range(n):
        p = step_z(p, system)
        out.append(p)
    return out
