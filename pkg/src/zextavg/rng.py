"""Deterministic seeding.

A master seed plus a tuple of integer task ids (experiment, chunk, path, ...)
names every random stream in the package, so results never depend on how the
work is split across threads or batches.

Two kinds of streams are provided:

* ``generator(master, *ids)`` -- a numpy ``Generator`` on a keyed Philox
  bit generator, used for Gaussian and uniform draws of a whole chunk.
* ``counter_words(key, streams, counter)`` -- a stateless, vectorised
  counter-based hash producing one 64-bit word per (stream, counter) pair.
  The symbolic toy system uses it so that path ``i`` sees the same bits
  whatever batch it is simulated in.
"""

from __future__ import annotations

import zlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def task_id(name: str) -> int:
    """Stable integer id for an experiment label."""
    return zlib.crc32(name.encode("utf-8"))


def seed_sequence(master: int, *ids: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(i) for i in ids))


def generator(master: int, *ids: int) -> np.random.Generator:
    """Philox generator keyed by ``(master, *ids)``."""
    key = seed_sequence(master, *ids).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stream_key(master: int, *ids: int) -> int:
    """64-bit key for :func:`counter_words`."""
    return int(seed_sequence(master, *ids).generate_state(1, dtype=np.uint64)[0])


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finaliser; uint64 arithmetic wraps
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_words(key: int, streams, counter) -> np.ndarray:
    """One pseudo-random uint64 per ``(stream, counter)``; pure function.

    ``streams`` and ``counter`` broadcast against each other.
    """
    with np.errstate(over="ignore"):
        s = np.asarray(streams, dtype=np.uint64)
        c = np.asarray(counter, dtype=np.uint64)
        base = _mix(np.uint64(key) ^ _mix(s))
        return _mix(base ^ _mix(c * _GOLDEN))
