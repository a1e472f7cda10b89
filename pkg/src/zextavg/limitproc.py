"""Limit objects: Brownian motion, its local time at 0, time-changed paths, y_t.

Ensembles are stored path-major: ``values[i, k]`` is path ``i`` at time
``k * dt``.  Local time uses the occupation-density normalisation

    L'_t(0) = lim (2 delta)^{-1} |{s <= t : |B'_s| <= delta}|,

under which ``L'_t(0)`` has the law of ``sqrt(t / Sigma) |N(0, 1)|`` when
``B'`` has variance rate ``Sigma``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .greenkubo import psd_sqrt_batch
from .slowfast import NonFinite, TrajectoryGrid

NORMALIZATION = "occupation density w.r.t. Lebesgue: L'_t(0) ~ sqrt(t/Sigma)|N(0,1)|"


class MisalignedGrid(ValueError):
    pass


@dataclass(frozen=True)
class BrownianPath:
    dt: float
    sigma: float
    values: np.ndarray  # (n_paths, N + 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.shape[1]) * self.dt


@dataclass(frozen=True)
class LocalTimePath:
    dt: float
    delta: float
    values: np.ndarray  # (n_paths, N + 1), nondecreasing

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)


@dataclass(frozen=True)
class TimeChangedPath:
    dt: float
    values: np.ndarray  # (n_paths, N + 1, d)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)


def _steps(T: float, dt: float) -> int:
    n = T / dt
    if dt <= 0 or abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError("T must be a positive whole number of steps dt")
    return int(round(n))


def default_delta(sigma: float, dt: float) -> float:
    return 2.0 * math.sqrt(sigma * dt)


def simulate_bm(sigma: float, T: float, dt: float, rng: np.random.Generator,
                n_paths: int = 1) -> BrownianPath:
    """``n_paths`` Brownian paths of variance rate ``sigma`` on ``0, dt, .., T``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    n = _steps(T, dt)
    values = np.zeros((n_paths, n + 1))
    inc = rng.standard_normal((n_paths, n))
    inc *= math.sqrt(sigma * dt)
    np.cumsum(inc, axis=1, out=values[:, 1:])
    return BrownianPath(dt, float(sigma), values)


def local_time_occupation(path: BrownianPath, delta: float | None = None) -> LocalTimePath:
    """Occupation-density local time at 0, left-point rule on the grid."""
    if delta is None:
        delta = default_delta(path.sigma, path.dt)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta < math.sqrt(path.sigma * path.dt):
        warnings.warn("delta is below the grid resolution sqrt(sigma*dt)", RuntimeWarning)
    near = np.abs(path.values[:, :-1]) <= delta
    values = np.zeros(path.values.shape)
    np.cumsum(near, axis=1, out=values[:, 1:])
    values *= path.dt / (2.0 * delta)
    return LocalTimePath(path.dt, float(delta), values)


def local_time_downcrossings(path: BrownianPath, delta: float) -> np.ndarray:
    """Cross-check estimator ``2 delta D_delta / Sigma`` from downcrossings of ``[0, delta]``.

    Only excursions above ``delta`` are counted, hence the factor 2.  The
    estimate is biased low by about one unfinished excursion (``2 delta /
    Sigma``) and by crossings missed between grid points.  Returns the final
    value per path only.
    """
    v = path.values
    state = np.zeros(len(v), dtype=np.int8)  # 1 once above delta, waiting to reach 0
    count = np.zeros(len(v), dtype=np.int64)
    for k in range(v.shape[1]):
        x = v[:, k]
        hit_low = (state == 1) & (x <= 0)
        count += hit_low
        state[hit_low] = 0
        state[x >= delta] = 1
    return 2.0 * delta * count / path.sigma


def time_changed_bm(L: LocalTimePath, d: int, rng: np.random.Generator) -> TimeChangedPath:
    """``B_{L'_t}`` for a standard ``d``-dim ``B`` independent of ``L'``.

    Each step's increment is ``sqrt(dL') xi`` with fresh normals drawn only
    where ``dL' > 0``, so flat stretches of ``L'`` stay exactly flat.
    """
    dl = L.increments
    if np.any(dl < 0):
        raise ValueError("local time must be nondecreasing")
    inc = np.zeros(dl.shape + (d,))
    live = dl > 0
    inc[live] = np.sqrt(dl[live])[:, None] * rng.standard_normal((int(live.sum()), d))
    values = np.zeros((dl.shape[0], dl.shape[1] + 1, d))
    np.cumsum(inc, axis=1, out=values[:, 1:])
    return TimeChangedPath(L.dt, values)


def sqrt_a_along(a_field: Callable, w: TrajectoryGrid) -> np.ndarray:
    """``psd_sqrt(a(w_{t_k}))`` for every grid time, shape ``(N + 1, d, d)``."""
    return psd_sqrt_batch(np.stack([np.atleast_2d(a_field(x)) for x in w.states]))


def ito_sqrt_a_integral(sqrt_a: np.ndarray, B: TimeChangedPath, times=None) -> TrajectoryGrid:
    """Forward sums ``sum_k sqrt_a_k dB_k`` along each path.

    ``sqrt_a`` is ``(N + 1, d, d)`` (or ``(d, d)`` for a constant matrix).
    """
    dB = B.increments
    n_steps = dB.shape[1]
    sa = np.asarray(sqrt_a, dtype=float)
    if sa.ndim == 2:
        sa = np.broadcast_to(sa, (n_steps + 1,) + sa.shape)
    if sa.shape[0] != n_steps + 1 or sa.shape[-1] != dB.shape[-1]:
        raise MisalignedGrid("sqrt(a) grid does not match the time-changed path")
    inc = np.einsum("kij,pkj->pki", sa[:-1], dB)
    vals = np.zeros((dB.shape[0], n_steps + 1, dB.shape[-1]))
    np.cumsum(inc, axis=1, out=vals[:, 1:])
    t = np.arange(n_steps + 1) * B.dt if times is None else times
    return TrajectoryGrid(t, np.swapaxes(vals, 0, 1))


@dataclass(frozen=True)
class LimitPaths:
    times: np.ndarray
    y: np.ndarray          # Euler-Maruyama, (n_paths, N + 1, d)
    y_closed: np.ndarray   # per-step exponential construction
    martingale: np.ndarray  # int sqrt(a) dB_{L'}
    local_time: np.ndarray  # (n_paths, N + 1)


def _drift_propagators(dfbar_k: np.ndarray, dt: float) -> np.ndarray:
    if dfbar_k.shape[-1] == 1:
        return np.exp(dfbar_k * dt)
    return np.stack([expm(m * dt) for m in dfbar_k])


def limit_y(sqrt_a: np.ndarray, dfbar: np.ndarray, sigma: float, T: float, dt: float,
            rng: np.random.Generator, n_paths: int, delta: float | None = None,
            noise: tuple | None = None) -> LimitPaths:
    """Simulate ``dy = sqrt(a(w_s)) dB_{L'_s(0)} + DFbar(w_s) y ds``, ``y_0 = 0``.

    ``sqrt_a`` and ``dfbar`` are ``(N + 1, d, d)`` along the averaged path.
    Two constructions share the noise: (i) Euler-Maruyama; (ii) ``y = M + z``
    with ``M = int sqrt(a) dB_{L'}`` and ``z`` advanced by per-step matrix
    exponentials, ``z_{k+1} = exp(A_k dt) z_k + A_k M_k dt``.  ``noise`` may
    supply ``(LocalTimePath, TimeChangedPath)`` to reuse draws.
    """
    n = _steps(T, dt)
    sqrt_a = np.asarray(sqrt_a, dtype=float)
    dfbar = np.asarray(dfbar, dtype=float)
    if sqrt_a.shape[0] != n + 1 or dfbar.shape[0] != n + 1:
        raise MisalignedGrid("coefficient grids must have T/dt + 1 rows")
    d = sqrt_a.shape[-1]
    if noise is None:
        L = local_time_occupation(simulate_bm(sigma, T, dt, rng, n_paths), delta)
        B = time_changed_bm(L, d, rng)
    else:
        L, B = noise
    dB = B.increments
    M = np.zeros((n_paths, n + 1, d))
    np.cumsum(np.einsum("kij,pkj->pki", sqrt_a[:-1], dB), axis=1, out=M[:, 1:])

    y = np.zeros((n_paths, n + 1, d))
    z = np.zeros((n_paths, d))
    yc = np.zeros((n_paths, n + 1, d))
    prop = _drift_propagators(dfbar[:-1], dt)
    for k in range(n):
        A = dfbar[k]
        y[:, k + 1] = y[:, k] + dB[:, k] @ sqrt_a[k].T + dt * (y[:, k] @ A.T)
        z = z @ prop[k].T + dt * (M[:, k] @ A.T)
        yc[:, k + 1] = M[:, k + 1] + z
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yc))):
        raise NonFinite("limit process left the finite range")
    return LimitPaths(np.arange(n + 1) * dt, y, yc, M, L.values)


def coefficients_along(a_field: Callable, dfbar: Callable, w: TrajectoryGrid):
    """``(sqrt(a(w_k)), DFbar(w_k))`` stacked over the grid of ``w``."""
    sa = sqrt_a_along(a_field, w)
    df = np.stack([np.atleast_2d(dfbar(x)) for x in w.states])
    return sa, df


def limit_y_field(a_field: Callable, w: TrajectoryGrid, dfbar: Callable, sigma: float,
                  rng: np.random.Generator, n_paths: int, delta: float | None = None) -> LimitPaths:
    """:func:`limit_y` with coefficients read off an averaged path on a uniform grid."""
    dt = float(w.times[1] - w.times[0])
    sa, df = coefficients_along(a_field, dfbar, w)
    return limit_y(sa, df, sigma, float(w.times[-1]), dt, rng, n_paths, delta)
