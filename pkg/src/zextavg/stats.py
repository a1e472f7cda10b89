"""Moments, distribution distances, bootstrap intervals and scaling fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps
from scipy.special import comb


class EmptySample(ValueError):
    pass


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray
    ids: tuple = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            raise EmptySample("sample set is empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


def _as_values(s) -> np.ndarray:
    v = s.values if isinstance(s, SampleSet) else np.asarray(s, dtype=float)
    if v.size == 0:
        raise EmptySample("sample set is empty")
    return v


@dataclass(frozen=True)
class MomentTable:
    orders: np.ndarray
    values: np.ndarray   # [mean, m2, m3, ...] (central for order >= 2)
    stderr: np.ndarray   # jackknife

    def as_dict(self) -> dict:
        return {int(k): {"value": float(v), "stderr": float(e)}
                for k, v, e in zip(self.orders, self.values, self.stderr)}


def _central_from_raw(raw: np.ndarray, up_to: int) -> np.ndarray:
    """Central moments from raw moments ``raw[..., p] = E[x^p]`` (``p = 0..up_to``)."""
    mean = raw[..., 1]
    out = [mean]
    for k in range(2, up_to + 1):
        c = sum(comb(k, j) * raw[..., j] * (-mean) ** (k - j) for j in range(k + 1))
        out.append(c)
    return np.stack(out, axis=-1)


def empirical_moments(s, up_to: int = 4) -> MomentTable:
    """Mean and central moments ``2..up_to`` with delete-one jackknife standard errors."""
    if up_to < 1:
        raise ValueError("up_to must be >= 1")
    x = _as_values(s).ravel()
    n = len(x)
    shift = x.mean()
    y = x - shift  # central moments are shift invariant; this keeps the power sums tame
    powers = np.stack([y ** p for p in range(up_to + 1)], axis=-1)
    total = powers.sum(axis=0)
    full = _central_from_raw(total / n, up_to)
    full[0] += shift
    if n > 1:
        loo = _central_from_raw((total - powers) / (n - 1), up_to)
        loo[:, 0] += shift
        se = np.sqrt((n - 1) / n * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    else:
        se = np.full(up_to, np.nan)
    return MomentTable(np.arange(1, up_to + 1), full, se)


def ks_distance(s, reference, min_size: int = 30) -> float:
    """Kolmogorov-Smirnov sup distance to a second sample or to a CDF callable."""
    x = _as_values(s).ravel()
    if len(x) < min_size:
        raise ValueError(f"need at least {min_size} samples")
    if callable(reference):
        return float(sps.kstest(x, reference).statistic)
    y = _as_values(reference).ravel()
    if len(y) < min_size:
        raise ValueError(f"need at least {min_size} reference samples")
    return float(sps.ks_2samp(x, y, method="asymp").statistic)


def ks_test(s, reference) -> tuple[float, float]:
    """``(statistic, asymptotic p-value)``."""
    x = _as_values(s).ravel()
    if callable(reference):
        r = sps.kstest(x, reference)
    else:
        r = sps.ks_2samp(x, _as_values(reference).ravel(), method="asymp")
    return float(r.statistic), float(r.pvalue)


def bootstrap_ci(s, statistic: Callable = np.mean, n_resamples: int = 1000, level: float = 0.95,
                 rng: np.random.Generator | int | None = 0) -> tuple[float, float]:
    """Percentile bootstrap interval."""
    if n_resamples < 200:
        raise ValueError("n_resamples must be at least 200")
    x = _as_values(s).ravel()
    if np.all(x == x[0]):
        c = float(statistic(x))
        return c, c
    res = sps.bootstrap((x,), statistic, n_resamples=n_resamples, confidence_level=level,
                        method="percentile", random_state=rng)
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    ci: tuple

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "ci": list(self.ci)}


def scaling_regression(pairs: Sequence[tuple[float, float]], n_boot: int = 2000,
                       level: float = 0.95, rng: np.random.Generator | int | None = 0) -> ScalingFit:
    """Least-squares slope of ``log stat`` on ``log scale`` with a residual-bootstrap CI."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise ValueError("need at least three (scale, statistic) pairs")
    if np.any(arr <= 0):
        raise ValueError("scales and statistics must be positive")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    X = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    fitted = X @ coef
    resid = ly - fitted
    rng = np.random.default_rng(rng)
    idx = rng.integers(0, len(resid), size=(n_boot, len(resid)))
    yb = fitted[None, :] + resid[idx]
    slopes = np.linalg.lstsq(X, yb.T, rcond=None)[0][1]
    alpha = (1 - level) / 2
    lo, hi = np.quantile(slopes, [alpha, 1 - alpha])
    return ScalingFit(float(coef[1]), float(coef[0]), (float(min(lo, coef[1])), float(max(hi, coef[1]))))


def qq_table(a, b, n_points: int = 99) -> np.ndarray:
    """Matched quantiles ``(p, q_a(p), q_b(p))`` for external plotting."""
    p = np.linspace(0, 1, n_points + 2)[1:-1]
    return np.column_stack([p, np.quantile(_as_values(a), p), np.quantile(_as_values(b), p)])
