"""Green-Kubo variance of a driven field and the step-cocycle variance.

Integrals over the infinite measure ``mu = mubar x counting`` are written as
an exact finite sum over levels times a Monte Carlo average over ``mubar``:

    I(g) = sum_{a=-A..A} E_mubar[g(., a)].

For lag ``l`` the correlation ``C_ij(l)`` is estimated from samples
``omega_bar ~ mubar`` as the mean of

    sum_a F_i(x, omega_bar, a) F_j(x, Tbar^l omega_bar, a + S_l phi(omega_bar)).

All lags are built from one pass along each sampled orbit, so the lag sums
share samples (their errors are correlated, which the per-sample standard
error accounts for).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .shift import MAX_ENUMERATION_DEPTH, DepthOverflow, Observable, cylinder_mean, toy_phi
from .slowfast import DrivenVectorField
from .zext import BaseSystem

SYM_TOL = 1e-10
TAIL_RATIO = 1e-3
TRUNCATION_TOL = 1e-6


class TruncationTooSmall(ValueError):
    """Level window ``[-A, A]`` misses field weight."""


class AsymmetricMatrix(ValueError):
    pass


@dataclass(frozen=True)
class VarianceMatrix:
    entries: np.ndarray
    stderr: np.ndarray | None = None
    correlations: np.ndarray | None = None  # (l_max + 1, d, d) raw C(l)
    method: str = "symmetrized"

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.entries, dtype=float))
        object.__setattr__(self, "entries", m)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def sqrt(self) -> np.ndarray:
        return psd_sqrt(self.entries)


def _check_truncation(field: DrivenVectorField, A: int):
    outside = sum(abs(w) for a, w in field.psi.items() if abs(a) > A)
    if outside * max(field.sup_bound, 1.0) > TRUNCATION_TOL:
        raise TruncationTooSmall(f"level window [-{A}, {A}] misses weight {outside:.3g}")


def _default_A(field: DrivenVectorField) -> int:
    lo, hi = field.level_support
    return max(abs(lo), abs(hi))


def correlation_samples(field: DrivenVectorField, x, system: BaseSystem, base, l_max: int,
                        A: int | None = None) -> np.ndarray:
    """Per-sample contributions to ``C_ij(l)``, shape ``(n, l_max + 1, d, d)``.

    ``base`` is a batch of base points (usually invariant samples).
    """
    if l_max < 0:
        raise ValueError("l_max must be non-negative")
    A = _default_A(field) if A is None else int(A)
    _check_truncation(field, A)
    n = system.batch_size(base)
    d = field.d
    xs = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), (n, d))
    levels = range(-A, A + 1)
    # F at time 0 for every level in the window, reused for all lags
    F0 = {a: field.F(xs, base, np.full(n, a, dtype=np.int64)) for a in levels}
    F0 = {a: f for a, f in F0.items() if np.any(f != 0)}
    out = np.zeros((n, l_max + 1, d, d))
    S = np.zeros(n, dtype=np.int64)
    cur = base
    for l in range(l_max + 1):
        for a, fa in F0.items():
            fl = field.F(xs, cur, a + S)
            out[:, l] += fa[:, :, None] * fl[:, None, :]
        if l < l_max:
            S = S + np.asarray(system.phi(cur), dtype=np.int64)
            cur = system.step(cur)
    return out


def correlation_term(field, x, l: int, system, n_samples: int, rng: np.random.Generator,
                     A: int | None = None) -> np.ndarray:
    """Monte Carlo ``C(l)`` (``d x d``) for a single lag."""
    base = system.sample_invariant(n_samples, rng)
    return correlation_samples(field, x, system, base, l, A)[:, l].mean(axis=0)


def _combine(c: np.ndarray, method: str) -> np.ndarray:
    """Lag sum for ``c`` of shape ``(..., L+1, d, d)``."""
    ct = np.swapaxes(c, -1, -2)
    if method == "symmetrized":
        # 1/2 sum_{|l| <= l_max} (C_ij(|l|) + C_ji(|l|))
        s = c + ct
        return 0.5 * (s[..., 0, :, :] + 2.0 * s[..., 1:, :, :].sum(axis=-3))
    if method == "invertible":
        # sum_{l in Z} I(F_i F_j o T^l), with C(-l)_ij = C_ji(l)
        return c[..., 0, :, :] + (c[..., 1:, :, :] + ct[..., 1:, :, :]).sum(axis=-3)
    raise ValueError(f"unknown method {method!r}")


def estimate_a(field: DrivenVectorField, x, system: BaseSystem, l_max: int = 50,
               n_samples: int = 100_000, rng: np.random.Generator | None = None,
               A: int | None = None, method: str = "symmetrized",
               chunk: int = 50_000) -> VarianceMatrix:
    """Green-Kubo matrix ``a(x)`` with per-entry standard errors."""
    rng = rng if rng is not None else np.random.default_rng(0)
    sums = []
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        base = system.sample_invariant(m, rng)
        sums.append(correlation_samples(field, x, system, base, l_max, A))
    samples = np.concatenate(sums, axis=0)
    corr = samples.mean(axis=0)
    per = _combine(samples, method)
    a = per.mean(axis=0)
    a = 0.5 * (a + a.T)
    se = per.std(axis=0, ddof=1) / math.sqrt(len(per)) if len(per) > 1 else None
    c0 = np.abs(corr[0]).max()
    tail = np.abs(corr[-1])
    if len(samples) > 1:
        # only a tail that stands out of the sampling noise counts
        tail = tail - 3.0 * samples[:, -1].std(axis=0, ddof=1) / math.sqrt(len(samples))
    if c0 > 0 and tail.max() > TAIL_RATIO * c0:
        warnings.warn(f"correlation at l_max={l_max} is {np.abs(corr[-1]).max():.3g}, "
                      f"above {TAIL_RATIO:g} of C(0); increase l_max", RuntimeWarning)
    return VarianceMatrix(a, se, corr, method)


def a_on_grid(field, xs, system, l_max=50, n_samples=100_000, rng=None, A=None,
              method="symmetrized") -> np.ndarray:
    """Tabulate ``a(x)`` at the rows of ``xs``: returns ``(len(xs), d, d)``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    return np.stack([estimate_a(field, x, system, l_max, n_samples, rng, A, method).entries
                     for x in np.atleast_2d(xs)])


def compose_with_step(field: DrivenVectorField, system: BaseSystem) -> DrivenVectorField:
    """``F'(x, omega_bar, a) = F(x, Tbar omega_bar, a + phi(omega_bar))``, i.e. ``F o T``."""
    def F(x, base, level):
        return field.F(x, system.step(base), level + np.asarray(system.phi(base), dtype=np.int64))

    lo, hi = field.level_support
    b = system.phi_bound
    psi = {a: 1.0 for a in range(lo - b, hi + b + 1)}
    return DrivenVectorField(field.d, F, field.Fbar, field.DFbar, field.lipschitz_bound,
                             field.sup_bound, field.fbar_sup, psi, field.name + "oT")


def estimate_sigma(system: BaseSystem, k_max: int = 20, n_samples: int = 100_000,
                   rng: np.random.Generator | None = None, chunk: int = 100_000,
                   return_stderr: bool = False):
    """``E[phi^2] + 2 sum_{k=1}^{k_max} E[phi phi o Tbar^k]`` by Monte Carlo."""
    rng = rng if rng is not None else np.random.default_rng(0)
    per = []
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        base = system.sample_invariant(m, rng)
        p0 = np.asarray(system.phi(base), dtype=float)
        acc = p0 * p0
        cur = base
        for _ in range(k_max):
            cur = system.step(cur)
            acc = acc + 2.0 * p0 * np.asarray(system.phi(cur), dtype=float)
        per.append(acc)
    per = np.concatenate(per)
    val = float(per.mean())
    if return_stderr:
        return val, float(per.std(ddof=1) / math.sqrt(len(per)))
    return val


def psd_sqrt(m) -> np.ndarray:
    """Symmetric PSD square root; negative eigenvalues (noise) are clipped to 0."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise AsymmetricMatrix("matrix must be square")
    scale = max(1.0, np.abs(m).max())
    if np.abs(m - m.T).max() > SYM_TOL * scale:
        raise AsymmetricMatrix("matrix is not symmetric within tolerance")
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    r = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return 0.5 * (r + r.T)


def psd_sqrt_batch(ms: np.ndarray) -> np.ndarray:
    """:func:`psd_sqrt` over a stack ``(..., d, d)``."""
    ms = np.asarray(ms, dtype=float)
    if ms.shape[-1] == 1:
        return np.sqrt(np.clip(ms, 0.0, None))
    vals, vecs = np.linalg.eigh(0.5 * (ms + np.swapaxes(ms, -1, -2)))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))[..., None, :]) @ np.swapaxes(vecs, -1, -2)


# --------------------------------------------------------------------------
# exact oracle for product fields on the doubling map

def exact_toy_correlation(h: Observable, psi: dict, lag: int, phi: Observable = toy_phi) -> float:
    """Exact ``sum_a psi(a) psi(a + S_lag phi) E[h * h o T^lag]`` for ``g = 1`` by enumeration.

    Works directly on bit windows: the integrand reads bits ``0 .. lag + depth - 1``.
    """
    depth = max(h.depth, lag + h.depth, lag - 1 + phi.depth, 1)
    if depth > MAX_ENUMERATION_DEPTH:
        raise DepthOverflow(f"lag {lag} needs depth {depth}")
    pairs = {}
    for a, wa in psi.items():
        for b, wb in psi.items():
            pairs[b - a] = pairs.get(b - a, 0.0) + wa * wb
    hl = h.shifted(lag)

    def integrand(w):
        s = np.zeros(len(w), dtype=np.int64)
        for k in range(lag):
            s += np.asarray(phi(w << np.uint64(k)), dtype=np.int64)
        weight = np.zeros(len(w))
        for jump, c in pairs.items():
            weight[s == jump] += c
        return np.asarray(h(w), float) * np.asarray(hl(w), float) * weight

    return cylinder_mean(integrand, depth)


def exact_toy_a(h: Observable, psi: dict, l_max: int, g2: float = 1.0) -> float:
    """Scalar Green-Kubo sum ``g^2 (C(0) + 2 sum_{l=1}^{l_max} C(l))`` from the exact terms."""
    c = [exact_toy_correlation(h, psi, l) for l in range(l_max + 1)]
    return g2 * (c[0] + 2.0 * math.fsum(c[1:]))
