"""Slow-fast ODEs driven by a Z-extension, their averaged limit and error.

The perturbed equation is ``x' = F(x, T^{floor(t/eps)} omega) + Fbar(x)``:
the driving point is frozen on each slow-time segment ``[k eps, (k+1) eps)``
and the resulting smooth ODE is advanced with classical RK4.  The averaged
equation ``w' = Fbar(w)`` uses the same segment grid so that the error
``e = x - w`` can be formed pointwise.

Array conventions: a deterministic path has states of shape ``(N, d)``, an
ensemble of ``n`` orbits has ``(N, n, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterator

import numpy as np

from .zext import ZExtensionPoint, step_z

TIME_TOL = 1e-9


class NonFinite(FloatingPointError):
    """A state left the finite floating-point range."""


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryGrid:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.states):
            raise ValueError("times and states must have the same leading length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise NonFinite("trajectory contains NaN or Inf")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def sup_norm(self) -> np.ndarray:
        """``sup_t |state_t|`` (Euclidean in the state dimension), per orbit."""
        return np.sqrt((self.states ** 2).sum(axis=-1)).max(axis=0)


@dataclass(frozen=True)
class DrivenVectorField:
    """Centred fast forcing ``F(x, omega_bar, a)`` plus averaged drift ``Fbar(x)``.

    ``F`` takes ``x`` of shape ``(n, d)``, a batched base point and an
    ``(n,)`` level array.  ``psi`` lists the level profile (finite support),
    used for truncating level sums.  ``lipschitz_bound`` is the Lipschitz
    constant of ``F`` in ``x``; ``sup_bound`` bounds ``|F|``; ``fbar_sup``
    bounds ``|Fbar|`` and hence the speed of the averaged path.
    """

    d: int
    F: Callable
    Fbar: Callable
    DFbar: Callable | None = None
    lipschitz_bound: float = 0.0
    sup_bound: float = 0.0
    fbar_sup: float = 0.0
    psi: dict = dc_field(default_factory=dict)
    name: str = "field"
    freeze: Callable | None = None
    a_exact: Callable | None = None
    meta: dict = dc_field(default_factory=dict)

    def frozen(self, base, level) -> Callable[[np.ndarray], np.ndarray]:
        if self.freeze is not None:
            return self.freeze(base, level)
        return lambda x: self.F(x, base, level)

    @property
    def C_F(self) -> float:
        """Lipschitz constant of ``s -> F(w_{eps s}, .)`` per unit slow time."""
        return self.lipschitz_bound * self.fbar_sup

    @property
    def level_support(self) -> tuple[int, int]:
        if not self.psi:
            return (0, 0)
        return (min(self.psi), max(self.psi))


def psi_levels(psi: dict, level: np.ndarray) -> np.ndarray:
    out = np.zeros(np.shape(level), dtype=float)
    for a, wgt in psi.items():
        out[level == a] = wgt
    return out


def product_field(g: Callable, h: Callable, psi: dict, fbar: Callable, *, d: int = 1,
                  dfbar: Callable | None = None, g_sup: float = 1.0, g_lip: float = 0.0,
                  h_sup: float = 1.0, h_mean: float = 0.0, fbar_sup: float = 0.0,
                  name: str = "product", a_exact: Callable | None = None,
                  meta: dict | None = None) -> DrivenVectorField:
    """``F(x, omega_bar, a) = g(x) * h(omega_bar) * psi(a)``.

    Centring ``sum_a psi(a) * E[h] = 0`` is enforced here.
    """
    psi = {int(a): float(v) for a, v in psi.items() if v != 0}
    if abs(sum(psi.values()) * h_mean) > 1e-12:
        raise ValueError("field is not centred: sum(psi) * E[h] != 0")
    psi_max = max((abs(v) for v in psi.values()), default=0.0)

    def coef(base, level):
        return np.asarray(h(base), dtype=float) * psi_levels(psi, np.asarray(level))

    def F(x, base, level):
        return g(x) * coef(base, level)[:, None]

    def freeze(base, level):
        c = coef(base, level)[:, None]
        return lambda x: g(x) * c

    return DrivenVectorField(d, F, fbar, dfbar, g_lip * h_sup * psi_max, g_sup * h_sup * psi_max,
                             fbar_sup, psi, name, freeze, a_exact, dict(meta or {}, h=h, g=g))


def zero_field(d: int = 1, fbar: Callable | None = None, dfbar: Callable | None = None,
               fbar_sup: float = 0.0) -> DrivenVectorField:
    fbar = fbar or (lambda x: np.zeros_like(x))
    return DrivenVectorField(d, lambda x, base, level: np.zeros_like(x), fbar, dfbar,
                             0.0, 0.0, fbar_sup, {}, "zero",
                             lambda base, level: (lambda x: np.zeros_like(x)),
                             lambda x: np.zeros((d, d)))


def segment_edges(T_end: float, h: float) -> np.ndarray:
    """``0, h, 2h, ..`` up to ``T_end``; a shorter final segment closes the interval."""
    if not (h > 0 and T_end > 0):
        raise ValueError("step and horizon must be positive")
    n = int(math.floor(T_end / h + TIME_TOL))
    edges = np.arange(n + 1) * h
    if n == 0 or T_end - edges[-1] > TIME_TOL * h:
        edges = np.append(edges, T_end)
    return edges


def _rk4(f, x, h, substeps):
    dt = h / substeps
    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def _record_idx(n_seg: int, record_every: int) -> np.ndarray:
    idx = np.arange(0, n_seg + 1, record_every)
    if idx[-1] != n_seg:
        idx = np.append(idx, n_seg)
    return idx


def _check(x):
    if not np.all(np.isfinite(x)):
        raise NonFinite("state left the finite range")


def solve_averaged(x0, Fbar: Callable, T_end: float, dt: float, substeps: int = 1,
                   record_every: int = 1) -> TrajectoryGrid:
    """RK4 for ``w' = Fbar(w)`` on segments of length ``dt``, each split into ``substeps``."""
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    edges = segment_edges(T_end, dt)
    rec = _record_idx(len(edges) - 1, record_every)
    out = np.empty((len(rec), x.size))
    out[0] = x
    j = 1
    f = lambda y: Fbar(y[None, :])[0]
    for k in range(len(edges) - 1):
        x = _rk4(f, x, edges[k + 1] - edges[k], substeps)
        _check(x)
        if j < len(rec) and rec[j] == k + 1:
            out[j] = x
            j += 1
    return TrajectoryGrid(edges[rec], out)


def _perturbed_path(x0, field: DrivenVectorField, omega: ZExtensionPoint, system, eps: float,
                    T_end: float, substeps: int) -> Iterator[tuple[int, np.ndarray]]:
    if eps <= 0 or substeps < 1:
        raise ValueError("eps must be positive and substeps >= 1")
    n = len(omega)
    x = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (n, field.d)).copy()
    edges = segment_edges(T_end, eps)
    yield 0, x
    for k in range(len(edges) - 1):
        fk = field.frozen(omega.base, omega.level)
        x = _rk4(lambda y: fk(y) + field.Fbar(y), x, edges[k + 1] - edges[k], substeps)
        _check(x)
        omega = step_z(omega, system)
        yield k + 1, x


def solve_perturbed(x0, field: DrivenVectorField, omega: ZExtensionPoint, system, eps: float,
                    T_end: float, substeps: int = 4, record_every: int = 1) -> TrajectoryGrid:
    """Freeze-and-integrate solution of the perturbed ODE for a batch of driving orbits."""
    edges = segment_edges(T_end, eps)
    rec = _record_idx(len(edges) - 1, record_every)
    out = np.empty((len(rec), len(omega), field.d))
    j = 0
    for k, x in _perturbed_path(x0, field, omega, system, eps, T_end, substeps):
        if j < len(rec) and rec[j] == k:
            out[j] = x
            j += 1
    return TrajectoryGrid(edges[rec], out)


def averaged_for(x0, field: DrivenVectorField, eps: float, T_end: float, substeps: int = 4,
                 record_every: int = 1) -> TrajectoryGrid:
    """Averaged solution on exactly the grid that :func:`solve_perturbed` records."""
    return solve_averaged(x0, field.Fbar, T_end, eps, substeps, record_every)


def error_process(perturbed: TrajectoryGrid, averaged: TrajectoryGrid) -> TrajectoryGrid:
    """``e_t = x_t - w_t`` on a shared time grid."""
    if len(perturbed.times) != len(averaged.times) or not np.allclose(
            perturbed.times, averaged.times, rtol=0, atol=TIME_TOL * max(1.0, perturbed.times[-1])):
        raise GridMismatch("perturbed and averaged trajectories use different time grids")
    w = averaged.states
    if perturbed.states.ndim == 3:
        w = w[:, None, :]
    return TrajectoryGrid(perturbed.times, perturbed.states - w)


def scaled_error(x0, field: DrivenVectorField, omega: ZExtensionPoint, system, eps: float,
                 T_end: float, substeps: int = 4) -> np.ndarray:
    """``eps^{-3/4} e_T`` per orbit, without storing the path."""
    x = None
    for _, x in _perturbed_path(x0, field, omega, system, eps, T_end, substeps):
        pass
    w = averaged_for(x0, field, eps, T_end, substeps, record_every=10**12).final
    return (x - w) * eps ** -0.75


def _fast_steps(eps: float, T_end: float) -> int:
    n = T_end / eps
    if abs(n - round(n)) > TIME_TOL * max(1.0, n):
        raise ValueError("T_end must be a whole number of fast steps eps")
    return int(round(n))


@dataclass(frozen=True)
class BirkhoffSums:
    v: TrajectoryGrid
    vtilde: TrajectoryGrid
    gap_sup: np.ndarray  # sup over the fast grid of |v - vtilde|, per orbit


def birkhoff_pair(x0, field: DrivenVectorField, omega: ZExtensionPoint, system, eps: float,
                  T_end: float, w: TrajectoryGrid | None = None, record_every: int = 1,
                  substeps: int = 2) -> BirkhoffSums:
    """Continuous and discrete perturbed Birkhoff sums along one pass of the orbit.

    ``v`` integrates ``F(w_{eps s}, T^{floor s} omega)`` over fast time with
    Simpson's rule on each unit interval (nodes ``k, k+1/2, k+1``), so ``w``
    must be sampled every ``eps / 2``.  ``vtilde`` sums
    ``F(w_{eps k}, T^k omega)`` for ``k = 1 .. t/eps``.  Both carry the
    factor ``eps^{1/4}``.  The gap ``|v - vtilde|`` is tracked at every fast
    step regardless of ``record_every``.
    """
    n_fast = _fast_steps(eps, T_end)
    if w is None:
        w = solve_averaged(x0, field.Fbar, T_end, eps / 2, substeps)
    if len(w.times) != 2 * n_fast + 1 or not np.allclose(
            w.times, np.arange(2 * n_fast + 1) * (eps / 2), rtol=0, atol=TIME_TOL * max(1.0, T_end)):
        raise GridMismatch("averaged path must be sampled every eps/2 on [0, T_end]")
    n = len(omega)
    ws = w.states
    scale = eps ** 0.25
    rec = _record_idx(n_fast, record_every)
    v_out = np.zeros((len(rec), n, field.d))
    vt_out = np.zeros((len(rec), n, field.d))
    v = np.zeros((n, field.d))
    vt = np.zeros((n, field.d))
    gap = np.zeros(n)
    node = lambda j: np.broadcast_to(ws[j], (n, field.d))
    fk = field.frozen(omega.base, omega.level)
    j = 1
    for k in range(n_fast):
        v = v + (scale / 6.0) * (fk(node(2 * k)) + 4.0 * fk(node(2 * k + 1)) + fk(node(2 * k + 2)))
        omega = step_z(omega, system)
        fk = field.frozen(omega.base, omega.level)
        vt = vt + scale * fk(node(2 * k + 2))
        np.maximum(gap, np.sqrt(((v - vt) ** 2).sum(axis=1)), out=gap)
        if j < len(rec) and rec[j] == k + 1:
            v_out[j] = v
            vt_out[j] = vt
            j += 1
    times = rec * eps
    return BirkhoffSums(TrajectoryGrid(times, v_out), TrajectoryGrid(times, vt_out), gap)


def perturbed_birkhoff_v(x0, field, omega, system, eps, T_end, w=None, record_every=1) -> TrajectoryGrid:
    return birkhoff_pair(x0, field, omega, system, eps, T_end, w, record_every).v


def discrete_vtilde(x0, field, omega, system, eps, T_end, w=None, record_every=1) -> TrajectoryGrid:
    return birkhoff_pair(x0, field, omega, system, eps, T_end, w, record_every).vtilde


def gap_bound(field: DrivenVectorField, eps: float, T_end: float) -> float:
    """``eps^{1/4} (T C_F + |F|_inf)``: bound on ``sup_t |v_t - vtilde_t|``."""
    return eps ** 0.25 * (T_end * field.C_F + field.sup_bound)


def zwei_shift_sensitivity(x0, field: DrivenVectorField, omega: ZExtensionPoint, system,
                           eps: float, T_end: float, substeps: int = 4) -> np.ndarray:
    """``sup_t eps^{-3/4} |e_t(x, omega) - e_t(x, T omega)|`` per orbit.

    The averaged path is common to both errors and cancels, so only the two
    perturbed solutions are integrated, side by side.
    """
    a = _perturbed_path(x0, field, omega, system, eps, T_end, substeps)
    b = _perturbed_path(x0, field, step_z(omega, system), system, eps, T_end, substeps)
    worst = np.zeros(len(omega))
    for (_, xa), (_, xb) in zip(a, b):
        np.maximum(worst, np.sqrt(((xa - xb) ** 2).sum(axis=1)), out=worst)
    return worst * eps ** -0.75
