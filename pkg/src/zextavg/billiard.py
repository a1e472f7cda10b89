"""Finite-horizon Z-periodic Lorentz gas with circular scatterers.

The table is the cylinder ``R x (R/Z)``; disks with centres in the unit cell
are repeated with period 1 in both directions.  A collision state stores
which disk was hit, the angle of the impact point on its boundary, the
outgoing unit velocity and the integer x-cell of the disk copy.  The step
function of the Z-extension is the change of that cell index.

All routines are batched over orbits.  ``dps`` switches the arithmetic to
mpmath with that many decimal digits (object arrays), which is what long
time-reversal checks need: the map is chaotic, so double precision loses
the orbit after a few dozen collisions.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

GRAZING_TOL = 1e-10
UNIT_TOL = 1e-9
DISJOINT_MARGIN = 1e-6


class GeometryError(ValueError):
    """Invalid scatterer configuration."""


class HorizonViolation(RuntimeError):
    def __init__(self, msg: str, index: np.ndarray):
        super().__init__(msg)
        self.index = index


class GrazingCollision(RuntimeError):
    def __init__(self, msg: str, index: np.ndarray):
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True)
class BilliardConfig:
    centers: tuple
    radii: tuple
    horizon_cap: float = 3.0
    symmetry_required: bool = True

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if len(c) != len(r) or len(r) == 0:
            raise GeometryError("need one radius per disk and at least one disk")
        if np.any(r <= 0):
            raise GeometryError("radii must be positive")
        if np.any((c < 0) | (c >= 1)):
            raise GeometryError("disk centres must lie in the fundamental cell [0,1)^2")
        if not self.horizon_cap > 0:
            raise GeometryError("horizon_cap must be positive")
        object.__setattr__(self, "centers", tuple(map(tuple, c.tolist())))
        object.__setattr__(self, "radii", tuple(r.tolist()))
        self._check_disjoint(c, r)
        if self.symmetry_required:
            self._check_symmetric(c, r)

    @staticmethod
    def _check_disjoint(c, r):
        reach = int(math.ceil(2 * r.max())) + 1
        for i in range(len(r)):
            for j in range(i, len(r)):
                for ox in range(-reach, reach + 1):
                    for oy in range(-reach, reach + 1):
                        if i == j and ox == 0 and oy == 0:
                            continue
                        d = math.hypot(c[j, 0] + ox - c[i, 0], c[j, 1] + oy - c[i, 1])
                        if d < r[i] + r[j] + DISJOINT_MARGIN:
                            raise GeometryError(
                                f"disks {i} and {j} (image offset {ox},{oy}) overlap or touch: "
                                f"gap {d - r[i] - r[j]:.3g}")

    @staticmethod
    def _check_symmetric(c, r):
        for k in range(len(r)):
            target = np.mod(-c[k], 1.0)
            d = np.abs(((c - target) + 0.5) % 1.0 - 0.5).max(axis=1)
            if not np.any((d < 1e-12) & (np.abs(r - r[k]) < 1e-12)):
                raise GeometryError(f"disk {k} has no partner under (x,y) -> (-x,-y) mod 1")

    @property
    def n_disks(self) -> int:
        return len(self.radii)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.centers)

    @property
    def r(self) -> np.ndarray:
        return np.asarray(self.radii)

    def without(self, k: int) -> "BilliardConfig":
        keep = [i for i in range(self.n_disks) if i != k]
        return BilliardConfig(tuple(self.centers[i] for i in keep),
                              tuple(self.radii[i] for i in keep),
                              self.horizon_cap, symmetry_required=False)

    def to_dict(self) -> dict:
        return {"disks": [{"center": list(c), "radius": r} for c, r in zip(self.centers, self.radii)],
                "horizon_cap": self.horizon_cap, "symmetry_required": self.symmetry_required}

    @classmethod
    def from_dict(cls, d: dict) -> "BilliardConfig":
        disks = d["disks"]
        return cls(tuple(tuple(x["center"]) for x in disks), tuple(x["radius"] for x in disks),
                   float(d.get("horizon_cap", 3.0)), bool(d.get("symmetry_required", True)))


def default_config() -> BilliardConfig:
    return BilliardConfig(((0.0, 0.0), (0.5, 0.5)), (0.4, 0.3))


@dataclass(frozen=True)
class CollisionState:
    disk: np.ndarray
    alpha: np.ndarray
    direction: np.ndarray
    cell: np.ndarray
    _flight: object = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.disk)

    @property
    def image_offset(self) -> np.ndarray:
        # y copies are identified (torus direction)
        return np.stack([self.cell, np.zeros_like(self.cell)], axis=1)

    def normal(self) -> np.ndarray:
        return _stack(_cos(self.alpha), _sin(self.alpha))

    def position(self, cfg: BilliardConfig) -> np.ndarray:
        """Impact point in unfolded coordinates (x includes the cell, y in the cell copy)."""
        c, r = _geometry(cfg, self.alpha)
        k = self.disk
        return _stack(c[k, 0] + self.cell + r[k] * _cos(self.alpha),
                      c[k, 1] + r[k] * _sin(self.alpha))

    def outgoing_angle(self) -> np.ndarray:
        """Angle in (-pi/2, pi/2) between the outgoing velocity and the normal."""
        n = self.normal()
        v = self.direction
        return _atan2(n[:, 0] * v[:, 1] - n[:, 1] * v[:, 0], (n * v).sum(axis=1))

    def take(self, idx) -> "CollisionState":
        return CollisionState(self.disk[idx], self.alpha[idx], self.direction[idx], self.cell[idx])

    def put(self, idx, other: "CollisionState") -> "CollisionState":
        d, a, v, c = (self.disk.copy(), self.alpha.copy(), self.direction.copy(), self.cell.copy())
        d[idx], a[idx], v[idx], c[idx] = other.disk, other.alpha, other.direction, other.cell
        return CollisionState(d, a, v, c)

    def to_mp(self, dps: int) -> "CollisionState":
        with mpmath.workdps(dps):
            conv = np.frompyfunc(lambda x: mpmath.mpf(float(x)), 1, 1)
            return CollisionState(self.disk.copy(), conv(self.alpha), conv(self.direction),
                                  self.cell.copy())

    def to_float(self) -> "CollisionState":
        return CollisionState(self.disk.copy(), self.alpha.astype(float),
                              self.direction.astype(float), self.cell.copy())


@dataclass(frozen=True)
class FreeFlightResult:
    length: np.ndarray
    next: CollisionState
    cell_displacement: np.ndarray
    incoming: np.ndarray


def _is_mp(a) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


_mp_cos = np.frompyfunc(mpmath.cos, 1, 1)
_mp_sin = np.frompyfunc(mpmath.sin, 1, 1)
_mp_sqrt = np.frompyfunc(mpmath.sqrt, 1, 1)
_mp_atan2 = np.frompyfunc(mpmath.atan2, 2, 1)


def _cos(a):
    return _mp_cos(a) if _is_mp(a) else np.cos(a)


def _sin(a):
    return _mp_sin(a) if _is_mp(a) else np.sin(a)


def _sqrt(a):
    return _mp_sqrt(a) if _is_mp(a) else np.sqrt(a)


def _atan2(y, x):
    return _mp_atan2(y, x) if _is_mp(y) else np.arctan2(y, x)


def _stack(x, y):
    return np.stack([x, y], axis=1)


def _geometry(cfg: BilliardConfig, like):
    if _is_mp(like):
        conv = np.frompyfunc(lambda x: mpmath.mpf(x), 1, 1)
        return conv(cfg.c), conv(cfg.r)
    return cfg.c, cfg.r


def reflect(v, n) -> np.ndarray:
    """Specular reflection ``v - 2<v,n> n`` of incoming ``v`` off a wall with unit normal ``n``."""
    v = np.asarray(v)
    n = np.asarray(n)
    if not _is_mp(v):
        v = v.astype(float)
        n = n.astype(float)
        if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1) > UNIT_TOL) or \
                np.any(np.abs(np.linalg.norm(n, axis=-1) - 1) > UNIT_TOL):
            raise ValueError("reflect expects unit vectors")
    vn = (v * n).sum(axis=-1, keepdims=True)
    return v - 2 * vn * n


def _ring_offsets(rho: int):
    if rho == 0:
        return [(0, 0)]
    out = []
    for i in range(-rho, rho + 1):
        out += [(i, -rho), (i, rho)]
    for j in range(-rho + 1, rho):
        out += [(-rho, j), (rho, j)]
    return out


def next_collision(s: CollisionState, cfg: BilliardConfig) -> FreeFlightResult:
    """Earliest forward hit among all periodic disk copies, then reflection.

    Rings of cell offsets are scanned outwards; an orbit stops searching
    once no farther ring can beat its current best hit.  Ties go to the
    first candidate found (lowest ring, then lowest disk id).
    """
    mp = _is_mp(s.alpha)
    c, r = _geometry(cfg, s.alpha)
    rmax = float(max(cfg.radii))
    n = len(s)
    k0 = s.disk
    qx = c[k0, 0] + r[k0] * _cos(s.alpha)
    qy = c[k0, 1] + r[k0] * _sin(s.alpha)
    vx = s.direction[:, 0]
    vy = s.direction[:, 1]
    vv = vx * vx + vy * vy  # kept general so |v| = 1 + O(ulp) stays exact at any precision

    inf = mpmath.inf if mp else np.inf
    best_t = np.full(n, inf, dtype=object if mp else float)
    best_k = np.full(n, -1, dtype=np.int64)
    best_i = np.zeros(n, dtype=np.int64)
    best_j = np.zeros(n, dtype=np.int64)

    max_ring = int(math.ceil(cfg.horizon_cap + 1 + 2 * rmax))
    active = np.arange(n)
    for rho in range(max_ring + 1):
        if active.size == 0:
            break
        ax, ay, avx, avy, avv, ak0 = (qx[active], qy[active], vx[active], vy[active],
                                      vv[active], k0[active])
        for i, j in _ring_offsets(rho):
            for k in range(cfg.n_disks):
                dx = ax - (c[k, 0] + i)
                dy = ay - (c[k, 1] + j)
                b = avx * dx + avy * dy
                cc = dx * dx + dy * dy - r[k] * r[k]
                disc = b * b - avv * cc
                ok = (b < 0) & (disc > 0)
                if i == 0 and j == 0:
                    ok &= ak0 != k
                if not np.any(ok):
                    continue
                idx = active[ok]
                t = cc[ok] / (-b[ok] + _sqrt(disc[ok]))
                better = (t > 0) & (t < best_t[idx])
                idx = idx[better]
                best_t[idx] = t[better]
                best_k[idx] = k
                best_i[idx] = i
                best_j[idx] = j
        # farther rings start at distance >= rho - 2 rmax from any impact point
        active = active[best_t[active] > rho - 2 * rmax]

    bad = np.flatnonzero((best_k < 0) | (best_t > cfg.horizon_cap))
    if bad.size:
        raise HorizonViolation(f"{bad.size} orbit(s) without a hit within horizon_cap="
                               f"{cfg.horizon_cap}", bad)

    hx = qx + best_t * vx
    hy = qy + best_t * vy
    nx = (hx - (c[best_k, 0] + best_i)) / r[best_k]
    ny = (hy - (c[best_k, 1] + best_j)) / r[best_k]
    # renormalise: rounding in the hit point would otherwise leak into |v|
    nn = _sqrt(nx * nx + ny * ny)
    nx = nx / nn
    ny = ny / nn
    vn = vx * nx + vy * ny
    graze = np.flatnonzero(np.abs(np.asarray(vn, dtype=float)) < GRAZING_TOL)
    if graze.size:
        raise GrazingCollision(f"{graze.size} near-tangent collision(s)", graze)

    alpha = _atan2(ny, nx)
    if not mp:
        alpha = np.mod(alpha, 2 * np.pi)
    incoming = _stack(vx, vy)
    out = _stack(vx - 2 * vn * nx, vy - 2 * vn * ny)
    nxt = CollisionState(best_k, alpha, out, s.cell + best_i)
    return FreeFlightResult(best_t, nxt, best_i.copy(), incoming)


def billiard_step(s: CollisionState, cfg: BilliardConfig, dps: int | None = None):
    """One collision: ``(next_state, phi)`` with ``phi`` the x-cell displacement."""
    if dps is not None and not _is_mp(s.alpha):
        s = s.to_mp(dps)
    if dps is not None:
        with mpmath.workdps(dps):
            res = next_collision(s, cfg)
    else:
        res = next_collision(s, cfg)
    return res.next, res.cell_displacement


def sample_invariant(cfg: BilliardConfig, n: int, rng: np.random.Generator) -> CollisionState:
    """Draw from the collision-map invariant law ``cos(theta) dr dtheta`` on the unit cell."""
    r = cfg.r
    p = r / r.sum()
    disk = rng.choice(cfg.n_disks, size=n, p=p)
    u = rng.random((n, 2))
    alpha = 2 * np.pi * u[:, 0]
    theta = np.arcsin(2 * u[:, 1] - 1)
    direction = _stack(np.cos(alpha + theta), np.sin(alpha + theta))
    return CollisionState(disk.astype(np.int64), alpha, direction, np.zeros(n, dtype=np.int64))


def time_reverse(s: CollisionState) -> CollisionState:
    """Reverse the velocity that brought the particle in: ``(q, v) -> (q, -reflect(v))``."""
    n = s.normal()
    v = s.direction
    vn = (v * n).sum(axis=1)[:, None]
    return replace(s, direction=-(v - 2 * vn * n), _flight=None)


def mirror(s: CollisionState, cfg: BilliardConfig) -> CollisionState:
    """Image under the point reflection ``(x, y, v) -> (-x, -y, -v)``."""
    c = cfg.c
    disk = np.empty_like(s.disk)
    cell = np.empty_like(s.cell)
    for k in range(cfg.n_disks):
        target = -c[k]
        d = np.abs(((c - target) + 0.5) % 1.0 - 0.5).max(axis=1)
        match = np.flatnonzero((d < 1e-12) & (np.abs(cfg.r - cfg.r[k]) < 1e-12))
        if match.size == 0:
            raise GeometryError(f"disk {k} has no mirror partner")
        kk = int(match[0])
        shift_x = int(round(target[0] - c[kk, 0]))
        sel = s.disk == k
        disk[sel] = kk
        cell[sel] = -s.cell[sel] + shift_x
    alpha = s.alpha + (mpmath.pi if _is_mp(s.alpha) else np.pi)
    if not _is_mp(alpha):
        alpha = np.mod(alpha, 2 * np.pi)
    return CollisionState(disk, alpha, -s.direction, cell)


class BilliardSystem:
    """Sinai billiard on the torus as the base of the Lorentz-gas Z-extension."""

    def __init__(self, cfg: BilliardConfig | None = None, resample_rng: np.random.Generator | None = None):
        self.cfg = cfg or default_config()
        self.phi_bound = int(math.ceil(self.cfg.horizon_cap))
        self.resample_rng = resample_rng
        self.resampled = 0

    def flight(self, base: CollisionState) -> FreeFlightResult:
        if base._flight is None:
            while True:
                try:
                    res = next_collision(base, self.cfg)
                    break
                except (HorizonViolation, GrazingCollision) as exc:
                    if self.resample_rng is None:
                        raise
                    fresh = sample_invariant(self.cfg, exc.index.size, self.resample_rng)
                    fresh = replace(fresh, cell=base.cell[exc.index])
                    self.resampled += exc.index.size
                    warnings.warn(f"resampled {exc.index.size} orbit(s): {exc}", RuntimeWarning)
                    base = base.put(exc.index, fresh)
            object.__setattr__(base, "_flight", res)
            return res
        return base._flight

    def step(self, base: CollisionState) -> CollisionState:
        return self.flight(base).next

    def phi(self, base: CollisionState) -> np.ndarray:
        return self.flight(base).cell_displacement

    def sample_invariant(self, n: int, rng: np.random.Generator) -> CollisionState:
        return sample_invariant(self.cfg, n, rng)

    def batch_size(self, base: CollisionState) -> int:
        return len(base)


# --------------------------------------------------------------------------
# finite-horizon certification

@dataclass
class HorizonReport:
    max_flight: float
    n_collisions: int
    q_max: int
    checked_directions: int
    unblocked: list
    ok: bool

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)


def _primitive_directions(q_max: int):
    for a in range(0, q_max + 1):
        for b in range(-q_max, q_max + 1):
            if a == 0 and b <= 0:
                continue
            if math.gcd(a, abs(b)) == 1:
                yield a, b


def corridor_gaps(cfg: BilliardConfig, a: int, b: int) -> list[tuple[float, float]]:
    """Uncovered offset intervals for closed geodesics with direction ``(a, b)``.

    Lines of direction ``(a, b)`` are the level sets of ``c = a*y - b*x mod 1``;
    a disk of radius ``r`` covers offsets within ``r * |(a, b)|`` of its own.
    """
    norm = math.hypot(a, b)
    intervals = []
    for (cx, cy), r in zip(cfg.centers, cfg.radii):
        half = r * norm
        if half >= 0.5:
            return []
        mid = (a * cy - b * cx) % 1.0
        lo, hi = mid - half, mid + half
        if lo < 0:
            intervals += [(lo + 1, 1.0), (0.0, hi)]
        elif hi > 1:
            intervals += [(lo, 1.0), (0.0, hi - 1)]
        else:
            intervals.append((lo, hi))
    intervals.sort()
    gaps = []
    reach = 0.0
    for lo, hi in intervals:
        if lo > reach:
            gaps.append((reach, lo))
        reach = max(reach, hi)
    if reach < 1.0:
        gaps.append((reach, 1.0))
    # join a gap that wraps through 0
    if len(gaps) >= 2 and gaps[0][0] == 0.0 and gaps[-1][1] == 1.0:
        first = gaps.pop(0)
        last = gaps.pop()
        gaps.append((last[0], first[1] + 1.0))
    return gaps


def validate_finite_horizon(cfg: BilliardConfig, n_samples: int = 10_000, n_steps: int = 10,
                            rng: np.random.Generator | None = None, q_max: int = 20) -> HorizonReport:
    """Statistical maximum free flight plus a corridor sweep over rational slopes."""
    rng = rng if rng is not None else np.random.default_rng(0)
    unblocked = []
    checked = 0
    for a, b in _primitive_directions(q_max):
        checked += 1
        for lo, hi in corridor_gaps(cfg, a, b):
            unblocked.append({"direction": [a, b], "slope": str(Fraction(b, a)) if a else "inf",
                              "offset_interval": [lo, hi]})
    max_flight = 0.0
    done = 0
    s = sample_invariant(cfg, n_samples, rng)
    try:
        for _ in range(n_steps):
            res = next_collision(s, cfg)
            max_flight = max(max_flight, float(res.length.max()))
            done += n_samples
            s = res.next
    except (HorizonViolation, GrazingCollision) as exc:
        if isinstance(exc, HorizonViolation):
            max_flight = math.inf
    ok = not unblocked and math.isfinite(max_flight)
    return HorizonReport(max_flight, done, q_max, checked, unblocked, ok)
