import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zextavg import billiard as bl
from zextavg.acceptance import reversal_error
from zextavg.greenkubo import estimate_sigma
from zextavg.rng import generator
from zextavg.stats import ks_distance


@pytest.fixture(scope="module")
def cfg():
    return bl.default_config()


@pytest.fixture(scope="module")
def ten_steps(cfg):
    """10^5 invariant samples pushed through ten collisions (10^6 collisions)."""
    system = bl.BilliardSystem(cfg)
    s = system.sample_invariant(100_000, generator(1, 2, 3))
    flights = []
    for _ in range(10):
        res = system.flight(s)
        flights.append(res)
        s = res.next
    return flights


def test_reflect_head_on():
    assert np.allclose(bl.reflect(np.array([-1.0, 0.0]), np.array([1.0, 0.0])), [1.0, 0.0])


def test_reflect_on_horizontal_tangent():
    h = math.sqrt(2) / 2
    assert np.allclose(bl.reflect(np.array([h, -h]), np.array([0.0, 1.0])), [h, h], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0, 2 * math.pi), b=st.floats(0, 2 * math.pi))
def test_law_of_reflection(a, b):
    v = np.array([math.cos(a), math.sin(a)])
    n = np.array([math.cos(b), math.sin(b)])
    out = bl.reflect(v, n)
    ang = lambda x, y: math.acos(max(-1.0, min(1.0, float(x @ y))))
    assert abs(ang(out, n) - (math.pi - ang(v, n))) < 1e-7  # acos loses digits near 0 and pi
    assert abs(float(out @ n) + float(v @ n)) < 1e-12
    assert np.allclose(bl.reflect(out, n), v, atol=1e-12, rtol=0)


def test_reflect_rejects_non_unit_vectors():
    with pytest.raises(ValueError):
        bl.reflect(np.array([2.0, 0.0]), np.array([1.0, 0.0]))


def test_flight_wraps_the_torus_to_the_same_disk():
    one = bl.BilliardConfig(((0.5, 0.5),), (0.3,))
    s = bl.CollisionState(np.array([0]), np.array([math.pi / 2]), np.array([[0.0, 1.0]]), np.array([0]))
    res = bl.next_collision(s, one)
    assert res.length[0] == pytest.approx(0.4, abs=1e-14)
    assert res.next.disk[0] == 0
    assert res.next.alpha[0] == pytest.approx(3 * math.pi / 2, abs=1e-12)
    assert res.cell_displacement[0] == 0


def test_radial_hit_length_and_zero_phi(cfg):
    a = 5 * math.pi / 4
    s = bl.CollisionState(np.array([1]), np.array([a]), np.array([[math.cos(a), math.sin(a)]]),
                          np.array([0]))
    res = bl.next_collision(s, cfg)
    L = math.hypot(0.5, 0.5) - 0.3
    assert res.length[0] == pytest.approx(L - 0.4, abs=1e-14)
    assert res.next.disk[0] == 0
    assert res.cell_displacement[0] == 0
    # a radial hit bounces straight back
    assert np.allclose(res.next.direction[0], [-math.cos(a), -math.sin(a)], atol=1e-12)


def test_max_flight_over_a_million_collisions(ten_steps):
    assert max(float(r.length.max()) for r in ten_steps) <= 2.5


def test_speed_is_conserved(ten_steps):
    drift = max(float(np.abs(np.linalg.norm(r.next.direction, axis=1) - 1).max()) for r in ten_steps)
    assert drift < 1e-12


def test_phi_is_bounded_integer(ten_steps, cfg):
    for r in ten_steps:
        assert r.cell_displacement.dtype.kind == "i"
        assert np.abs(r.cell_displacement).max() <= math.ceil(cfg.horizon_cap)


def test_phi_is_centred(ten_steps):
    phi = np.stack([r.cell_displacement for r in ten_steps], axis=1)
    block = phi.mean(axis=1)
    assert abs(phi.mean()) <= 3 * block.std(ddof=1) / math.sqrt(len(block))


def _mirror_shift(cfg):
    """Cell offset of each disk's point-reflected partner."""
    g = np.zeros(cfg.n_disks, dtype=np.int64)
    for k in range(cfg.n_disks):
        s = bl.CollisionState(np.array([k]), np.array([0.0]), np.array([[1.0, 0.0]]), np.array([0]))
        g[k] = bl.mirror(s, cfg).cell[0]
    return g


def _mirror_run(cfg, n_steps, dps=60):
    s = bl.sample_invariant(cfg, 6, generator(4, 5)).to_mp(dps)
    with mpmath.workdps(dps):  # the reflection adds pi at the ambient precision
        m = bl.mirror(s, cfg)
    for _ in range(n_steps):
        s1, p = bl.billiard_step(s, cfg, dps=dps)
        m, q = bl.billiard_step(m, cfg, dps=dps)
        yield s.disk, s1.disk, p, q
        s = s1


def test_mirror_orbits_have_opposite_phi_when_centres_are_on_the_axis():
    axis = bl.BilliardConfig(((0.0, 0.0), (0.0, 0.5)), (0.3, 0.18), horizon_cap=50.0)
    assert np.all(_mirror_shift(axis) == 0)
    for _, _, p, q in _mirror_run(axis, 40):
        assert np.array_equal(p, -q)


def test_mirror_orbits_have_opposite_phi_up_to_relabelling(cfg):
    """Off-axis disks change cell label under the reflection: phi o mirror = -phi + g o T - g."""
    g = _mirror_shift(cfg)
    assert g.tolist() == [0, -1]
    for d0, d1, p, q in _mirror_run(cfg, 40):
        assert np.array_equal(q, -p + g[d1] - g[d0])


def test_time_reversal_retraces_the_orbit(cfg):
    err, disks_ok = reversal_error(cfg, bl.sample_invariant(cfg, 4, generator(6, 7)), 100, 100)
    assert disks_ok and err <= 1e-8


def test_theta_marginal(cfg):
    s = bl.sample_invariant(cfg, 100_000, generator(8))
    assert ks_distance(s.outgoing_angle(), lambda th: (1 + np.sin(th)) / 2) < 0.01


def test_equal_radii_get_equal_counts():
    twin = bl.BilliardConfig(((0.0, 0.0), (0.5, 0.5)), (0.3, 0.3))
    n = 100_000
    counts = np.bincount(bl.sample_invariant(twin, n, generator(9)).disk, minlength=2)
    assert abs(counts[0] - n / 2) <= 3 * math.sqrt(n / 4)


def test_sampling_law_is_invariant(ten_steps, cfg):
    s = ten_steps[-1].next
    p = cfg.r / cfg.r.sum()
    freq = np.bincount(s.disk, minlength=cfg.n_disks) / len(s)
    assert np.abs(np.cumsum(freq) - np.cumsum(p)).max() < 0.02
    assert ks_distance(np.mod(s.alpha, 2 * np.pi), lambda a: a / (2 * np.pi)) < 0.02
    assert ks_distance(s.outgoing_angle(), lambda th: (1 + np.sin(th)) / 2) < 0.02


def test_default_geometry_blocks_the_main_corridors(cfg):
    for a, b in [(1, 0), (0, 1), (1, 1), (1, -1)]:
        assert bl.corridor_gaps(cfg, a, b) == []
    rep = bl.validate_finite_horizon(cfg, 5_000, 5, generator(10))
    assert rep.ok and rep.unblocked == [] and rep.max_flight <= 2.5


def test_open_horizontal_corridor_is_reported():
    open_cfg = bl.BilliardConfig(((0.5, 0.5),), (0.2,))
    rep = bl.validate_finite_horizon(open_cfg, 1_000, 5, generator(11))
    assert not rep.ok
    horizontal = [u for u in rep.unblocked if u["direction"] == [1, 0]]
    assert horizontal and any(lo <= 0.0 + 1.0 and hi >= 0.0 for lo, hi in
                              (u["offset_interval"] for u in horizontal))
    assert "unblocked" in rep.to_json()


def test_removing_a_disk_never_shortens_flights(cfg):
    full = bl.validate_finite_horizon(cfg, 2_000, 5, generator(12))
    for k in range(cfg.n_disks):
        fewer = bl.validate_finite_horizon(cfg.without(k), 2_000, 5, generator(12))
        assert fewer.max_flight >= full.max_flight


def test_invalid_geometries():
    with pytest.raises(bl.GeometryError):
        bl.BilliardConfig(((0.0, 0.0),), (0.6,))
    with pytest.raises(bl.GeometryError):
        bl.BilliardConfig(((0.0, 0.0), (0.5, 0.5)), (0.4, -0.1))
    with pytest.raises(bl.GeometryError):
        bl.BilliardConfig(((0.1, 0.0),), (0.2,))  # no point symmetry


def test_config_round_trip(cfg):
    assert bl.BilliardConfig.from_dict(cfg.to_dict()) == cfg


def test_horizon_violation_without_resampling():
    open_cfg = bl.BilliardConfig(((0.5, 0.5),), (0.2,), horizon_cap=3.0)
    # leave the top of the disk with a small upward slope into the open corridor
    a = 0.01
    s = bl.CollisionState(np.array([0]), np.array([math.pi / 2]), np.array([[math.cos(a), math.sin(a)]]),
                          np.array([0]))
    with pytest.raises(bl.HorizonViolation):
        bl.next_collision(s, open_cfg)


def test_billiard_sigma_is_positive_and_stable(cfg):
    """Sigma summed to k_max = 20 and 40 agrees within 10% and is positive."""
    n = 1_000_000
    s20, se20 = estimate_sigma(bl.BilliardSystem(cfg), 20, n, generator(13), return_stderr=True)
    s40, se40 = estimate_sigma(bl.BilliardSystem(cfg), 40, n, generator(13), return_stderr=True)
    assert s20 > 0 and s40 > 0
    assert abs(s40 - s20) <= 0.1 * s20, f"Sigma_20 = {s20:.5f} +- {se20:.5f}, Sigma_40 = {s40:.5f} +- {se40:.5f}"
