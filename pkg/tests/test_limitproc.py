import math

import numpy as np
import pytest

from zextavg.limitproc import (BrownianPath, LocalTimePath, MisalignedGrid, TimeChangedPath,
                               default_delta, ito_sqrt_a_integral, limit_y, local_time_downcrossings,
                               local_time_occupation, simulate_bm, time_changed_bm)
from zextavg.rng import generator
from zextavg.stats import scaling_regression
from zextavg.slowfast import solve_averaged


def test_zero_variance_path_is_flat():
    assert np.all(simulate_bm(0.0, 1.0, 0.01, generator(1), 5).values == 0)


def test_terminal_variance():
    n, sigma = 100_000, 1.7
    end = simulate_bm(sigma, 1.0, 0.05, generator(2), n).values[:, -1]
    se = sigma * math.sqrt(2 / n)
    assert abs(end.var() - sigma) <= 3 * se


def test_quadratic_variation():
    sigma = 2.0
    b = simulate_bm(sigma, 1.0, 1e-4, generator(3), 20)
    qv = (np.diff(b.values, axis=1) ** 2).sum(axis=1)
    assert np.all(np.abs(qv - sigma) / sigma < 0.05)
    assert abs(qv.mean() - sigma) / sigma < 0.02


def test_local_time_is_zero_away_from_the_origin():
    vals = 1.0 + 0.1 * np.sin(np.linspace(0, 7, 1001))[None, :]
    lt = local_time_occupation(BrownianPath(1e-3, 1.0, vals), delta=0.05)
    assert np.all(lt.values == 0)


def test_local_time_moments_at_small_scale():
    sigma, dt = 1.0, 1e-4
    b = simulate_bm(sigma, 1.0, dt, generator(4), 4_000)
    lt = local_time_occupation(b)
    assert lt.delta == default_delta(sigma, dt)
    assert np.all(np.diff(lt.values, axis=1) >= 0)
    mean = lt.values[:, -1].mean()
    assert abs(mean - math.sqrt(2 / (math.pi * sigma))) < 4 * lt.values[:, -1].std() / math.sqrt(4_000)


def test_downcrossing_cross_check_approaches_occupation():
    b = simulate_bm(1.0, 1.0, 1e-5, generator(5), 1_000)
    occ = local_time_occupation(b).values[:, -1].mean()
    gap = {d: abs(local_time_downcrossings(b, d).mean() - occ) / occ for d in (0.2, 0.05)}
    # biased low by roughly one unfinished excursion, i.e. O(delta)
    assert gap[0.05] < gap[0.2]
    assert gap[0.05] < 0.2


def test_local_time_plateaus_under_joint_refinement():
    """Halving dt and delta together barely moves E[L'_1] (shared path, subsampled)."""
    fine = simulate_bm(1.0, 1.0, 1e-4, generator(22), 2_000)
    means = []
    for m in (16, 4, 1):
        coarse = BrownianPath(1e-4 * m, 1.0, fine.values[:, ::m])
        means.append(local_time_occupation(coarse).values[:, -1].mean())
    assert abs(means[2] - means[1]) / means[2] < 0.03
    assert abs(means[2] - means[1]) <= abs(means[1] - means[0]) + 0.01


def test_tiny_delta_warns():
    b = simulate_bm(1.0, 0.01, 1e-4, generator(6), 2)
    with pytest.warns(RuntimeWarning):
        local_time_occupation(b, delta=1e-4)


def test_flat_local_time_gives_flat_time_change():
    L = np.zeros((3, 11))
    L[:, 4:] = 0.5
    path = time_changed_bm(LocalTimePath(0.1, 0.01, L), 2, generator(7))
    inc = path.increments
    flat = np.diff(L, axis=1) == 0
    assert np.all(inc[flat] == 0)
    assert np.all(inc[~flat] != 0)


def test_time_change_requires_monotone_clock():
    with pytest.raises(ValueError):
        time_changed_bm(LocalTimePath(0.1, 0.01, np.array([[0.0, 1.0, 0.5]])), 1, generator(8))


def test_disjoint_increments_are_uncorrelated():
    n = 20_000
    lt = local_time_occupation(simulate_bm(1.0, 1.0, 1e-3, generator(9), n))
    b = time_changed_bm(lt, 1, generator(10)).values[:, :, 0]
    x = b[:, 500] - b[:, 0]
    y = b[:, 1000] - b[:, 500]
    prod = x * y
    assert abs(prod.mean()) <= 3 * prod.std(ddof=1) / math.sqrt(n)


def test_identity_integrand_returns_the_time_changed_path():
    lt = local_time_occupation(simulate_bm(1.0, 1.0, 1e-2, generator(11), 50))
    b = time_changed_bm(lt, 2, generator(12))
    m = ito_sqrt_a_integral(np.eye(2), b)
    assert np.allclose(np.swapaxes(m.states, 0, 1), b.values, atol=1e-13, rtol=0)
    z = ito_sqrt_a_integral(np.zeros((2, 2)), b)
    assert np.all(z.states == 0)


def test_misaligned_coefficients_are_rejected():
    lt = local_time_occupation(simulate_bm(1.0, 1.0, 1e-2, generator(13), 3))
    b = time_changed_bm(lt, 1, generator(14))
    with pytest.raises(MisalignedGrid):
        ito_sqrt_a_integral(np.ones((5, 1, 1)), b)
    with pytest.raises(MisalignedGrid):
        limit_y(np.ones((5, 1, 1)), np.zeros((5, 1, 1)), 1.0, 1.0, 1e-2, generator(15), 3)


def test_odd_moments_of_the_martingale_vanish():
    n = 20_000
    T, dt = 1.0, 1e-3
    k = int(T / dt) + 1
    sa = np.abs(np.cos(np.linspace(0, 1, k)))[:, None, None]
    lp = limit_y(sa, np.zeros((k, 1, 1)), 1.0, T, dt, generator(16), n)
    m = lp.martingale[:, -1, 0]
    for p in (1, 3):
        v = m ** p
        assert abs(v.mean()) <= 3 * v.std(ddof=1) / math.sqrt(n)


def test_no_drift_means_y_is_the_martingale():
    k = 101
    sa = np.linspace(0.5, 1.5, k)[:, None, None]
    lp = limit_y(sa, np.zeros((k, 1, 1)), 1.0, 1.0, 1e-2, generator(17), 30)
    assert np.array_equal(lp.y, lp.martingale)
    assert np.allclose(lp.y_closed, lp.martingale, atol=1e-15, rtol=0)


def test_zero_diffusion_means_zero_y():
    k = 101
    lp = limit_y(np.zeros((k, 1, 1)), -np.ones((k, 1, 1)), 1.0, 1.0, 1e-2, generator(18), 10)
    assert np.all(lp.y == 0) and np.all(lp.y_closed == 0)


def test_two_constructions_converge_at_first_order():
    """Shared noise on nested grids: sup |y - y_closed| shrinks like dt."""
    T, fine = 1.0, 1e-4
    n = 100
    lt = local_time_occupation(simulate_bm(1.0, T, fine, generator(19), n))
    bl = time_changed_bm(lt, 1, generator(20))
    gaps = []
    for m in (40, 20, 10, 5):
        dt = fine * m
        w = solve_averaged([0.5], lambda x: -np.sin(x), T, dt, substeps=2)
        sa = np.abs(np.cos(w.states))[:, :, None]
        df = -np.cos(w.states)[:, :, None]
        noise = (LocalTimePath(dt, lt.delta, lt.values[:, ::m]), TimeChangedPath(dt, bl.values[:, ::m]))
        lp = limit_y(sa, df, 1.0, T, dt, generator(21), n, noise=noise)
        gaps.append((dt, float(np.abs(lp.y - lp.y_closed).max())))
    fit = scaling_regression(gaps)
    assert 0.8 <= fit.slope <= 1.2
