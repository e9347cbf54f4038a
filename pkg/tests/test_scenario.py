import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cranmm.config import SPEED_OF_LIGHT, SystemConfig
from cranmm.scenario import (PlacementError, access_pathloss, build_realization,
                             complex_gaussian, draw_access_channels, fronthaul_pathloss,
                             generate_realization, sample_topology, steering_matrix,
                             steering_vector, trial_rng, umi_nlos_pathloss_db)

# independent evaluations of the path-loss formulas, frozen
FRONTHAUL_100M_1p9GHZ = 1.5765744202613442e-08
ACCESS_200M_DB = 16.34184205487024


def test_topology_geometry():
    cfg = SystemConfig()
    topo = sample_topology(cfg, np.random.default_rng(0))
    pts = np.vstack([topo.ue_xy, topo.rrh_xy])
    assert np.all((pts >= 0) & (pts <= 1000))
    assert np.allclose(topo.cu_xy, [500, 500])
    assert np.min(np.linalg.norm(topo.rrh_xy - topo.cu_xy, axis=1)) >= 10
    d = np.linalg.norm(topo.rrh_xy[:, None] - topo.rrh_xy[None], axis=-1)
    assert np.min(d[~np.eye(cfg.L, dtype=bool)]) >= 100
    assert np.all((topo.theta >= 0) & (topo.theta < 2 * np.pi))
    assert topo.beta_access.shape == (cfg.K, cfg.L)
    assert np.all(topo.beta_access > 0) and np.all(topo.beta_fronthaul > 0)


def test_topology_deterministic():
    cfg = SystemConfig()
    a = sample_topology(cfg, trial_rng(3, 1))
    b = sample_topology(cfg, trial_rng(3, 1))
    assert np.array_equal(a.rrh_xy, b.rrh_xy) and np.array_equal(a.theta, b.theta)


def test_placement_infeasible():
    cfg = SystemConfig(L=5, area_m=100.0, min_rrh_rrh_m=100.0)
    with pytest.raises(PlacementError, match="placement infeasible"):
        sample_topology(cfg, np.random.default_rng(0))


def test_fronthaul_pathloss_examples():
    lam = SPEED_OF_LIGHT / 1.9e9
    assert fronthaul_pathloss(lam / (4 * np.pi), 1.9e9) == pytest.approx(1.0)
    assert fronthaul_pathloss(200, 1.9e9) == pytest.approx(fronthaul_pathloss(100, 1.9e9) / 4)
    assert fronthaul_pathloss(100, 1.9e9) == pytest.approx(FRONTHAUL_100M_1p9GHZ, rel=1e-12)
    assert 10 * math.log10(FRONTHAUL_100M_1p9GHZ) == pytest.approx(-78.0, abs=0.05)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_pathloss_rejects_nonpositive(d):
    with pytest.raises(ValueError):
        fronthaul_pathloss(d, 1.9e9)
    with pytest.raises(ValueError):
        access_pathloss(d, SystemConfig())


def test_access_pathloss_reference():
    got = 10 * math.log10(access_pathloss(200.0, SystemConfig()))
    assert got == pytest.approx(ACCESS_200M_DB, abs=0.01)


def test_access_slope_per_decade():
    a = umi_nlos_pathloss_db(20.0, 1.9e9, 1.5)
    b = umi_nlos_pathloss_db(200.0, 1.9e9, 1.5)
    assert b - a == pytest.approx(35.3, abs=1e-12)


@given(st.floats(1.0, 5000.0), st.floats(1.001, 10.0))
def test_pathlosses_decreasing(d, factor):
    cfg = SystemConfig()
    assert fronthaul_pathloss(d * factor, 1.9e9) < fronthaul_pathloss(d, 1.9e9)
    assert access_pathloss(d * factor, cfg) < access_pathloss(d, cfg)


def test_complex_gaussian_unit_variance():
    z = complex_gaussian(np.random.default_rng(1), (100_000,))
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.02)
    assert abs(np.mean(z)) < 0.02


def test_access_channel_moments():
    cfg = SystemConfig(K=1, L=1, N_U=2, N_H=3)
    topo = sample_topology(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    acc = np.mean([np.linalg.norm(draw_access_channels(topo, cfg, rng)[0][0]) ** 2
                   for _ in range(20_000)])
    assert acc / 6 == pytest.approx(topo.beta_access[0, 0], rel=0.03)


def test_zero_gain_gives_zero_channel():
    cfg = SystemConfig(K=1, L=1)
    topo = sample_topology(cfg, np.random.default_rng(0))
    topo = type(topo)(**{**topo.__dict__, "beta_access": np.zeros((1, 1))})
    H = draw_access_channels(topo, cfg, np.random.default_rng(0))
    assert not np.any(H[0][0])


def test_steering_examples():
    assert np.allclose(steering_vector(0.0, 7), np.ones(7))
    assert np.array_equal(steering_vector(1.3, 1), np.array([1.0 + 0j]))
    assert np.allclose(steering_vector(np.pi / 2, 2, 0.5), [1, -1])


@given(st.floats(0, 2 * np.pi), st.integers(1, 300))
def test_steering_norm(theta, n):
    b = steering_vector(theta, n)
    assert b[0] == 1
    assert np.linalg.norm(b) ** 2 == pytest.approx(n, rel=1e-12)


def test_steering_asymptotic_orthogonality():
    rng = np.random.default_rng(0)
    for _ in range(100):
        t1, t2 = rng.uniform(0, 2 * np.pi, 2)
        small = abs(np.vdot(steering_vector(t1, 10), steering_vector(t2, 10))) ** 2 / 100
        large = abs(np.vdot(steering_vector(t1, 1000), steering_vector(t2, 1000))) ** 2 / 1e6
        assert large < small


def test_realization_structure():
    cfg = SystemConfig(N_H=[1, 2, 3, 2], N_U=[1, 2, 2, 3])
    ch = generate_realization(cfg, trial_rng(0, 0))
    assert ch.B.shape == (50, 4) and ch.G.shape == (50, 4)
    assert np.allclose(np.sum(np.abs(ch.B) ** 2, axis=0), 50)
    assert np.allclose(ch.G, ch.B * np.sqrt(ch.topology.beta_fronthaul))
    for l in range(4):
        for k in range(4):
            assert ch.H[l][k].shape == (cfg.N_H[l], cfg.N_U[k])
    assert ch.stacked(3).shape == (8, 3)
    assert np.allclose(ch.B, steering_matrix(ch.topology.theta, 50))


def test_realization_reproducible_and_nc_rebuild():
    cfg = SystemConfig()
    a = generate_realization(cfg, trial_rng(5, 2))
    b = generate_realization(cfg, trial_rng(5, 2))
    assert all(np.array_equal(a.H[l][k], b.H[l][k]) for l in range(4) for k in range(4))
    c = build_realization(a.topology, a.H, cfg.with_updates(N_C=25))
    assert c.B.shape == (25, 4) and c.H is a.H
