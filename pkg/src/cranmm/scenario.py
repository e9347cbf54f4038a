"""Topology sampling, path loss and random channel generation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SPEED_OF_LIGHT, thermal_noise_dbm

MAX_PLACEMENT_ATTEMPTS = 10_000


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class Topology:
    ue_xy: np.ndarray          # (K, 2)
    rrh_xy: np.ndarray         # (L, 2)
    cu_xy: np.ndarray          # (2,)
    theta: np.ndarray          # (L,) angles of arrival at the CU
    beta_access: np.ndarray    # (K, L) noise-normalized access gains
    beta_fronthaul: np.ndarray  # (L,)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of every channel in the network.

    ``H[l][k]`` is the ``N_H[l] x N_U[k]`` access channel from UE ``k`` to
    RRH ``l``; ``B`` and ``G`` are the ``N_C x L`` steering and fronthaul
    channel matrices with ``G[:, l] = sqrt(beta_l) * B[:, l]``.
    """

    H: list
    B: np.ndarray
    G: np.ndarray
    topology: Topology = None

    @property
    def K(self):
        return len(self.H[0])

    @property
    def L(self):
        return len(self.H)

    def stacked(self, k):
        """Channel from UE ``k`` to all RRH antennas (``sum(N_H) x N_U[k]``)."""
        return np.vstack([self.H[l][k] for l in range(self.L)])


def fronthaul_pathloss(d_m, carrier_hz):
    """Free-space gain ``(lambda / (4 pi d))**2``."""
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"distance must be positive, got {d_m}")
    lam = SPEED_OF_LIGHT / carrier_hz
    out = (lam / (4.0 * np.pi * d)) ** 2
    return float(out) if out.ndim == 0 else out


def umi_nlos_pathloss_db(d3d_m, carrier_hz, h_ue_m):
    """UMi street-canyon NLOS path loss in dB (plain NLOS term)."""
    return (35.3 * np.log10(d3d_m) + 22.4 + 21.3 * np.log10(carrier_hz / 1e9)
            - 0.3 * (h_ue_m - 1.5))


def access_pathloss(d2d_m, cfg):
    """Access-link large-scale gain divided by the RRH thermal noise power.

    With this normalization the additive noise at each RRH antenna has unit
    variance and transmit powers stay in watts.
    """
    d2d = np.asarray(d2d_m, dtype=float)
    if np.any(d2d <= 0):
        raise ValueError(f"distance must be positive, got {d2d_m}")
    d3d = np.sqrt(d2d ** 2 + (cfg.h_rrh_m - cfg.h_ue_m) ** 2)
    pl_db = umi_nlos_pathloss_db(d3d, cfg.carrier_hz, cfg.h_ue_m)
    noise_dbm = thermal_noise_dbm(cfg.bandwidth_hz, cfg.noise_figure_db)
    out = 10.0 ** ((-pl_db - (noise_dbm - 30.0)) / 10.0)
    return float(out) if out.ndim == 0 else out


def sample_topology(cfg, rng):
    """Drop UEs and RRHs uniformly in the square with the CU at its centre.

    RRHs are placed one at a time and redrawn until they respect the RRH-CU
    and RRH-RRH separation floors; UEs have no floor.
    """
    side = cfg.area_m
    cu = np.array([side / 2.0, side / 2.0])
    ue = rng.uniform(0.0, side, size=(cfg.K, 2))

    rrh = np.empty((cfg.L, 2))
    attempts = 0
    for l in range(cfg.L):
        while True:
            attempts += 1
            if attempts > MAX_PLACEMENT_ATTEMPTS:
                raise PlacementError(
                    f"placement infeasible: could not place {cfg.L} RRHs in "
                    f"{MAX_PLACEMENT_ATTEMPTS} attempts")
            cand = rng.uniform(0.0, side, size=2)
            if np.linalg.norm(cand - cu) < cfg.min_rrh_cu_m:
                continue
            if l and np.min(np.linalg.norm(rrh[:l] - cand, axis=1)) < cfg.min_rrh_rrh_m:
                continue
            rrh[l] = cand
            break

    theta = rng.uniform(0.0, 2.0 * np.pi, size=cfg.L)

    d_access = np.linalg.norm(ue[:, None, :] - rrh[None, :, :], axis=2)
    # co-located drops would give d = 0; the height offset keeps d_3D > 0
    d_access = np.maximum(d_access, 1e-3)
    beta_access = np.atleast_2d(access_pathloss(d_access, cfg)).reshape(cfg.K, cfg.L)
    d_front = np.linalg.norm(rrh - cu, axis=1)
    beta_front = np.atleast_1d(fronthaul_pathloss(np.maximum(d_front, 1e-3), cfg.carrier_hz))
    return Topology(ue_xy=ue, rrh_xy=rrh, cu_xy=cu, theta=theta,
                    beta_access=beta_access, beta_fronthaul=beta_front)


def complex_gaussian(rng, shape):
    """i.i.d. CN(0, 1) samples."""
    re_im = rng.standard_normal((2,) + tuple(shape))
    return (re_im[0] + 1j * re_im[1]) / math.sqrt(2.0)


def draw_access_channels(topology, cfg, rng):
    """Rayleigh access channels scaled by the large-scale gains.

    Returns a nested list indexed ``[l][k]``.
    """
    H = []
    for l in range(cfg.L):
        row = []
        for k in range(cfg.K):
            g = math.sqrt(topology.beta_access[k, l])
            row.append(g * complex_gaussian(rng, (cfg.N_H[l], cfg.N_U[k])))
        H.append(row)
    return H


def steering_vector(theta, n_c, spacing_ratio=0.5):
    n = np.arange(n_c)
    return np.exp(1j * 2.0 * np.pi * n * spacing_ratio * np.sin(theta))


def steering_matrix(thetas, n_c, spacing_ratio=0.5):
    n = np.arange(n_c)[:, None]
    return np.exp(1j * 2.0 * np.pi * n * spacing_ratio * np.sin(np.asarray(thetas))[None, :])


def build_realization(topology, H, cfg):
    """Attach the fronthaul channels for ``cfg.N_C`` to a topology and access draw."""
    B = steering_matrix(topology.theta, cfg.N_C, cfg.antenna_spacing_ratio)
    G = B * np.sqrt(topology.beta_fronthaul)[None, :]
    return ChannelRealization(H=H, B=B, G=G, topology=topology)


def generate_realization(cfg, rng):
    topo = sample_topology(cfg, rng)
    H = draw_access_channels(topo, cfg, rng)
    return build_realization(topo, H, cfg)


def trial_rng(seed, trial):
    """Independent RNG stream for Monte-Carlo trial ``trial``."""
    return np.random.default_rng([int(seed), int(trial)])
