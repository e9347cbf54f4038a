"""Brute-force and closed-form references for instances small enough to enumerate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SolverSettings, SystemConfig
from .rates import DesignVariables, check_feasibility
from .scenario import ChannelRealization, steering_vector

MAX_GRID_DIM = 6


@dataclass(frozen=True)
class ScalarInstance:
    """Single UE, single RRH, one antenna on each side of the access link."""

    h: complex
    beta: float
    N_C: int
    sigma2: float
    P_UE: float
    P_H_max: float
    theta: float = 0.0

    def config(self, **solver):
        return SystemConfig(K=1, L=1, N_U=1, N_H=1, N_C=self.N_C, P_UE=self.P_UE,
                            P_H_max=self.P_H_max, sigma2_CU=self.sigma2,
                            solver=SolverSettings(**solver))

    def channels(self):
        b = steering_vector(self.theta, self.N_C)[:, None]
        return ChannelRealization(H=[[np.array([[complex(self.h)]])]], B=b,
                                  G=math.sqrt(self.beta) * b)


@dataclass(frozen=True)
class ScalarSolution:
    F: float
    omega: float
    p: float
    alpha: float
    rate: float


def scalar_closed_form(inst):
    """Optimum of the scalar problem.

    The rate grows with ``F`` and falls with ``omega`` while the fronthaul
    rate grows with ``p``, so both powers saturate and ``omega`` is the
    smallest value meeting ``gamma = alpha``.
    """
    s = abs(inst.h) ** 2 * inst.P_UE
    snr = inst.beta * inst.N_C * inst.P_H_max / inst.sigma2
    alpha = math.log2(1.0 + snr)
    if alpha == 0.0:
        return ScalarSolution(inst.P_UE, math.inf, inst.P_H_max, 0.0, 0.0)
    omega = (s + 1.0) / snr  # 2**alpha - 1 == snr
    rate = math.log2(1.0 + s / (1.0 + omega))
    return ScalarSolution(inst.P_UE, omega, inst.P_H_max, alpha, rate)


def random_scalar_instance(rng):
    """Instance with access SNR in [-10, 30] dB and fronthaul SNR in [0, 35] dB."""
    access_snr = 10.0 ** rng.uniform(-1.0, 3.0)
    front_snr = 10.0 ** rng.uniform(0.0, 3.5)
    n_c = int(rng.integers(1, 65))
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return ScalarInstance(h=math.sqrt(access_snr) * np.exp(1j * phase),
                          beta=front_snr / n_c, N_C=n_c, sigma2=1.0,
                          P_UE=1.0, P_H_max=1.0, theta=float(rng.uniform(0, 2 * np.pi)))


@dataclass
class GridResult:
    vars: DesignVariables
    sum_rate: float
    n_feasible: int


def _batched_logdet2(X):
    if X.shape[-1] == 1:
        return np.log2(np.real(X[..., 0, 0]))
    sign, ld = np.linalg.slogdet(X)
    return np.where(np.real(sign) > 0, ld / math.log(2.0), -np.inf)


class _DiagonalGrid:
    """Vectorized rates for diagonal ``F_k`` and ``Omega_l``."""

    def __init__(self, channels, combiner, cfg):
        self.cfg = cfg
        self.channels = channels
        K, L = cfg.K, cfg.L
        # rank-one received covariance of every UE antenna, per RRH block
        self.cols = []  # (k, i)
        R = []
        for k in range(K):
            Hk = channels.stacked(k)
            for i in range(cfg.N_U[k]):
                self.cols.append((k, i))
                h = Hk[:, i]
                R.append(np.outer(h, h.conj()))
        self.R = np.array(R)
        self.n = cfg.n_h_total
        self.hoff = np.concatenate([[0], np.cumsum(cfg.N_H)])
        self.cg = combiner.cross_gains
        self.noise = cfg.sigma2_CU * combiner.self_norms

    def evaluate(self, f, om, p):
        """``f``: (B, sum N_U), ``om``: (B, sum N_H), ``p``: (B, L) -> (rate, feasible)."""
        cfg = self.cfg
        B = f.shape[0]
        S_all = np.einsum("bj,jmn->bmn", f.astype(complex), self.R)
        T = S_all + np.eye(self.n)[None]
        idx = np.arange(self.n)
        T[:, idx, idx] += om
        full = _batched_logdet2(T)
        rate = np.zeros(B)
        for k in range(cfg.K):
            js = [j for j, (kk, _) in enumerate(self.cols) if kk == k]
            Sk = np.einsum("bj,jmn->bmn", f[:, js].astype(complex), self.R[js])
            rate += cfg.weights[k] * (full - _batched_logdet2(T - Sk))

        feasible = np.ones(B, dtype=bool)
        col = 0
        for k in range(cfg.K):
            feasible &= f[:, col:col + cfg.N_U[k]].sum(axis=1) <= cfg.P_UE * (1 + 1e-12)
            col += cfg.N_U[k]
        total = p @ self.cg.T + self.noise
        interf = total - p * np.diag(self.cg)
        alpha = np.log2(total / interf)
        for l in range(cfg.L):
            a, b = self.hoff[l], self.hoff[l + 1]
            Sl = T[:, a:b, a:b]  # signal + I + Omega_l
            gamma = _batched_logdet2(Sl) - np.sum(np.log2(om[:, a:b]), axis=1)
            feasible &= gamma <= alpha[:, l]
        return np.where(np.isfinite(rate), rate, -np.inf), feasible


def _omega_from_u(u, floor):
    with np.errstate(divide="ignore"):
        return np.maximum(1.0 / u - 1.0, floor)


def grid_search_small(channels, combiner, cfg, grid_density=50, refine=2, chunk=40_000):
    """Exhaustive grid over diagonal ``F_k``, diagonal ``Omega_l`` and ``p``.

    ``Omega`` entries are gridded through ``u = 1 / (1 + omega)`` on (0, 1],
    which covers the whole half-line. After the full grid, ``refine`` zoom
    rounds regrid each axis between the neighbours of the incumbent.
    Returns the best point that passes :func:`check_feasibility`, or a zero
    rate with ``vars=None`` when no grid point is feasible.
    """
    nf, no, L = sum(cfg.N_U), sum(cfg.N_H), cfg.L
    dim = nf + no + L
    if dim > MAX_GRID_DIM:
        raise ValueError(f"grid dimension {dim} exceeds {MAX_GRID_DIM}")
    grid = _DiagonalGrid(channels, combiner, cfg)
    floor = cfg.solver.psd_floor

    # axis coordinates: F entries, u entries, p entries
    u_axis = np.linspace(0.0, 1.0, grid_density + 1)[1:]
    axes = ([np.linspace(0.0, cfg.P_UE, grid_density)] * nf + [u_axis] * no
            + [np.linspace(0.0, cfg.P_H_max, grid_density)] * L)

    best_rate, best_pt, n_feas = -np.inf, None, 0
    for _ in range(refine + 1):
        shape = [len(a) for a in axes]
        total = int(np.prod(shape))
        round_best, round_idx = -np.inf, None
        for start in range(0, total, chunk):
            flat = np.arange(start, min(start + chunk, total))
            sub = np.unravel_index(flat, shape)
            pts = np.stack([axes[d][sub[d]] for d in range(dim)], axis=1)
            rate, feas = grid.evaluate(pts[:, :nf], _omega_from_u(pts[:, nf:nf + no], floor),
                                       pts[:, nf + no:])
            n_feas += int(feas.sum())
            rate = np.where(feas, rate, -np.inf)
            j = int(np.argmax(rate))
            if rate[j] > round_best:
                round_best, round_idx = rate[j], tuple(s[j] for s in sub)
        if round_idx is None:
            break
        if round_best > best_rate:
            best_rate = round_best
            best_pt = np.array([axes[d][round_idx[d]] for d in range(dim)])
        axes = [np.linspace(a[max(i - 1, 0)], a[min(i + 1, len(a) - 1)], grid_density)
                for a, i in zip(axes, round_idx)]

    if best_pt is None:
        return GridResult(None, 0.0, 0)
    vars = _to_vars(best_pt, cfg, floor)
    report = check_feasibility(vars, channels, combiner, cfg)
    if not report.feasible(cfg.solver.feas_tol):
        raise AssertionError(f"grid optimum fails feasibility check ({report.worst_violation:.3e})")
    return GridResult(vars, float(best_rate), n_feas)


def _to_vars(pt, cfg, floor):
    nf, no = sum(cfg.N_U), sum(cfg.N_H)
    f, om, p = pt[:nf], _omega_from_u(pt[nf:nf + no], floor), pt[nf + no:]
    F, Om = [], []
    col = 0
    for m in cfg.N_U:
        F.append(np.diag(f[col:col + m]).astype(complex))
        col += m
    col = 0
    for m in cfg.N_H:
        Om.append(np.diag(om[col:col + m]).astype(complex))
        col += m
    return DesignVariables(F, Om, np.array(p, dtype=float))


__all__ = ["ScalarInstance", "ScalarSolution", "scalar_closed_form", "random_scalar_instance",
           "GridResult", "grid_search_small", "MAX_GRID_DIM"]
