"""User rates, compression rates and feasibility of a design point.

All rates are base-2 (bits per channel use).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .fronthaul import fronthaul_capacity

LN2 = math.log(2.0)
HERMITIAN_TOL = 1e-8


@dataclass
class DesignVariables:
    """Transmit covariances ``F[k]``, quantization covariances ``Omega[l]`` and RRH powers ``p``."""

    F: list
    Omega: list
    p: np.ndarray

    def copy(self):
        return DesignVariables([f.copy() for f in self.F], [o.copy() for o in self.Omega],
                               np.array(self.p, dtype=float))


@dataclass
class FeasibilityReport:
    """Signed margins of every constraint; positive means satisfied.

    ``worst_violation`` is the smallest margin, so a point is feasible
    within ``tol`` when ``worst_violation >= -tol``.
    """

    compression_margin: np.ndarray   # alpha_l - gamma_l
    ue_power_margin: np.ndarray      # P_UE - tr(F_k)
    rrh_power_upper: np.ndarray      # P_H_max - p_l
    rrh_power_lower: np.ndarray      # p_l
    F_min_eig: np.ndarray
    Omega_min_eig: np.ndarray        # lambda_min(Omega_l) - psd_floor
    worst_violation: float = field(init=False)

    def __post_init__(self):
        parts = [self.compression_margin, self.ue_power_margin, self.rrh_power_upper,
                 self.rrh_power_lower, self.F_min_eig, self.Omega_min_eig]
        self.worst_violation = float(min(np.min(x) for x in parts if len(x)))

    def feasible(self, tol):
        return self.worst_violation >= -tol


def hermitian_part(X):
    X = np.asarray(X)
    residual = np.linalg.norm(X - X.conj().T)
    if residual > HERMITIAN_TOL * max(1.0, np.linalg.norm(X)):
        raise ValueError(f"matrix is not Hermitian (residual {residual:.3e})")
    return 0.5 * (X + X.conj().T)


def logdet2(X):
    """``log2 det X`` of a Hermitian positive definite matrix.

    Cholesky on the symmetrized input, falling back to eigenvalues when the
    factorization fails on a matrix that is still (barely) positive.
    """
    X = hermitian_part(np.atleast_2d(X))
    try:
        c = np.linalg.cholesky(X)
        return 2.0 * float(np.sum(np.log(np.real(np.diag(c))))) / LN2
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(X)
        if w[0] <= 0:
            raise np.linalg.LinAlgError(
                f"matrix is not positive definite (min eigenvalue {w[0]:.3e})") from None
        return float(np.sum(np.log(w))) / LN2


def linearize_logdet(X, X0):
    """First-order expansion of ``log2 det`` at ``X0`` evaluated at ``X``.

    By concavity of log det this upper-bounds ``log2 det X`` and is exact at
    ``X = X0``.
    """
    X0 = hermitian_part(np.atleast_2d(X0))
    X = np.atleast_2d(X)
    X0_inv = np.linalg.inv(X0)
    return logdet2(X0) + float(np.real(np.trace(X0_inv @ (X - X0)))) / LN2


def _check_psd(M, tol, what):
    w = np.linalg.eigvalsh(hermitian_part(M))
    if w[0] < -tol:
        raise ValueError(f"{what} is not PSD (min eigenvalue {w[0]:.3e})")


def received_covariances(vars, channels):
    """Per-UE received signal covariances ``H_k F_k H_k^H`` on the stacked RRH antennas."""
    out = []
    for k, F in enumerate(vars.F):
        Hk = channels.stacked(k)
        out.append(Hk @ F @ Hk.conj().T)
    return out


def _check_inputs(vars, tol):
    for k, F in enumerate(vars.F):
        _check_psd(F, tol, f"F[{k}]")
    for l, Om in enumerate(vars.Omega):
        _check_psd(Om, tol, f"Omega[{l}]")


def user_rates(vars, channels, tol=1e-6):
    """Rates of all UEs with interference treated as noise."""
    _check_inputs(vars, tol)
    S = received_covariances(vars, channels)
    n = S[0].shape[0]
    base = np.eye(n) + block_diag(*vars.Omega)
    total = base + sum(S)
    full = logdet2(total)
    return np.array([full - logdet2(total - S[k]) for k in range(len(S))])


def user_rate(k, vars, channels, tol=1e-6):
    return float(user_rates(vars, channels, tol)[k])


def rrh_signal_covariance(l, vars, channels):
    """``sum_k H_lk F_k H_lk^H + I``: covariance of the unquantized signal at RRH ``l``."""
    Hl = channels.H[l]
    n = Hl[0].shape[0]
    return np.eye(n) + sum(Hl[k] @ F @ Hl[k].conj().T for k, F in enumerate(vars.F))


def compression_rate(l, vars, channels):
    Om = vars.Omega[l]
    return logdet2(rrh_signal_covariance(l, vars, channels) + Om) - logdet2(Om)


def compression_rates(vars, channels):
    return np.array([compression_rate(l, vars, channels) for l in range(len(vars.Omega))])


def weighted_sum_rate(vars, channels, weights, tol=1e-6):
    return float(np.dot(weights, user_rates(vars, channels, tol)))


def check_feasibility(vars, channels, combiner, cfg):
    alpha = fronthaul_capacity(combiner, np.maximum(vars.p, 0.0), cfg.sigma2_CU)
    try:
        gamma = compression_rates(vars, channels)
    except np.linalg.LinAlgError:
        gamma = np.full(len(vars.Omega), np.inf)
    F_eig = np.array([np.linalg.eigvalsh(hermitian_part(F))[0] for F in vars.F])
    Om_eig = np.array([np.linalg.eigvalsh(hermitian_part(O))[0] for O in vars.Omega])
    p = np.asarray(vars.p, dtype=float)
    return FeasibilityReport(
        compression_margin=alpha - gamma,
        ue_power_margin=np.array([cfg.P_UE - np.real(np.trace(F)) for F in vars.F]),
        rrh_power_upper=cfg.P_H_max - p,
        rrh_power_lower=p.copy(),
        F_min_eig=F_eig,
        Omega_min_eig=Om_eig - cfg.solver.psd_floor,
    )
