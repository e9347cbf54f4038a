"""MR / ZF combining at the CU and the resulting fronthaul rates."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

ZF_MAX_CONDITION = 1e8


class Scheme(str, enum.Enum):
    MR = "MR"
    ZF = "ZF"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


class SingularCombinerError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CombinerSet:
    """Combining vectors and their precomputed power gains.

    ``cross_gains[l, m] = |u_l^H g_m|**2`` and ``self_norms[l] = ||u_l||**2``.
    """

    scheme: Scheme
    U: np.ndarray
    cross_gains: np.ndarray
    self_norms: np.ndarray

    @property
    def L(self):
        return self.U.shape[1]


def build_combiner(B, G, scheme):
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.MR:
        U = B.copy()
    else:
        n_c, L = B.shape
        # cond of a wide matrix ignores its missing singular values
        cond = np.linalg.cond(B) if L <= n_c else np.inf
        if not np.isfinite(cond) or cond > ZF_MAX_CONDITION:
            raise SingularCombinerError(
                f"ZF needs full column rank steering matrix; cond(B) = {cond:.3e}")
        gram = B.conj().T @ B
        U = B @ np.linalg.inv(gram)
    cross = np.abs(U.conj().T @ G) ** 2
    norms = np.sum(np.abs(U) ** 2, axis=0)
    return CombinerSet(scheme=scheme, U=U, cross_gains=cross, self_norms=norms)


def _check_powers(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError(f"powers must be nonnegative, got {p}")
    return p


def interference_plus_noise(combiner, p, sigma2):
    """Denominator of each fronthaul SINR, ``sigma2*||u_l||^2 + sum_{m != l} c_lm p_m``."""
    p = _check_powers(p)
    cg = combiner.cross_gains
    interference = cg @ p - np.diag(cg) * p
    return sigma2 * combiner.self_norms + interference


def fronthaul_sinr(combiner, p, sigma2):
    p = _check_powers(p)
    return np.diag(combiner.cross_gains) * p / interference_plus_noise(combiner, p, sigma2)


def fronthaul_capacity(combiner, p, sigma2):
    """Achievable fronthaul rate per RRH in bits per channel use."""
    return np.log2(1.0 + fronthaul_sinr(combiner, p, sigma2))
