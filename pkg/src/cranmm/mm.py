"""Majorization-minimization for joint precoding, compression and RRH power control.

Each iteration replaces the nonconcave parts of the weighted sum-rate and the
fronthaul constraints by their tangent bounds at the previous iterate:

* the objective keeps ``log det`` of the total received covariance and
  linearizes the interference-plus-noise ``log det`` of every user, giving a
  concave minorizer;
* the compression rate linearizes its first ``log det``, giving a convex
  upper bound;
* the fronthaul rate linearizes its interference-plus-noise ``log``, giving a
  concave lower bound.

The surrogate feasible set is then an inner approximation of the true one,
so every iterate stays feasible and the objective never decreases.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from . import __version__
from .backends import BarrierBackend, SubproblemError
from .config import config_hash
from .fronthaul import fronthaul_capacity, interference_plus_noise
from .rates import (
    LN2,
    DesignVariables,
    check_feasibility,
    compression_rate,
    hermitian_part,
    linearize_logdet,
    logdet2,
    received_covariances,
    rrh_signal_covariance,
    user_rates,
)

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
SUBPROBLEM_FAILED = "subproblem_failed"


class InfeasibleScenarioError(RuntimeError):
    pass


@dataclass
class MMTrace:
    objective_per_iter: list = field(default_factory=list)
    worst_violation_per_iter: list = field(default_factory=list)
    iterations: int = 0
    status: str = MAX_ITERS
    wall_time_s: float = 0.0


@dataclass
class SolveResult:
    vars: DesignVariables
    V: list
    per_user_rates: np.ndarray
    sum_rate: float
    trace: MMTrace
    config_hash: str = ""
    seed: int = 0

    def to_dict(self):
        def cplx(M):
            M = np.asarray(M)
            return {"real": np.real(M).tolist(), "imag": np.imag(M).tolist()}

        return {
            "version": __version__,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "sum_rate": self.sum_rate,
            "per_user_rates": [float(r) for r in self.per_user_rates],
            "trace": {
                "objective_per_iter": list(map(float, self.trace.objective_per_iter)),
                "worst_violation_per_iter": list(map(float, self.trace.worst_violation_per_iter)),
                "iterations": self.trace.iterations,
                "status": self.trace.status,
                "wall_time_s": self.trace.wall_time_s,
            },
            "F": [cplx(F) for F in self.vars.F],
            "Omega": [cplx(O) for O in self.vars.Omega],
            "p": [float(x) for x in self.vars.p],
            "V": [cplx(V) for V in self.V],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# --------------------------------------------------------------------------
# surrogate problem
# --------------------------------------------------------------------------

@dataclass
class SurrogateProblem:
    """Convex subproblem anchored at the previous iterate.

    Besides evaluators of the three surrogate families, the linearized terms
    are exposed in expanded affine form (natural-log units, unscaled
    variables) for backends:

    ``sum_k w_k xi_k = obj_const + sum_j tr(obj_grad_F[j] F_j) + sum_l tr(obj_grad_Omega[l] Omega_l)``
    and the linearized part of the compression rate of RRH ``l`` equals
    ``comp_const[l] + sum_k tr(comp_grad_F[l][k] F_k) + tr(comp_grad_Omega[l] Omega_l)``.
    """

    anchor: DesignVariables
    channels: object
    combiner: object
    cfg: object
    interference_anchor: list      # per UE, A_{-k} at the anchor
    compression_anchor: list       # per RRH, sum_k H F H^H + I + Omega at the anchor
    fronthaul_anchor: np.ndarray   # per RRH, sigma^2 ||u||^2 + sum_{m != l} c p at the anchor
    obj_grad_F: list
    obj_grad_Omega: list
    obj_const: float
    comp_grad_F: list
    comp_grad_Omega: list
    comp_const: np.ndarray

    @property
    def weights(self):
        return np.asarray(self.cfg.weights)

    def _total_and_interference(self, vars):
        S = received_covariances(vars, self.channels)
        n = S[0].shape[0]
        total = sum(S) + np.eye(n) + block_diag(*vars.Omega)
        return total, [total - S[k] for k in range(len(S))]

    def f_hat(self, k, vars):
        total, interf = self._total_and_interference(vars)
        return logdet2(total) - linearize_logdet(interf[k], self.interference_anchor[k])

    def objective(self, vars):
        total, interf = self._total_and_interference(vars)
        full = logdet2(total)
        return float(sum(w * (full - linearize_logdet(X, X0))
                         for w, X, X0 in zip(self.weights, interf, self.interference_anchor)))

    def gamma_hat(self, l, vars):
        S = rrh_signal_covariance(l, vars, self.channels) + vars.Omega[l]
        return linearize_logdet(S, self.compression_anchor[l]) - logdet2(vars.Omega[l])

    def alpha_hat(self, l, vars):
        c = self.combiner
        sigma2 = self.cfg.sigma2_CU
        p = np.asarray(vars.p, dtype=float)
        total = sigma2 * c.self_norms[l] + float(c.cross_gains[l] @ p)
        interf = total - c.cross_gains[l, l] * p[l]
        return math.log2(total) - linearize_logdet(interf, self.fronthaul_anchor[l])

    def constraint_margins(self, vars):
        """``alpha_hat_l - gamma_hat_l`` for every RRH."""
        return np.array([self.alpha_hat(l, vars) - self.gamma_hat(l, vars)
                         for l in range(self.cfg.L)])


def assemble_surrogate(anchor, channels, combiner, cfg):
    for l, Om in enumerate(anchor.Omega):
        if np.linalg.eigvalsh(hermitian_part(Om))[0] <= 0:
            raise np.linalg.LinAlgError(f"anchor Omega[{l}] is singular")
    K, L = cfg.K, cfg.L
    w = np.asarray(cfg.weights)
    S = received_covariances(anchor, channels)
    n = S[0].shape[0]
    total = sum(S) + np.eye(n) + block_diag(*anchor.Omega)
    interf = [total - S[k] for k in range(K)]
    M = [np.linalg.inv(X) for X in interf]

    Hs = [channels.stacked(k) for k in range(K)]
    grad_F = []
    for j in range(K):
        C = sum(w[k] * (Hs[j].conj().T @ M[k] @ Hs[j]) for k in range(K) if k != j)
        grad_F.append(hermitian_part(C) if K > 1 else np.zeros((cfg.N_U[j],) * 2, complex))
    offsets = np.concatenate([[0], np.cumsum(cfg.N_H)])
    Wm = sum(wk * Mk for wk, Mk in zip(w, M))
    grad_Om = [hermitian_part(Wm[offsets[l]:offsets[l + 1], offsets[l]:offsets[l + 1]])
               for l in range(L)]
    obj_const = float(sum(wk * (logdet2(X) * LN2 + np.real(np.trace(Mk)) - n)
                          for wk, X, Mk in zip(w, interf, M)))

    comp_anchor, comp_F, comp_Om, comp_c = [], [], [], []
    for l in range(L):
        S0 = rrh_signal_covariance(l, anchor, channels) + anchor.Omega[l]
        S0inv = hermitian_part(np.linalg.inv(hermitian_part(S0)))
        comp_anchor.append(S0)
        comp_F.append([hermitian_part(channels.H[l][k].conj().T @ S0inv @ channels.H[l][k])
                       for k in range(K)])
        comp_Om.append(S0inv)
        comp_c.append(logdet2(S0) * LN2 - cfg.N_H[l] + float(np.real(np.trace(S0inv))))

    front = interference_plus_noise(combiner, anchor.p, cfg.sigma2_CU)
    return SurrogateProblem(
        anchor=anchor, channels=channels, combiner=combiner, cfg=cfg,
        interference_anchor=interf, compression_anchor=comp_anchor,
        fronthaul_anchor=front, obj_grad_F=grad_F, obj_grad_Omega=grad_Om,
        obj_const=obj_const, comp_grad_F=comp_F, comp_grad_Omega=comp_Om,
        comp_const=np.array(comp_c),
    )


def polish(vars, cfg):
    """Project a backend solution onto the exact cones and boxes.

    Removes solver round-off: negative eigenvalues of ``F_k`` are dropped and
    the trace rescaled to the budget, ``Omega_l`` is lifted to the floor and
    ``p`` clipped to its box. Each step can only shrink the compression rate
    or leave it unchanged up to round-off.
    """
    floor = cfg.solver.psd_floor
    F = []
    for Fk in vars.F:
        w, Q = np.linalg.eigh(hermitian_part(Fk))
        w = np.clip(w, 0.0, None)
        Fk = (Q * w) @ Q.conj().T
        tr = float(np.sum(w))
        if tr > cfg.P_UE:
            Fk *= cfg.P_UE / tr
        F.append(hermitian_part(Fk))
    Om = []
    for Ol in vars.Omega:
        w, Q = np.linalg.eigh(hermitian_part(Ol))
        Om.append(hermitian_part((Q * np.clip(w, floor, None)) @ Q.conj().T))
    p = np.clip(np.asarray(vars.p, dtype=float), 0.0, cfg.P_H_max)
    return DesignVariables(F, Om, p)


def solve_surrogate(sp, settings, backend=None):
    backend = backend or BarrierBackend()
    return polish(backend.solve(sp, settings), sp.cfg)


# --------------------------------------------------------------------------
# algorithm
# --------------------------------------------------------------------------

def _smallest_feasible_scale(l, vars, channels, target, floor, rel_tol=1e-6):
    """Smallest ``kappa`` with ``gamma_l(F, kappa I) <= target`` (bisection in log scale)."""
    n = channels.H[l][0].shape[0]
    S = rrh_signal_covariance(l, vars, channels)

    def gamma(kappa):
        return logdet2(S + kappa * np.eye(n)) - n * math.log2(kappa)

    if gamma(floor) <= target:
        return floor
    lo, hi = floor, max(1.0, floor)
    while gamma(hi) > target:
        lo, hi = hi, hi * 4.0
        if hi > 1e300:
            raise InfeasibleScenarioError(f"no quantization level satisfies RRH {l}")
    while hi - lo > rel_tol * hi:
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        if gamma(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def initialize(channels, combiner, cfg, F0=None):
    """Feasible starting point.

    Full UE power spread evenly over the antennas, full RRH power, and the
    smallest scaled-identity quantization noise meeting every compression
    constraint with the strict margin.
    """
    settings = cfg.solver
    if F0 is None:
        F0 = [(cfg.P_UE / m) * np.eye(m, dtype=complex) for m in cfg.N_U]
    p = np.full(cfg.L, float(cfg.P_H_max))
    alpha = fronthaul_capacity(combiner, p, cfg.sigma2_CU)
    vars = DesignVariables([np.array(F, dtype=complex) for F in F0],
                           [np.eye(m, dtype=complex) for m in cfg.N_H], p)
    Omega = []
    for l in range(cfg.L):
        target = alpha[l] - settings.strict_margin
        if target <= 0:
            raise InfeasibleScenarioError(
                f"fronthaul rate of RRH {l} is {alpha[l]:.3e} bpcu; no compression possible")
        kappa = _smallest_feasible_scale(l, vars, channels, target, settings.psd_floor)
        Omega.append(kappa * np.eye(cfg.N_H[l], dtype=complex))
    vars.Omega = Omega
    return vars


def recover_precoders(F, settings):
    """Precoders ``V_k`` with ``V_k V_k^H = F_k`` from the eigendecomposition."""
    out = []
    for Fk in F:
        w, Q = np.linalg.eigh(hermitian_part(Fk))
        lam_max = w[-1] if w.size else 0.0
        if lam_max <= 0:
            out.append(np.zeros((Fk.shape[0], 0), dtype=complex))
            continue
        keep = w > settings.rank_tol * lam_max
        out.append(Q[:, keep] * np.sqrt(w[keep])[None, :])
    return out


def mm_solve(channels, combiner, cfg, backend=None, init=None, debug=False):
    """Run the MM iterations until the objective stalls or ``max_iters``."""
    settings = cfg.solver
    backend = backend or BarrierBackend()
    t0 = time.perf_counter()
    w = np.asarray(cfg.weights)

    current = init if init is not None else initialize(channels, combiner, cfg)
    obj = float(w @ user_rates(current, channels, settings.feas_tol))
    trace = MMTrace()
    trace.objective_per_iter.append(obj)
    trace.worst_violation_per_iter.append(
        check_feasibility(current, channels, combiner, cfg).worst_violation)

    status = MAX_ITERS
    for it in range(1, settings.max_iters + 1):
        sp = assemble_surrogate(current, channels, combiner, cfg)
        if debug:
            gap = abs(sp.objective(current) - obj)
            if gap > 1e-9 * max(1.0, abs(obj)):
                raise AssertionError(f"surrogate not tight at anchor (gap {gap:.3e})")
        try:
            new = solve_surrogate(sp, settings, backend)
            new_obj = float(w @ user_rates(new, channels, settings.feas_tol))
        except (SubproblemError, np.linalg.LinAlgError, ValueError) as exc:
            log.warning("MM iteration %d: %s", it, exc)
            status = SUBPROBLEM_FAILED
            break
        report = check_feasibility(new, channels, combiner, cfg)
        current = new
        trace.objective_per_iter.append(new_obj)
        trace.worst_violation_per_iter.append(report.worst_violation)
        trace.iterations = it
        if abs(new_obj - obj) <= settings.rel_tol * max(1.0, abs(new_obj)):
            obj = new_obj
            status = CONVERGED
            break
        obj = new_obj

    trace.status = status
    trace.wall_time_s = time.perf_counter() - t0
    rates = user_rates(current, channels, settings.feas_tol)
    return SolveResult(
        vars=current,
        V=recover_precoders(current.F, settings),
        per_user_rates=rates,
        sum_rate=float(w @ rates),
        trace=trace,
        config_hash=config_hash(cfg),
        seed=cfg.seed,
    )
