"""Solvers for the convex MM subproblem.

A backend takes a :class:`~cranmm.mm.SurrogateProblem` and returns the
maximizer as :class:`~cranmm.rates.DesignVariables`. Two are provided:

* :class:`BarrierBackend` (default): a log-barrier Newton method written
  directly against the log-det structure of the subproblem;
* :class:`CvxpyBackend`: the same problem stated in cvxpy and handed to a
  conic solver. Slower, but fully independent of the barrier code.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .rates import LN2, DesignVariables

log = logging.getLogger(__name__)


class SubproblemError(RuntimeError):
    pass


class CvxpyBackend:
    """Conic backend: log-det and exponential cones through cvxpy.

    The problem is compiled once per (channels, combiner, config) and then
    re-solved with new anchor parameters. Variables are rescaled internally
    (``F / P_UE`` and ``p / P_H_max``, fronthaul gains normalized by the
    noise term) to keep the conic data well conditioned.
    """

    def __init__(self, solver="CLARABEL", fallback="SCS", solver_opts=None):
        self.solver = solver
        self.fallback = fallback
        self.solver_opts = solver_opts or {}
        self._key = None
        self._model = None

    def solve(self, sp, settings):
        key = (id(sp.channels), id(sp.combiner), id(sp.cfg))
        if key != self._key:
            self._model = _CvxpyModel(sp.channels, sp.combiner, sp.cfg)
            self._key = key
            self._refs = (sp.channels, sp.combiner, sp.cfg)
        return self._model.solve(sp, settings, self.solver, self.fallback, self.solver_opts)


class _CvxpyModel:
    def __init__(self, channels, combiner, cfg):
        import cvxpy as cp

        self.cp = cp
        K, L = cfg.K, cfg.L
        self.cfg = cfg
        settings = cfg.solver
        su = math.sqrt(cfg.P_UE)
        n = cfg.n_h_total

        self.F = [cp.Variable((m, m), hermitian=True) for m in cfg.N_U]
        self.Om = [cp.Variable((m, m), hermitian=True) for m in cfg.N_H]
        self.x = cp.Variable(L)

        def logdet(X, m):
            if m == 1:
                return cp.log(cp.real(X[0, 0]))
            return cp.log_det(X)

        Hs = [channels.stacked(k) * su for k in range(K)]
        blocks = [[self.Om[i] if i == j else np.zeros((cfg.N_H[i], cfg.N_H[j]))
                   for j in range(L)] for i in range(L)]
        Om_blk = cp.bmat(blocks) if L > 1 else self.Om[0]
        A = sum(Hs[k] @ self.F[k] @ Hs[k].conj().T for k in range(K)) + np.eye(n) + Om_blk
        A = (A + A.H) / 2

        self.cF = [cp.Parameter((m, m), hermitian=True) for m in cfg.N_U]
        self.cO = [cp.Parameter((m, m), hermitian=True) for m in cfg.N_H]
        wsum = float(np.sum(cfg.weights))
        obj = (wsum * logdet(A, n)
               - sum(cp.real(cp.trace(self.cF[k] @ self.F[k])) for k in range(K))
               - sum(cp.real(cp.trace(self.cO[l] @ self.Om[l])) for l in range(L)))

        cons = []
        for k in range(K):
            cons += [cp.real(cp.trace(self.F[k])) <= 1.0, self.F[k] >> 0]
        for l in range(L):
            cons.append(self.Om[l] >> settings.psd_floor * np.eye(cfg.N_H[l]))
        cons += [self.x >= 0, self.x <= 1]

        cg = combiner.cross_gains
        Gn = cg * cfg.P_H_max / (cfg.sigma2_CU * combiner.self_norms)[:, None]
        self.Gn = Gn
        self.eF = [[cp.Parameter((cfg.N_U[k],) * 2, hermitian=True) for k in range(K)]
                   for _ in range(L)]
        self.eO = [cp.Parameter((m, m), hermitian=True) for m in cfg.N_H]
        self.ec = cp.Parameter(L)
        self.finv = cp.Parameter(L, nonneg=True)
        self.fc = cp.Parameter(L)
        margin = settings.strict_margin * LN2
        for l in range(L):
            off = Gn[l].copy()
            off[l] = 0.0
            lin = (sum(cp.real(cp.trace(self.eF[l][k] @ self.F[k])) for k in range(K))
                   + cp.real(cp.trace(self.eO[l] @ self.Om[l])) + self.ec[l])
            alpha = (cp.log(1.0 + Gn[l] @ self.x)
                     - self.finv[l] * (1.0 + off @ self.x) + self.fc[l])
            cons.append(lin - logdet(self.Om[l], cfg.N_H[l]) <= alpha - margin)

        self.problem = cp.Problem(cp.Maximize(obj), cons)

    def solve(self, sp, settings, solver, fallback, opts):
        cfg = self.cfg
        cp = self.cp
        for k in range(cfg.K):
            self.cF[k].value = sp.obj_grad_F[k] * cfg.P_UE
        for l in range(cfg.L):
            self.cO[l].value = sp.obj_grad_Omega[l]
            self.eO[l].value = sp.comp_grad_Omega[l]
            for k in range(cfg.K):
                self.eF[l][k].value = sp.comp_grad_F[l][k] * cfg.P_UE
        self.ec.value = sp.comp_const
        # anchor interference term, normalized by sigma^2 ||u_l||^2
        i0 = sp.fronthaul_anchor / (cfg.sigma2_CU * sp.combiner.self_norms)
        self.finv.value = 1.0 / i0
        self.fc.value = 1.0 - np.log(i0)

        status = None
        for name in [solver] + ([fallback] if fallback else []):
            try:
                self.problem.solve(solver=name, **opts.get(name, {}))
            except cp.error.SolverError as exc:
                log.debug("backend %s failed: %s", name, exc)
                status = f"solver error ({exc})"
                continue
            status = self.problem.status
            if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
                break
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SubproblemError(f"subproblem not solved: {status}")

        F = [cfg.P_UE * np.asarray(v.value) for v in self.F]
        Om = [np.asarray(v.value) for v in self.Om]
        p = cfg.P_H_max * np.asarray(self.x.value, dtype=float)
        return DesignVariables(F, Om, p)


# --------------------------------------------------------------------------
# log-barrier Newton method
# --------------------------------------------------------------------------

def hermitian_basis(m):
    """Real basis of m x m Hermitian matrices: diagonal, then Re/Im of each upper entry."""
    out = []
    for a in range(m):
        E = np.zeros((m, m), complex)
        E[a, a] = 1.0
        out.append(E)
    for a in range(m):
        for b in range(a + 1, m):
            E = np.zeros((m, m), complex)
            E[a, b] = E[b, a] = 1.0
            out.append(E)
            E = np.zeros((m, m), complex)
            E[a, b] = 1j
            E[b, a] = -1j
            out.append(E)
    return np.array(out)


def hermitian_coords(X):
    m = X.shape[0]
    iu = np.triu_indices(m, 1)
    re, im = np.real(X[iu]), np.imag(X[iu])
    inter = np.empty(2 * re.size)
    inter[0::2], inter[1::2] = re, im
    return np.concatenate([np.real(np.diag(X)), inter])


class _LogDet:
    """``log det(X0 + sum_i x[idx[i]] D[i])`` with gradient and Hessian in ``x``."""

    def __init__(self, idx, X0, D):
        self.idx = np.asarray(idx, dtype=int)
        self.X0 = np.asarray(X0, dtype=complex)
        self.D = np.asarray(D, dtype=complex)
        self.n = self.X0.shape[0]
        self.Dflat = self.D.transpose(1, 0, 2).reshape(self.n, -1)
        self.ix = np.ix_(self.idx, self.idx)

    def matrix(self, x):
        return self.X0 + np.tensordot(x[self.idx], self.D, axes=1)

    def value(self, x):
        try:
            c = np.linalg.cholesky(self.matrix(x))
        except np.linalg.LinAlgError:
            return -np.inf
        return 2.0 * float(np.sum(np.log(np.real(np.diagonal(c)))))

    def derivatives(self, x):
        c = cho_factor(self.matrix(x))
        val = 2.0 * float(np.sum(np.log(np.real(np.diagonal(c[0])))))
        n = self.n
        Y = cho_solve(c, self.Dflat).reshape(n, len(self.idx), n).transpose(1, 0, 2)
        grad = np.real(np.einsum("iaa->i", Y))
        hess = -np.real(np.einsum("iab,jba->ij", Y, Y))
        return val, grad, hess


class _Blocks:
    """Batch of same-size Hermitian variable blocks ``X_j = M(x[idx[j]]) + shift * I``."""

    def __init__(self, idx, m, shift):
        self.idx = np.asarray(idx, dtype=int).reshape(-1, m * m)
        self.m = m
        self.basis = hermitian_basis(m)
        self.shift = shift * np.eye(m)
        self.rows = self.idx[:, :, None]
        self.cols = self.idx[:, None, :]

    def matrices(self, x):
        return np.tensordot(x[self.idx], self.basis, axes=1) + self.shift

    def value(self, x):
        try:
            c = np.linalg.cholesky(self.matrices(x))
        except np.linalg.LinAlgError:
            return None
        return 2.0 * np.sum(np.log(np.real(np.diagonal(c, axis1=1, axis2=2))), axis=1)

    def derivatives(self, x):
        X = self.matrices(x)
        c = np.linalg.cholesky(X)
        val = 2.0 * np.sum(np.log(np.real(np.diagonal(c, axis1=1, axis2=2))), axis=1)
        Xinv = np.linalg.inv(X)
        Y = np.einsum("nab,ibc->niac", Xinv, self.basis)
        grad = np.real(np.einsum("niaa->ni", Y))
        hess = -np.real(np.einsum("niab,njba->nij", Y, Y))
        return val, grad, hess


class _Barrier:
    """Scaled subproblem in real coordinates, ready for Newton steps.

    Unknowns are ``F_k / P_UE``, ``Omega_l`` and ``p / P_H_max`` stacked into
    one real vector. The objective is ``wsum * logdet(A(x)) - c.x``; every
    compression constraint reads
    ``g_l = a_l.x + b_l - logdet(Omega_l) - log(1 + G_l.x) <= 0``;
    PSD cones get log-det barriers and the trace and box limits are linear
    inequalities ``C x < h``.
    """

    def __init__(self, channels, combiner, cfg):
        self.cfg = cfg
        K, L = cfg.K, cfg.L
        self.bases_u = [hermitian_basis(m) for m in cfg.N_U]
        self.bases_h = [hermitian_basis(m) for m in cfg.N_H]
        sizes = [m * m for m in cfg.N_U] + [m * m for m in cfg.N_H] + [L]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        self.idx_F = [np.arange(offs[k], offs[k + 1]) for k in range(K)]
        self.idx_O = [np.arange(offs[K + l], offs[K + l + 1]) for l in range(L)]
        self.idx_p = np.arange(offs[K + L], offs[K + L + 1])
        self.dim = int(offs[-1])

        su = math.sqrt(cfg.P_UE)
        n = cfg.n_h_total
        hoff = np.concatenate([[0], np.cumsum(cfg.N_H)])
        idx, D = [], []
        for k in range(K):
            Hk = channels.stacked(k) * su
            for i, E in enumerate(self.bases_u[k]):
                idx.append(self.idx_F[k][i])
                D.append(Hk @ E @ Hk.conj().T)
        for l in range(L):
            for i, E in enumerate(self.bases_h[l]):
                M = np.zeros((n, n), complex)
                M[hoff[l]:hoff[l + 1], hoff[l]:hoff[l + 1]] = E
                idx.append(self.idx_O[l][i])
                D.append(M)
        self.objective_atom = _LogDet(idx, np.eye(n), D)
        self.wsum = float(np.sum(cfg.weights))

        floor = cfg.solver.psd_floor
        self.cone_groups = []
        for m in sorted(set(cfg.N_U)):
            ks = [k for k in range(K) if cfg.N_U[k] == m]
            self.cone_groups.append(_Blocks([self.idx_F[k] for k in ks], m, 0.0))
        # Omega groups keep RRH order so constraint l maps to a fixed (group, row)
        self.omega_groups, self.omega_floor_groups, self.omega_pos = [], [], {}
        for m in sorted(set(cfg.N_H)):
            ls = [l for l in range(L) if cfg.N_H[l] == m]
            gi = len(self.omega_groups)
            for row, l in enumerate(ls):
                self.omega_pos[l] = (gi, row)
            self.omega_groups.append(_Blocks([self.idx_O[l] for l in ls], m, 0.0))
            self.omega_floor_groups.append(_Blocks([self.idx_O[l] for l in ls], m, -floor))
        self.cone_groups += self.omega_floor_groups

        C, h = [], []
        for k in range(K):
            row = np.zeros(self.dim)
            row[self.idx_F[k]] = [np.real(np.trace(E)) for E in self.bases_u[k]]
            C.append(row)
            h.append(1.0)
        for l in range(L):
            row = np.zeros(self.dim)
            row[self.idx_p[l]] = -1.0
            C.append(row)
            h.append(0.0)
            row = np.zeros(self.dim)
            row[self.idx_p[l]] = 1.0
            C.append(row)
            h.append(1.0)
        self.C, self.h = np.array(C), np.array(h)

        self.Gn = combiner.cross_gains * cfg.P_H_max / (cfg.sigma2_CU * combiner.self_norms)[:, None]
        self.nu = sum(cfg.N_U) + sum(cfg.N_H) + len(h) + L

    # -- conversions --------------------------------------------------------
    def pack(self, vars):
        cfg = self.cfg
        x = np.empty(self.dim)
        for k in range(cfg.K):
            x[self.idx_F[k]] = hermitian_coords(vars.F[k] / cfg.P_UE)
        for l in range(cfg.L):
            x[self.idx_O[l]] = hermitian_coords(vars.Omega[l])
        x[self.idx_p] = np.asarray(vars.p, dtype=float) / cfg.P_H_max
        return x

    def unpack(self, x):
        cfg = self.cfg
        F = [cfg.P_UE * np.tensordot(x[self.idx_F[k]], self.bases_u[k], axes=1)
             for k in range(cfg.K)]
        Om = [np.tensordot(x[self.idx_O[l]], self.bases_h[l], axes=1) for l in range(cfg.L)]
        return DesignVariables(F, Om, cfg.P_H_max * x[self.idx_p].copy())

    # -- anchor-dependent data ---------------------------------------------
    def set_anchor(self, sp):
        cfg = self.cfg
        K, L = cfg.K, cfg.L
        c = np.zeros(self.dim)
        for k in range(K):
            c[self.idx_F[k]] = cfg.P_UE * hermitian_coords_dual(sp.obj_grad_F[k])
        for l in range(L):
            c[self.idx_O[l]] = hermitian_coords_dual(sp.obj_grad_Omega[l])
        self.c = c

        i0 = sp.fronthaul_anchor / (cfg.sigma2_CU * sp.combiner.self_norms)
        margin = cfg.solver.strict_margin * LN2
        A = np.zeros((L, self.dim))
        b = np.zeros(L)
        for l in range(L):
            for k in range(K):
                A[l, self.idx_F[k]] = cfg.P_UE * hermitian_coords_dual(sp.comp_grad_F[l][k])
            A[l, self.idx_O[l]] = hermitian_coords_dual(sp.comp_grad_Omega[l])
            off = self.Gn[l].copy()
            off[l] = 0.0
            A[l, self.idx_p] = off / i0[l]
            b[l] = sp.comp_const[l] + 1.0 / i0[l] - (1.0 - math.log(i0[l])) + margin
        self.A, self.b = A, b

    # -- evaluation ---------------------------------------------------------
    def _omega_logdets(self, x):
        out = np.empty(self.cfg.L)
        for gi, grp in enumerate(self.omega_groups):
            v = grp.value(x)
            if v is None:
                return None
            for l, (g, row) in self.omega_pos.items():
                if g == gi:
                    out[l] = v[row]
        return out

    def constraint_values(self, x):
        ld = self._omega_logdets(x)
        arg = 1.0 + self.Gn @ x[self.idx_p]
        if ld is None or np.any(arg <= 0):
            return np.full(self.cfg.L, np.inf)
        return self.A @ x + self.b - ld - np.log(arg)

    def objective(self, x):
        return self.wsum * self.objective_atom.value(x) - self.c @ x

    def phi(self, x, t):
        slack = self.h - self.C @ x
        if np.any(slack <= 0):
            return np.inf
        total = -float(np.sum(np.log(slack)))
        for grp in self.cone_groups:
            v = grp.value(x)
            if v is None:
                return np.inf
            total -= float(np.sum(v))
        g = self.constraint_values(x)
        if np.any(g >= 0):
            return np.inf
        f = self.objective(x)
        if not np.isfinite(f):
            return np.inf
        return -t * f + total - float(np.sum(np.log(-g)))

    def derivatives(self, x, t):
        d, L = self.dim, self.cfg.L
        grad = t * self.c
        hess = np.zeros((d, d))
        _, gr, H = self.objective_atom.derivatives(x)
        oi = self.objective_atom
        grad[oi.idx] -= t * self.wsum * gr
        hess[oi.ix] -= t * self.wsum * H

        slack = self.h - self.C @ x
        grad += self.C.T @ (1.0 / slack)
        hess += (self.C.T / slack ** 2) @ self.C
        for grp in self.cone_groups:
            _, gr, H = grp.derivatives(x)
            grad[grp.idx] -= gr
            hess[grp.rows, grp.cols] -= H

        # compression constraints
        gv = self.A @ x + self.b
        gg = self.A.copy()
        blocks = [grp.derivatives(x) for grp in self.omega_groups]
        for l in range(L):
            gi, row = self.omega_pos[l]
            val, gr, _ = blocks[gi]
            gv[l] -= val[row]
            gg[l, self.idx_O[l]] -= gr[row]
        arg = 1.0 + self.Gn @ x[self.idx_p]
        gv -= np.log(arg)
        gg[:, self.idx_p] -= self.Gn / arg[:, None]
        neg = -gv
        grad += gg.T @ (1.0 / neg)
        hess += (gg.T / neg ** 2) @ gg
        for l in range(L):
            gi, row = self.omega_pos[l]
            io = self.idx_O[l]
            hess[np.ix_(io, io)] -= blocks[gi][2][row] / neg[l]
        Gs = self.Gn / (arg * np.sqrt(neg))[:, None]
        hess[np.ix_(self.idx_p, self.idx_p)] += Gs.T @ Gs
        return grad, hess


def hermitian_coords_dual(C):
    """Coefficients ``c`` with ``Re tr(C X) = c . hermitian_coords(X)`` for Hermitian ``C``."""
    m = C.shape[0]
    iu = np.triu_indices(m, 1)
    # Re tr(C X) = sum_a C_aa X_aa + 2 sum_{a<b} Re(C_ba X_ab)
    cba = C.T[iu]
    inter = np.empty(2 * cba.size)
    inter[0::2] = 2.0 * np.real(cba)
    inter[1::2] = -2.0 * np.imag(cba)
    return np.concatenate([np.real(np.diag(C)), inter])


class BarrierBackend:
    """Log-barrier Newton solver for the MM subproblem.

    Starts from a strictly interior point obtained by pulling the anchor
    slightly towards the centre of the power boxes and lifting each
    quantization covariance, then follows the central path until the
    duality-gap bound ``nu / t`` drops below ``gap_tol`` (in nats). Falls
    back to ``fallback`` (a :class:`CvxpyBackend` by default) if no interior
    start can be found or Newton stalls early.
    """

    def __init__(self, gap_tol=1e-9, mu=20.0, max_newton=200, fallback="cvxpy"):
        self.gap_tol = gap_tol
        self.mu = mu
        self.max_newton = max_newton
        self.fallback = CvxpyBackend() if fallback == "cvxpy" else fallback
        self._key = None
        self._model = None
        self.fallback_count = 0

    def solve(self, sp, settings):
        key = (id(sp.channels), id(sp.combiner), id(sp.cfg))
        if key != self._key:
            self._model = _Barrier(sp.channels, sp.combiner, sp.cfg)
            self._key = key
            self._refs = (sp.channels, sp.combiner, sp.cfg)
        model = self._model
        model.set_anchor(sp)
        try:
            x = self._interior_start(model, sp)
            x = self._central_path(model, x)
        except SubproblemError as exc:
            if self.fallback is None:
                raise
            log.info("barrier backend failed (%s); using fallback", exc)
            self.fallback_count += 1
            return self.fallback.solve(sp, settings)
        return model.unpack(x)

    def _interior_start(self, model, sp):
        cfg = model.cfg
        x_a = model.pack(sp.anchor)
        for eps in (1e-3, 1e-6, 1e-9):
            x = x_a.copy()
            for k in range(cfg.K):
                m = cfg.N_U[k]
                centre = hermitian_coords(np.eye(m) / (2.0 * m))
                x[model.idx_F[k]] = (1 - eps) * x[model.idx_F[k]] + eps * centre
            x[model.idx_p] = (1 - eps) * x[model.idx_p] + eps * 0.5
            ok = True
            for l in range(cfg.L):
                x = self._lift_omega(model, x, l)
                if x is None:
                    ok = False
                    break
            if ok and np.isfinite(model.phi(x, 1.0)):
                return x
        raise SubproblemError("no strictly feasible starting point")

    @staticmethod
    def _lift_omega(model, x, l):
        """Add ``delta * I`` to ``Omega_l`` with the delta minimizing ``g_l`` on a log grid."""
        m = model.cfg.N_H[l]
        io = model.idx_O[l]
        eye = hermitian_coords(np.eye(m))
        lam = np.linalg.eigvalsh(np.tensordot(x[io], model.bases_h[l], axes=1))
        scale = max(1.0, float(np.mean(np.abs(lam))))
        deltas = scale * 2.0 ** np.arange(-45.0, 12.0)
        floor = model.cfg.solver.psd_floor
        ok = lam[0] + deltas > floor
        lifted = lam[None, :] + deltas[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            ld = np.sum(np.log(lifted), axis=1)
        arg = 1.0 + model.Gn[l] @ x[model.idx_p]
        g = (model.A[l] @ x + model.b[l] + deltas * (model.A[l, io] @ eye)
             - ld - math.log(arg))
        g[~ok | ~np.isfinite(g)] = np.inf
        j = int(np.argmin(g))
        if not g[j] < 0:
            return None
        y = x.copy()
        y[io] = x[io] + deltas[j] * eye
        return y

    def _central_path(self, model, x):
        t = 1.0
        newton_total = 0
        while True:
            x, steps = self._centre(model, x, t)
            newton_total += steps
            if model.nu / t < self.gap_tol:
                return x
            t *= self.mu
            if newton_total > 50 * self.max_newton:
                raise SubproblemError("barrier method did not converge")

    def _centre(self, model, x, t):
        phi = model.phi(x, t)
        for step in range(self.max_newton):
            grad, hess = model.derivatives(x, t)
            # Jacobi scaling: the Omega blocks can sit many decades below the
            # power variables
            d = np.sqrt(np.maximum(np.diag(hess), 1e-300))
            hs = hess / np.outer(d, d)
            try:
                dx = -cho_solve(cho_factor(hs), grad / d) / d
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(hs, grad / d, rcond=None)[0] / d
            dec = -float(grad @ dx)
            if dec / 2.0 <= max(1e-11, 1e-15 * abs(phi)):
                return x, step
            s = 1.0
            while True:
                y = x + s * dx
                phi_y = model.phi(y, t)
                if phi_y <= phi - 0.25 * s * dec:
                    break
                s *= 0.5
                if s < 1e-10:
                    # round-off floor: no further decrease is measurable
                    return x, step
            x, phi = y, phi_y
        return x, self.max_newton
