import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cranmm.config import SystemConfig
from cranmm.fronthaul import build_combiner
from cranmm.rates import DesignVariables
from cranmm.scenario import generate_realization, trial_rng

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SMALL = dict(K=2, L=2, N_U=2, N_H=2, N_C=16)


def small_problem(scheme="ZF", trial=0, **overrides):
    cfg = SystemConfig(**{**SMALL, **overrides}).validate()
    channels = generate_realization(cfg, trial_rng(cfg.seed, trial))
    return cfg, channels, build_combiner(channels.B, channels.G, scheme)


def random_psd(rng, n, scale=1.0, rank=None):
    rank = n if rank is None else rank
    A = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return scale * (A @ A.conj().T) / n


def random_vars(cfg, rng, omega_scale=1.0):
    """Random point inside the power boxes; compression constraints not enforced."""
    F = []
    for m in cfg.N_U:
        X = random_psd(rng, m)
        F.append(X * cfg.P_UE * rng.uniform(0.1, 1.0) / np.real(np.trace(X)))
    Omega = [random_psd(rng, m, omega_scale) + omega_scale * 0.1 * np.eye(m) for m in cfg.N_H]
    p = cfg.P_H_max * rng.uniform(0.05, 1.0, cfg.L)
    return DesignVariables(F, Omega, p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["MR", "ZF"])
def scheme(request):
    return request.param


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    print(ACCEPTANCE_LINES[number])
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
