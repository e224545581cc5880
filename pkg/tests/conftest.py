"""Shared fixtures and helpers for the test-suite."""

import functools
import logging

import numpy as np
import pytest
from hypothesis import settings

from irs_altmin.config import NoiseModel, SystemConfig
from irs_altmin.harness import draw_realization, run_method
from irs_altmin.transceiver import DesignProblem

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")

# acceptance results collected for the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES,
                           key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_sum_rate_warnings():
    logging.getLogger("irs_altmin").setLevel(logging.ERROR)
    yield


@pytest.fixture
def desk() -> SystemConfig:
    return SystemConfig.desk()


def crandn(rng, *shape):
    return (rng.standard_normal(shape)
            + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_pd(rng, n: int) -> np.ndarray:
    A = crandn(rng, n, n)
    return A @ A.conj().T + n * np.eye(n)


def random_problem(rng, L=3, K=2, Nr=2, Nt=4, N=3, streams=1,
                   error_scale=0.1, power=5.0, noise=None) -> DesignProblem:
    """Gaussian estimates, independent of the channel generator."""
    if noise is None:
        noise = NoiseModel(np.broadcast_to(np.eye(Nr), (K, Nr, Nr)))
    if np.isscalar(streams):
        streams = np.full((L, K), streams)
    return DesignProblem(crandn(rng, L, K, Nr, Nt),
                         crandn(rng, L, K, N, Nr, Nt) / np.sqrt(max(N, 1)),
                         noise, error_scale, power, streams)


def random_precoders(rng, prob: DesignProblem, scale=1.0) -> np.ndarray:
    L, K, Nr, Nt, N, S = prob.dims
    P = crandn(rng, L, K, Nt, S) * prob.mask[:, :, None, :]
    norm = np.sqrt(np.sum(np.abs(P) ** 2, axis=(1, 2, 3)))
    return scale * P * (np.sqrt(prob.power) / norm)[:, None, None, None]


# cached desk sweeps shared by the statistical tests --------------------------
@functools.lru_cache(maxsize=None)
def desk_cell(method: str, snr_db: float = 10.0, N: int = 9,
              paths: int = 4, n: int = 200, bits=(None,), **overrides):
    """Rows of ``method`` over realizations 0..n-1 of one desk cell."""
    cfg = SystemConfig.desk(snr_db=snr_db, num_irs_elements=N,
                            paths_irs_user=paths, **overrides)
    rows = []
    for r in range(n):
        rows.extend(run_method(method, draw_realization(cfg, r), cfg, bits))
    return tuple(rows)


def rates(rows, bits=None) -> np.ndarray:
    return np.array([r.sum_rate for r in rows if r.bits == bits])


def paired_gap(a: np.ndarray, b: np.ndarray):
    """Mean and standard error of the paired difference a - b."""
    d = a - b
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size))
