"""Pilot-based LS estimation of direct and per-element cascaded channels.

Two routes produce a :class:`CsiEstimate`:

* :func:`ls_estimate_full` simulates the pilot loop (pilot matrix X,
  N+1 IRS phase allocations V) and applies the LS estimator.
* :func:`sample_csi_statistical` skips the loop and adds Gaussian errors
  whose columns follow CN(0, (L/P_T) C_eta,k).

The experiments use the second one; the first exists to validate it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .config import NoiseModel, SystemConfig, power_per_subcarrier
from .errors import ConfigError
from .model import ChannelSet, frozen

__all__ = ["PilotPlan", "CsiEstimate", "build_pilot_plan", "perfect_csi",
           "ls_estimate_full", "ls_error_covariance",
           "sample_csi_statistical", "stack_channels"]


@dataclass(frozen=True)
class PilotPlan:
    """Pilot matrices X[l] (L, Np, Nt) and phase-allocation matrix V."""

    X: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    pilot_power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "X", frozen(self.X))
        object.__setattr__(self, "V", frozen(self.V))


@dataclass(frozen=True)
class CsiEstimate:
    """Channel knowledge available to the transceiver design.

    ``H_B`` is (L, K, Nr, Nt) and ``H_c`` holds the per-element cascaded
    estimates, (L, K, N, Nr, Nt).  ``error_scale`` is always L/P_T; the
    design decides whether to use it through ``mode``.
    """

    H_B: np.ndarray = field(repr=False)
    H_c: np.ndarray = field(repr=False)
    error_scale: float
    noise: NoiseModel = field(repr=False)
    mode: str = "robust"

    def __post_init__(self):
        object.__setattr__(self, "H_B", frozen(self.H_B))
        object.__setattr__(self, "H_c", frozen(self.H_c))
        L, K, Nr, Nt = self.H_B.shape
        if self.H_c.ndim != 5 or self.H_c.shape[:2] != (L, K) \
                or self.H_c.shape[3:] != (Nr, Nt):
            raise ConfigError(f"cascaded estimate shape {self.H_c.shape} "
                              f"does not match direct {self.H_B.shape}")

    @property
    def num_irs_elements(self) -> int:
        return self.H_c.shape[2]

    def equivalent(self, nu) -> np.ndarray:
        nu = np.asarray(getattr(nu, "nu", nu))
        return self.H_B + np.einsum("n,lknrt->lkrt", nu, self.H_c)

    def without_irs(self) -> "CsiEstimate":
        L, K, _, Nr, Nt = self.H_c.shape
        return CsiEstimate(self.H_B, np.zeros((L, K, 0, Nr, Nt)),
                           self.error_scale, self.noise, self.mode)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.H_B).tobytes())
        h.update(np.ascontiguousarray(self.H_c).tobytes())
        h.update(repr((self.error_scale, self.mode)).encode())
        return h.hexdigest()


def _unitary_dft(n: int) -> np.ndarray:
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def build_pilot_plan(config: SystemConfig) -> PilotPlan:
    """X[l] = sqrt(P_T/L) U (U unitary DFT); V Hadamard or DFT of order N+1."""
    p = power_per_subcarrier(config)
    Nt, L = config.num_tx_antennas, config.num_subcarriers
    X = np.broadcast_to(np.sqrt(p) * _unitary_dft(Nt), (L, Nt, Nt))
    n_nu = config.num_irs_elements + 1
    if n_nu & (n_nu - 1) == 0:
        V = hadamard(n_nu).astype(complex)
    else:
        V = _unitary_dft(n_nu) * np.sqrt(n_nu)
    return PilotPlan(X, V, p)


def stack_channels(channels: ChannelSet) -> np.ndarray:
    """[vec(H_B), vec(Hc_1), ..., vec(Hc_N)] per (l, k): (L, K, Nr Nt, N+1).

    vec() stacks columns.
    """
    L, K, Nr, Nt, N = channels.dims
    parts = np.concatenate([channels.H_B[:, :, None], channels.cascaded()],
                           axis=2)                       # (L, K, N+1, Nr, Nt)
    vecs = parts.transpose(0, 1, 2, 4, 3).reshape(L, K, N + 1, Nr * Nt)
    return vecs.transpose(0, 1, 3, 2)


def _unstack(stacked: np.ndarray, Nr: int, Nt: int):
    L, K, _, n_cols = stacked.shape
    mats = stacked.transpose(0, 1, 3, 2).reshape(L, K, n_cols, Nt, Nr)
    mats = mats.transpose(0, 1, 2, 4, 3)
    return mats[:, :, 0], mats[:, :, 1:]


def perfect_csi(channels: ChannelSet, config: SystemConfig,
                noise: NoiseModel = None) -> CsiEstimate:
    noise = noise or NoiseModel.from_config(config)
    return CsiEstimate(channels.H_B, channels.cascaded(), config.error_scale,
                       noise, "perfect")


def ls_estimate_full(channels: ChannelSet, plan: PilotPlan,
                     rng: np.random.Generator, config: SystemConfig,
                     noise: NoiseModel = None,
                     noiseless: bool = False) -> CsiEstimate:
    """Simulate the pilot phase and return the LS estimate.

    Each of the N+1 phase allocations transmits ``X / sqrt(N+1)`` so the
    whole training frame spends the energy of one weighted-unitary pilot
    block; with that normalisation every error column has covariance
    (L/P_T) I kron C_eta,k.
    """
    noise = noise or NoiseModel.from_config(config)
    L, K, Nr, Nt, N = channels.dims
    n_nu = N + 1
    if plan.V.shape != (n_nu, n_nu) or plan.X.shape[0] != L:
        raise ConfigError("pilot plan does not match the channel dimensions")
    Np = plan.X.shape[1]
    XI = np.stack([np.kron(plan.X[ell], np.eye(Nr)) for ell in range(L)])
    XtX = np.einsum("lpi,lpj->lij", plan.X.conj(), plan.X)
    VVh = plan.V @ plan.V.conj().T
    if not (np.allclose(XtX, plan.pilot_power * np.eye(Nt), atol=1e-9
                        * plan.pilot_power)
            and np.allclose(VVh, n_nu * np.eye(n_nu), atol=1e-9 * n_nu)):
        raise ConfigError("pilot plan is singular or not weighted-unitary")

    H = stack_channels(channels)
    Y = np.einsum("lab,lkbc,cd->lkad", XI, H, plan.V) / np.sqrt(n_nu)
    if not noiseless:
        Z = (rng.standard_normal((L, K, Np, Nr, n_nu))
             + 1j * rng.standard_normal((L, K, Np, Nr, n_nu))) / np.sqrt(2)
        colored = np.einsum("krs,lkpsc->lkprc", noise.sqrt(), Z)
        Y = Y + colored.reshape(L, K, Np * Nr, n_nu)

    # pseudoinverses from the plan's orthogonality: scaled adjoints
    XI_pinv = np.conj(np.swapaxes(XI, -1, -2)) / plan.pilot_power
    V_pinv = plan.V.conj().T / n_nu
    H_hat = np.sqrt(n_nu) * np.einsum("lab,lkbc,cd->lkad", XI_pinv, Y, V_pinv)
    H_B, H_c = _unstack(H_hat, Nr, Nt)
    return CsiEstimate(H_B, H_c, config.error_scale, noise, config.csi_mode)


def ls_error_covariance(config: SystemConfig,
                        noise: NoiseModel = None) -> np.ndarray:
    """(L/P_T) I_Nt kron C_eta,k for every user, shape (K, Nr Nt, Nr Nt)."""
    noise = noise or NoiseModel.from_config(config)
    eye = np.eye(config.num_tx_antennas)
    return config.error_scale * np.stack([np.kron(eye, c) for c in noise.cov])


def sample_csi_statistical(channels: ChannelSet, config: SystemConfig,
                           rng: np.random.Generator,
                           noise: NoiseModel = None) -> CsiEstimate:
    noise = noise or NoiseModel.from_config(config)
    if config.csi_mode == "perfect":
        return perfect_csi(channels, config, noise)
    L, K, Nr, Nt, N = channels.dims
    scale = np.sqrt(config.error_scale / 2.0)

    def draw(shape):
        z = scale * (rng.standard_normal(shape)
                     + 1j * rng.standard_normal(shape))
        # columns of C^{1/2} Z have covariance C
        return np.einsum("krs,lk...st->lk...rt", noise.sqrt(), z)

    H_B = channels.H_B + draw((L, K, Nr, Nt))
    H_c = channels.cascaded() + draw((L, K, N, Nr, Nt))
    return CsiEstimate(H_B, H_c, config.error_scale, noise, config.csi_mode)
