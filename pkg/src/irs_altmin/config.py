"""Scenario configuration, noise model and power conventions.

All powers are linear. dB only appears in ``snr_db`` and at the CLI.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml

from .errors import ConfigError

__all__ = ["SystemConfig", "NoiseModel", "power_per_subcarrier",
           "load_config", "CSI_MODES"]

CSI_MODES = ("perfect", "robust", "non_robust")

StreamSpec = Union[int, Sequence[Sequence[int]]]


@dataclass(frozen=True)
class SystemConfig:
    """Every constant of one simulated scenario.

    Defaults give the full-size scenario (K=3, Nr=4, Nt=9, L=32,
    N=25, two streams per user).  Use :meth:`desk` for the small
    configuration used throughout the test-suite.

    ``streams`` is either one integer (same count for every user and
    subcarrier) or a K x L nested sequence.
    ``total_power`` may be left as ``None``; it is then derived from
    ``snr_db`` with the per-subcarrier convention
    ``P_T = L * 10**(snr_db/10) * noise_power``.
    """

    num_tx_antennas: int = 9
    num_rx_antennas: int = 4
    num_users: int = 3
    num_subcarriers: int = 32
    num_irs_elements: int = 25
    streams: StreamSpec = 2
    snr_db: float = 10.0
    noise_power: float = 1.0
    total_power: Optional[float] = None

    carrier_freq: float = 28e9
    bandwidth: float = 400e6
    sample_rate: float = 1760e6
    num_delay_taps: int = 8
    paths_bs_irs: int = 4
    paths_irs_user: int = 4
    paths_direct: int = 4
    direct_link_gain: float = 1.0
    irs_link_gain: float = 1.0
    rolloff: float = 0.25
    freq_sign: int = 1

    pg_initial_step: float = 1.0
    mse_tolerance: Optional[float] = None
    max_iterations: int = 100
    max_halvings: int = 30
    reset_step: bool = False

    rng_seed: int = 0
    csi_mode: str = "robust"
    quantization_bits: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.streams, (int, np.integer)):
            object.__setattr__(
                self, "streams", tuple(tuple(int(s) for s in row)
                                       for row in self.streams))
        self._validate()

    @classmethod
    def desk(cls, **overrides) -> "SystemConfig":
        """Small scenario: K=2, Nr=2, Nt=4, L=8, N=9, one stream, 10 dB."""
        base = dict(num_tx_antennas=4, num_rx_antennas=2, num_users=2,
                    num_subcarriers=8, num_irs_elements=9, streams=1,
                    snr_db=10.0)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def _validate(self):
        positive_ints = ("num_tx_antennas", "num_rx_antennas", "num_users",
                         "num_subcarriers", "num_delay_taps", "paths_bs_irs",
                         "paths_irs_user", "paths_direct", "max_iterations",
                         "max_halvings")
        for name in positive_ints:
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, "
                                  f"got {value!r}")
        if self.num_irs_elements < 0:
            raise ConfigError("num_irs_elements must be non-negative")
        if self.noise_power <= 0:
            raise ConfigError("noise_power must be positive")
        if self.total_power is not None and self.total_power <= 0:
            raise ConfigError("total_power must be positive")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError("rolloff must lie in [0, 1]")
        if self.freq_sign not in (1, -1):
            raise ConfigError("freq_sign must be +1 or -1")
        if self.pg_initial_step <= 0:
            raise ConfigError("pg_initial_step must be positive")
        if self.mse_tolerance is not None and self.mse_tolerance <= 0:
            raise ConfigError("mse_tolerance must be positive")
        if self.csi_mode not in CSI_MODES:
            raise ConfigError(f"csi_mode must be one of {CSI_MODES}")
        if self.quantization_bits is not None and self.quantization_bits < 1:
            raise ConfigError("quantization_bits must be >= 1")
        if self.num_subcarriers < self.num_delay_taps:
            raise ConfigError("num_subcarriers must be >= num_delay_taps")

        ns = self.stream_counts()
        if ns.shape != (self.num_subcarriers, self.num_users):
            raise ConfigError("streams map must be K x L")
        if np.any(ns < 1):
            raise ConfigError("stream counts must be positive")
        if np.any(ns > min(self.num_rx_antennas, self.num_tx_antennas)):
            raise ConfigError("streams per user exceed min(Nr, Nt)")
        if np.any(ns.sum(axis=1) > self.num_tx_antennas):
            raise ConfigError("total streams per subcarrier exceed Nt")

    # derived quantities ---------------------------------------------------
    def stream_counts(self) -> np.ndarray:
        """Integer array of shape (L, K)."""
        if isinstance(self.streams, (int, np.integer)):
            return np.full((self.num_subcarriers, self.num_users),
                           int(self.streams))
        arr = np.asarray(self.streams, dtype=int)
        if arr.ndim != 2:
            raise ConfigError("streams map must be a K x L nested list")
        return arr.T

    @property
    def max_streams(self) -> int:
        return int(self.stream_counts().max())

    @property
    def P_T(self) -> float:
        if self.total_power is not None:
            return float(self.total_power)
        return (self.num_subcarriers * 10.0 ** (self.snr_db / 10.0)
                * self.noise_power)

    @property
    def error_scale(self) -> float:
        """Variance scale L/P_T of the LS estimation error."""
        return self.num_subcarriers / self.P_T

    @property
    def design_error_scale(self) -> float:
        """Error scale used by the transceiver design (0 unless robust)."""
        return self.error_scale if self.csi_mode == "robust" else 0.0

    @property
    def tolerance(self) -> float:
        if self.mse_tolerance is not None:
            return float(self.mse_tolerance)
        return 1e-5 * float(self.stream_counts().sum())

    def subcarrier_freqs(self) -> np.ndarray:
        ell = np.arange(self.num_subcarriers)
        return self.carrier_freq + self.bandwidth * (
            ell / self.num_subcarriers - 0.5)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if isinstance(self.streams, tuple):
            out["streams"] = [list(r) for r in self.streams]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def power_per_subcarrier(config: SystemConfig) -> float:
    return config.P_T / config.num_subcarriers


def load_config(path) -> SystemConfig:
    """Read a YAML (or JSON) file whose keys are SystemConfig fields."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return SystemConfig.from_dict(data)


@dataclass(frozen=True)
class NoiseModel:
    """Per-user receive noise covariance, stacked as (K, Nr, Nr)."""

    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        cov = np.array(self.cov, dtype=complex)
        if cov.ndim != 3 or cov.shape[1] != cov.shape[2]:
            raise ConfigError("noise covariance must have shape (K, Nr, Nr)")
        if not np.allclose(cov, cov.conj().transpose(0, 2, 1),
                           atol=1e-12, rtol=0):
            raise ConfigError("noise covariance must be Hermitian")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ConfigError("noise covariance must be positive definite")
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_config(cls, config: SystemConfig) -> "NoiseModel":
        eye = np.eye(config.num_rx_antennas)
        return cls(np.broadcast_to(config.noise_power * eye,
                                   (config.num_users,) + eye.shape))

    @property
    def is_scaled_identity(self) -> bool:
        diag = np.einsum("kii->ki", self.cov)
        off = self.cov - np.einsum("ki,ij->kij", diag,
                                   np.eye(self.cov.shape[1]))
        return bool(np.all(off == 0) and np.all(diag == diag[:, :1]))

    def sqrt(self) -> np.ndarray:
        """Hermitian principal square root of every user's covariance."""
        return self._power(0.5)

    def inv_sqrt(self) -> np.ndarray:
        return self._power(-0.5)

    def _power(self, p: float) -> np.ndarray:
        if self.is_scaled_identity:
            s = np.real(self.cov[:, 0, 0]) ** p
            return s[:, None, None] * np.eye(self.cov.shape[1])
        vals, vecs = np.linalg.eigh(self.cov)
        return np.einsum("kij,kj,klj->kil", vecs, vals ** p, vecs.conj())
