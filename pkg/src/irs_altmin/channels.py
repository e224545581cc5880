"""Clustered delay-tap mmWave channels with UPA arrays.

The time-domain taps follow the sum-of-paths model with raised-cosine
pulse shaping; frequency responses are obtained with an L-point sum over
the taps.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .config import SystemConfig
from .errors import ConfigError
from .model import ChannelSet

SPEED_OF_LIGHT = 299_792_458.0

__all__ = ["PathParams", "ArrayGeometry", "raised_cosine", "upa_response",
           "gen_time_taps", "taps_to_frequency", "draw_paths", "gen_link",
           "gen_scenario", "upa_shape", "write_channel_dump",
           "read_channel_dump"]


@dataclass(frozen=True)
class PathParams:
    """One propagation path: complex gain, delay (s) and four angles (rad)."""

    gain: complex
    delay: float
    aoa_azimuth: float
    aoa_elevation: float
    aod_azimuth: float
    aod_elevation: float


@dataclass(frozen=True)
class ArrayGeometry:
    n_a: int
    n_b: int
    spacing: float

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 1:
            raise ConfigError("UPA dimensions must be positive")

    @property
    def size(self) -> int:
        return self.n_a * self.n_b

    @classmethod
    def for_ports(cls, n: int, carrier_freq: float) -> "ArrayGeometry":
        """Squarest UPA with ``n`` ports and half-wavelength spacing."""
        n_a, n_b = upa_shape(n)
        return cls(n_a, n_b, SPEED_OF_LIGHT / carrier_freq / 2.0)


def upa_shape(n: int):
    """Factor ``n = n_a * n_b`` with n_a the largest divisor <= ceil(sqrt n)."""
    if n < 1:
        raise ConfigError("array must have at least one element")
    n_a = math.isqrt(n)
    if n_a * n_a < n:
        n_a += 1
    while n % n_a:
        n_a -= 1
    return n_a, n // n_a


def raised_cosine(t, T_s: float, rolloff: float):
    """Raised-cosine pulse, with its finite limit at t = +-T_s/(2 rolloff)."""
    t = np.asarray(t, dtype=float)
    x = t / T_s
    sinc = np.sinc(x)
    if rolloff == 0.0:
        return sinc
    denom = 1.0 - (2.0 * rolloff * x) ** 2
    singular = np.abs(denom) < 1e-10
    safe = np.where(singular, 1.0, denom)
    out = sinc * np.cos(np.pi * rolloff * x) / safe
    limit = np.pi / 4.0 * np.sinc(1.0 / (2.0 * rolloff))
    return np.where(singular, limit, out)


def upa_response(azimuth, elevation, geom: ArrayGeometry, freq: float):
    """Unit-norm UPA steering vector(s).

    Element (p, q) sits at index ``p * n_b + q``.  Broadcasting over
    array-valued angles adds leading axes.
    """
    azimuth = np.asarray(azimuth, dtype=float)[..., None, None]
    elevation = np.asarray(elevation, dtype=float)[..., None, None]
    k = 2.0 * np.pi * geom.spacing * freq / SPEED_OF_LIGHT
    p = np.arange(geom.n_a)[:, None]
    q = np.arange(geom.n_b)[None, :]
    phase = k * (p * np.sin(azimuth) * np.sin(elevation)
                 + q * np.cos(elevation))
    vec = np.exp(1j * phase) / math.sqrt(geom.size)
    return vec.reshape(vec.shape[:-2] + (geom.size,))


def gen_time_taps(paths: Sequence[PathParams], geom_rx: ArrayGeometry,
                  geom_tx: ArrayGeometry, config: SystemConfig,
                  freq: float = None) -> np.ndarray:
    """Delay-tap matrices, shape (L_D, N_rx, N_tx).

    The array responses are evaluated at ``freq`` (carrier by default).
    """
    if not paths:
        raise ConfigError("at least one path is required")
    freq = config.carrier_freq if freq is None else freq
    T_s = 1.0 / config.sample_rate
    gamma = math.sqrt(geom_rx.size * geom_tx.size / len(paths))

    gains = np.array([p.gain for p in paths], dtype=complex)
    delays = np.array([p.delay for p in paths])
    a_r = upa_response([p.aoa_azimuth for p in paths],
                       [p.aoa_elevation for p in paths], geom_rx, freq)
    a_t = upa_response([p.aod_azimuth for p in paths],
                       [p.aod_elevation for p in paths], geom_tx, freq)
    m = np.arange(config.num_delay_taps)
    pulse = raised_cosine(m[:, None] * T_s - delays[None, :], T_s,
                          config.rolloff)
    return gamma * np.einsum("j,mj,jr,jt->mrt", gains, pulse, a_r,
                             a_t.conj())


def taps_to_frequency(taps, L: int, sign: int = 1) -> np.ndarray:
    """H[l] = sum_m taps[m] exp(sign * j 2 pi m l / L), l = 0..L-1."""
    taps = np.asarray(taps)
    n_taps = taps.shape[0]
    if L < n_taps:
        raise ConfigError("number of subcarriers must be >= number of taps")
    ell = np.arange(L)
    m = np.arange(n_taps)
    phasor = np.exp(sign * 2j * np.pi * np.outer(ell, m) / L)
    return np.tensordot(phasor, taps, axes=(1, 0))


def draw_paths(n_paths: int, config: SystemConfig,
               rng: np.random.Generator) -> List[PathParams]:
    T_s = 1.0 / config.sample_rate
    gains = (rng.standard_normal(n_paths)
             + 1j * rng.standard_normal(n_paths)) / math.sqrt(2.0)
    delays = rng.uniform(0.0, (config.num_delay_taps - 1) * T_s, n_paths)
    angles = rng.uniform(0.0, np.pi, (n_paths, 4))
    return [PathParams(complex(g), float(d), *map(float, a))
            for g, d, a in zip(gains, delays, angles)]


def gen_link(n_paths: int, geom_rx: ArrayGeometry, geom_tx: ArrayGeometry,
             config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw one link and return its (L, N_rx, N_tx) frequency response."""
    taps = gen_time_taps(draw_paths(n_paths, config, rng), geom_rx, geom_tx,
                         config)
    return taps_to_frequency(taps, config.num_subcarriers, config.freq_sign)


def gen_scenario(config: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw every link of one realization.

    Draw order is fixed (BS-IRS, then per user: direct, IRS-user) so a
    given generator state always yields the same ChannelSet.
    """
    fc = config.carrier_freq
    bs = ArrayGeometry.for_ports(config.num_tx_antennas, fc)
    ue = ArrayGeometry.for_ports(config.num_rx_antennas, fc)
    L, K = config.num_subcarriers, config.num_users
    N = config.num_irs_elements
    Nr, Nt = config.num_rx_antennas, config.num_tx_antennas

    H_B = np.empty((L, K, Nr, Nt), dtype=complex)
    H_I = np.zeros((L, K, Nr, N), dtype=complex)
    if N > 0:
        irs = ArrayGeometry.for_ports(N, fc)
        H_BI = gen_link(config.paths_bs_irs, irs, bs, config, rng)
        H_BI = H_BI * math.sqrt(config.irs_link_gain)
    else:
        H_BI = np.zeros((L, 0, Nt), dtype=complex)
    for k in range(K):
        H_B[:, k] = gen_link(config.paths_direct, ue, bs, config, rng)
        if N > 0:
            H_I[:, k] = gen_link(config.paths_irs_user, ue, irs, config, rng)
    H_B *= math.sqrt(config.direct_link_gain)
    return ChannelSet(H_B, H_BI, H_I)


# channel dump ---------------------------------------------------------------
_MAGIC = b"IRSCHAN1"
_LINKS = {"B": 0, "BI": 1, "I": 2}
_HEADER = struct.Struct("<Biiii")


def write_channel_dump(path, channels: ChannelSet) -> None:
    """Binary dump: one record per (link, k, l).

    Record = little-endian header (link u8, k i32, l i32, rows i32,
    cols i32) followed by rows*cols (re, im) float64 pairs in row-major
    order.  ``k`` is -1 for the BS-IRS link.
    """
    L, K, *_ = channels.dims
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        for ell in range(L):
            _write_record(fh, "BI", -1, ell, channels.H_BI[ell])
            for k in range(K):
                _write_record(fh, "B", k, ell, channels.H_B[ell, k])
                _write_record(fh, "I", k, ell, channels.H_I[ell, k])


def _write_record(fh, link, k, ell, mat):
    rows, cols = mat.shape
    fh.write(_HEADER.pack(_LINKS[link], k, ell, rows, cols))
    pairs = np.empty((rows, cols, 2), dtype="<f8")
    pairs[..., 0] = mat.real
    pairs[..., 1] = mat.imag
    fh.write(pairs.tobytes())


def read_channel_dump(path) -> ChannelSet:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ConfigError(f"{path}: not a channel dump")
    pos = len(_MAGIC)
    records = {}
    names = {v: k for k, v in _LINKS.items()}
    while pos < len(data):
        link, k, ell, rows, cols = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        n = rows * cols * 2
        pairs = np.frombuffer(data, dtype="<f8", count=n, offset=pos)
        pos += 8 * n
        pairs = pairs.reshape(rows, cols, 2)
        records[(names[link], k, ell)] = pairs[..., 0] + 1j * pairs[..., 1]
    L = 1 + max(key[2] for key in records)
    K = 1 + max(key[1] for key in records)
    H_BI = np.stack([records[("BI", -1, ell)] for ell in range(L)])
    H_B = np.stack([[records[("B", k, ell)] for k in range(K)]
                    for ell in range(L)])
    H_I = np.stack([[records[("I", k, ell)] for k in range(K)]
                    for ell in range(L)])
    return ChannelSet(H_B, H_BI, H_I)
