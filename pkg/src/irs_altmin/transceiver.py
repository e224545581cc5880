"""Closed-form transceiver math: robust MMSE filters, MSEs, duality maps.

Everything is vectorised over subcarriers and users.  Shapes (S is the
largest stream count; unused stream slots are zero columns/rows):

* ``P`` downlink precoders  (L, K, Nt, S)
* ``W`` downlink filters    (L, K, S, Nr)
* ``T`` dual-MAC precoders  (L, K, Nr, S)
* ``G`` dual-MAC filters    (L, K, S, Nt)

``e`` below denotes the estimation-error scale used by the design
(L/P_T for the robust design, 0 otherwise).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import NoiseModel, SystemConfig, power_per_subcarrier
from .csi import CsiEstimate, perfect_csi
from .errors import DegenerateStateError
from .model import ChannelSet, IrsPhases, frozen

log = logging.getLogger(__name__)

__all__ = ["DesignProblem", "TransceiverState", "hermitian",
           "interference_plus_noise_cov", "mmse_downlink_filter",
           "downlink_mse", "downlink_mse_closed", "mmse_uplink_filter",
           "uplink_mse", "uplink_mse_with_filter", "mac_to_bc", "bc_to_mac",
           "mrt_precoders", "sum_rate", "stream_mask"]


def hermitian(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def _trace(x: np.ndarray) -> np.ndarray:
    return np.einsum("...ii->...", x)


def _fro2(x: np.ndarray, axes) -> np.ndarray:
    return np.sum(np.abs(x) ** 2, axis=axes)


def stream_mask(ns: np.ndarray, smax: int) -> np.ndarray:
    """Boolean (L, K, S) mask of active stream slots."""
    return np.arange(smax)[None, None, :] < np.asarray(ns)[..., None]


@dataclass(frozen=True)
class DesignProblem:
    """What the transceiver design sees: estimates, noise, budget, streams."""

    H_B: np.ndarray = field(repr=False)        # (L, K, Nr, Nt)
    H_c: np.ndarray = field(repr=False)        # (L, K, N, Nr, Nt)
    noise: NoiseModel = field(repr=False)
    error_scale: float                         # e used inside the design
    power: float                               # P_T / L
    streams: np.ndarray = field(repr=False)    # (L, K) ints

    def __post_init__(self):
        object.__setattr__(self, "H_B", frozen(self.H_B))
        object.__setattr__(self, "H_c", frozen(self.H_c))
        ns = np.array(self.streams, dtype=int)
        ns.setflags(write=False)
        object.__setattr__(self, "streams", ns)
        object.__setattr__(self, "_c_sqrt", self.noise.sqrt())
        object.__setattr__(self, "_c_isqrt", self.noise.inv_sqrt())

    @classmethod
    def from_csi(cls, csi: CsiEstimate, config: SystemConfig,
                 robust: bool = None) -> "DesignProblem":
        if robust is None:
            robust = csi.mode == "robust"
        e = csi.error_scale if robust else 0.0
        return cls(csi.H_B, csi.H_c, csi.noise, e,
                   power_per_subcarrier(config), config.stream_counts())

    @classmethod
    def from_channels(cls, channels: ChannelSet, config: SystemConfig,
                      noise: NoiseModel = None) -> "DesignProblem":
        """Perfect-CSI design on the true channels."""
        return cls.from_csi(perfect_csi(channels, config, noise), config,
                            robust=False)

    # dimensions ---------------------------------------------------------
    @property
    def dims(self):
        """(L, K, Nr, Nt, N, S)."""
        L, K, Nr, Nt = self.H_B.shape
        return L, K, Nr, Nt, self.H_c.shape[2], int(self.streams.max())

    @property
    def num_irs_elements(self) -> int:
        return self.H_c.shape[2]

    @property
    def mask(self) -> np.ndarray:
        return stream_mask(self.streams, self.dims[-1])

    @property
    def num_padded(self) -> np.ndarray:
        """Unused stream slots per subcarrier, (L,)."""
        L, K, *_, S = self.dims
        return K * S - self.streams.sum(axis=1)

    @property
    def c_sqrt(self) -> np.ndarray:
        return self._c_sqrt

    @property
    def c_isqrt(self) -> np.ndarray:
        return self._c_isqrt

    @property
    def robust_factor(self) -> float:
        """(N + 1) e."""
        return (self.num_irs_elements + 1) * self.error_scale

    def equivalent(self, nu) -> np.ndarray:
        nu = np.asarray(getattr(nu, "nu", nu))
        if nu.size != self.num_irs_elements:
            raise ValueError(f"expected {self.num_irs_elements} IRS phases, "
                             f"got {nu.size}")
        if nu.size == 0:
            return np.array(self.H_B)
        return self.H_B + np.einsum("n,lknrt->lkrt", nu, self.H_c)

    def without_irs(self) -> "DesignProblem":
        L, K, Nr, Nt = self.H_B.shape
        return DesignProblem(self.H_B, np.zeros((L, K, 0, Nr, Nt)),
                             self.noise, self.error_scale, self.power,
                             self.streams)

    def with_error_scale(self, e: float) -> "DesignProblem":
        return DesignProblem(self.H_B, self.H_c, self.noise, e, self.power,
                             self.streams)


@dataclass
class TransceiverState:
    """Downlink and dual-MAC transceivers plus the IRS phases they go with."""

    P: np.ndarray
    W: np.ndarray
    T: np.ndarray
    G: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    nu: IrsPhases


# downlink -------------------------------------------------------------------
def _received_covariances(prob: DesignProblem, P, nu):
    """He, per-pair HP products and the total received covariance R."""
    He = prob.equivalent(nu)
    HP = np.einsum("lkrt,lits->lkirs", He, P)            # (L, K, K, Nr, S)
    signal = HP @ hermitian(HP)                          # (L, K, K, Nr, Nr)
    tx_power = _fro2(P, (1, 2, 3))                       # (L,)
    noise = prob.noise.cov[None] * (
        1.0 + prob.robust_factor * tx_power)[:, None, None, None]
    return He, HP, signal, noise


def interference_plus_noise_cov(prob: DesignProblem, P: np.ndarray,
                                nu) -> np.ndarray:
    """C_IN for every (l, k), shape (L, K, Nr, Nr)."""
    _, _, signal, noise = _received_covariances(prob, P, nu)
    own = np.einsum("lkkrs->lkrs", signal)
    return signal.sum(axis=2) - own + noise


def mmse_downlink_filter(prob: DesignProblem, P: np.ndarray,
                         nu) -> np.ndarray:
    """W_k = P_k^H He^H (He P_k P_k^H He^H + C_IN)^{-1}."""
    He, HP, signal, noise = _received_covariances(prob, P, nu)
    R = signal.sum(axis=2) + noise
    HPk = np.einsum("lkkrs->lkrs", HP)
    return hermitian(np.linalg.solve(R, HPk))


def downlink_mse(prob: DesignProblem, P: np.ndarray, W: np.ndarray,
                 nu) -> np.ndarray:
    """Robust downlink MSE of every (l, k) for arbitrary filters, (L, K).

    Includes the error terms of the direct estimate and of the N
    cascaded estimates, i.e. the factor (1 + ||nu||^2).
    """
    nu_arr = np.asarray(getattr(nu, "nu", nu))
    He = prob.equivalent(nu_arr)
    Q = np.einsum("lits,lius->ltu", P, P.conj())         # (L, Nt, Nt)
    WH = W @ He                                          # (L, K, S, Nt)
    C = prob.noise.cov[None]
    quad = np.real(_trace(WH @ Q[:, None] @ hermitian(WH)))
    wcw = np.real(_trace(W @ C @ hermitian(W)))
    err = (1.0 + np.sum(np.abs(nu_arr) ** 2)) * prob.error_scale
    robust = err * np.real(_trace(Q))[:, None] * wcw
    cross = np.real(_trace(WH @ P))
    return quad + wcw + robust - 2.0 * cross + prob.streams


def downlink_mse_closed(prob: DesignProblem, P: np.ndarray,
                        nu) -> np.ndarray:
    """tr (I + P_k^H He^H C_IN^{-1} He P_k)^{-1} for every (l, k)."""
    He = prob.equivalent(nu)
    C_IN = interference_plus_noise_cov(prob, P, nu)
    HPk = He @ P
    S = P.shape[-1]
    M = np.eye(S) + hermitian(HPk) @ np.linalg.solve(C_IN, HPk)
    pad = S - prob.streams
    return np.real(_trace(np.linalg.inv(M))) - pad


# uplink ---------------------------------------------------------------------
def _uplink_parts(prob: DesignProblem, T: np.ndarray, nu):
    """Stacked effective uplink channel A (L, Nt, K S) and gamma (L,)."""
    L, K, Nr, Nt, N, S = prob.dims
    He = prob.equivalent(nu)
    CT = prob.c_isqrt[None] @ T                          # (L, K, Nr, S)
    A = hermitian(He) @ CT                               # (L, K, Nt, S)
    A_all = A.transpose(0, 2, 1, 3).reshape(L, Nt, K * S)
    gamma = 1.0 + prob.robust_factor * _fro2(T, (1, 2, 3))
    return A_all, gamma, CT


def mmse_uplink_filter(prob: DesignProblem, T: np.ndarray, nu) -> np.ndarray:
    """G = A^H (A A^H + gamma I)^{-1}, returned per user as (L, K, S, Nt)."""
    L, K, Nr, Nt, N, S = prob.dims
    A, gamma, _ = _uplink_parts(prob, T, nu)
    R = A @ hermitian(A) + gamma[:, None, None] * np.eye(Nt)
    G_all = hermitian(np.linalg.solve(R, A))             # (L, K S, Nt)
    return G_all.reshape(L, K, S, Nt)


def _uplink_B(prob: DesignProblem, T, nu):
    A, gamma, CT = _uplink_parts(prob, T, nu)
    B = np.eye(A.shape[-1]) + hermitian(A) @ A / gamma[:, None, None]
    return A, gamma, CT, B


def uplink_mse(prob: DesignProblem, T: np.ndarray, nu,
               per_subcarrier: bool = False):
    """Dual-MAC sum-MSE tr B^{-1}, total or per subcarrier (L,)."""
    _, _, _, B = _uplink_B(prob, T, nu)
    per = np.real(_trace(np.linalg.inv(B))) - prob.num_padded
    return per if per_subcarrier else float(per.sum())


def uplink_mse_with_filter(prob: DesignProblem, T: np.ndarray, G: np.ndarray,
                           nu) -> np.ndarray:
    """Uplink sum-MSE per subcarrier for an arbitrary filter G."""
    L, K, Nr, Nt, N, S = prob.dims
    A, gamma, _ = _uplink_parts(prob, T, nu)
    G_all = G.reshape(L, K * S, Nt)
    GA = G_all @ A
    quad = _fro2(GA, (1, 2)) + gamma * _fro2(G_all, (1, 2))
    return quad - 2.0 * np.real(_trace(GA)) + prob.streams.sum(axis=1)


# duality --------------------------------------------------------------------
def mac_to_bc(G: np.ndarray, power: float):
    """P = xi G^H with xi = sqrt(P_l / sum ||G||^2)."""
    norm2 = _fro2(G, (1, 2, 3))
    if np.any(norm2 <= 0.0):
        raise DegenerateStateError("all-zero uplink filters on subcarrier(s) "
                                   f"{np.flatnonzero(norm2 <= 0).tolist()}")
    xi = np.sqrt(power / norm2)
    return xi[:, None, None, None] * hermitian(G), xi


def bc_to_mac(W: np.ndarray, power: float, c_sqrt: np.ndarray):
    """T_k = zeta C_k^{1/2} W_k^H, zeta normalising the uplink power to P_l.

    With C = I this is T = zeta W^H, zeta = sqrt(P_l / sum ||W||^2).
    """
    CW = c_sqrt[None] @ hermitian(W)                     # (L, K, Nr, S)
    norm2 = _fro2(CW, (1, 2, 3))
    if np.any(norm2 <= 0.0):
        raise DegenerateStateError("all-zero downlink filters on "
                                   "subcarrier(s) "
                                   f"{np.flatnonzero(norm2 <= 0).tolist()}")
    zeta = np.sqrt(power / norm2)
    return zeta[:, None, None, None] * CW, zeta


# MRT ------------------------------------------------------------------------
def mrt_precoders(prob: DesignProblem, nu, total_power: float = None):
    """Leading right singular vectors of He, uniform power per column.

    Every active column gets P_T / (K L N_s).  Columns beyond the rank of
    the channel get zero power; their number is returned alongside P.
    The first non-negligible entry of each column is made real positive.
    """
    L, K, Nr, Nt, N, S = prob.dims
    total_power = prob.power * L if total_power is None else total_power
    He = prob.equivalent(nu)
    _, sv, Vh = np.linalg.svd(He)                        # Vh (L, K, Nt, Nt)
    V = hermitian(Vh)[..., :S]                           # (L, K, Nt, S)

    lead = np.argmax(np.abs(V) > 1e-12 * np.abs(V).max(axis=-2,
                                                      keepdims=True),
                     axis=-2)
    first = np.take_along_axis(V, lead[..., None, :], axis=-2)
    phase = np.where(np.abs(first) > 0, first / np.abs(first), 1.0)
    V = V * phase.conj()

    sv_pad = np.zeros((L, K, S))
    r = min(S, sv.shape[-1])
    sv_pad[..., :r] = sv[..., :r]
    tol = max(Nr, Nt) * np.finfo(float).eps * sv.max(axis=-1, keepdims=True)
    active = prob.mask & (sv_pad > tol)
    deficient = int(np.sum(prob.mask & ~active))
    if deficient:
        log.debug("MRT: %d rank-deficient stream(s) get zero power",
                  deficient)
    col_power = total_power / (K * L * np.maximum(prob.streams, 1))
    P = V * (np.sqrt(col_power)[..., None, None] * active[:, :, None, :])
    return P, deficient


# sum-rate -------------------------------------------------------------------
def sum_rate(H_eq: np.ndarray, P: np.ndarray, W: np.ndarray,
             noise_cov: np.ndarray, streams: np.ndarray = None) -> float:
    """Sum over (l, k) of log2 det(I + X_k^{-1} W_k H_k P_k P_k^H H_k^H W_k^H).

    ``H_eq`` must be the true equivalent channel.  X_k is the filtered
    interference-plus-noise covariance; a singular X_k is regularised
    with 1e-12 I and counted in a warning.
    """
    S = W.shape[2]
    WHP = np.einsum("lksr,lkrt,litu->lkisu", W, H_eq, P)  # (L, K, K, S, S)
    cov = WHP @ hermitian(WHP)
    own = np.einsum("lkksu->lksu", cov)
    X = cov.sum(axis=2) - own + W @ noise_cov[None] @ hermitian(W)
    if streams is not None:
        pad = ~stream_mask(streams, S)
        X = X + pad[..., None] * np.eye(S)
    X = 0.5 * (X + hermitian(X))
    Y = X + own
    eig = np.linalg.eigvalsh(X)
    singular = eig[..., 0] <= 1e-13 * np.maximum(eig[..., -1], 1e-300)
    if np.any(singular):
        log.warning("sum_rate: regularised %d singular interference "
                    "matrices", int(singular.sum()))
        reg = singular[..., None, None] * (1e-12 * np.eye(S))
        X, Y = X + reg, Y + reg
    _, logdet_y = np.linalg.slogdet(Y)
    _, logdet_x = np.linalg.slogdet(X)
    rate = (logdet_y - logdet_x) / np.log(2.0)
    return float(max(rate.sum(), 0.0))
