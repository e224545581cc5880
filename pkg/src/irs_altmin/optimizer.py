"""Alternating MSE minimisation over transceivers and IRS phases.

Each outer iteration runs one dual-MAC/broadcast duality round with the
IRS fixed, then one projected-gradient step on the IRS phases with the
dual-MAC precoders fixed.  The uplink sum-MSE never increases.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .config import SystemConfig
from .errors import ConfigError, DegenerateStateError
from .model import IrsPhases
from .transceiver import (DesignProblem, TransceiverState, _uplink_B,
                          bc_to_mac, hermitian, mac_to_bc,
                          mmse_downlink_filter, mmse_uplink_filter,
                          mrt_precoders, uplink_mse)

__all__ = ["PgSettings", "RunTrace", "VARIANTS", "mse_gradient_nu",
           "project_unit_modulus", "af_normalize", "pg_update",
           "alternating_minimize", "quantize_phases", "reoptimize_fixed",
           "write_trace_csv"]

# pg: unit-modulus projection; af: Frobenius-norm budget; fixed: IRS
# untouched; mrt: MRT precoders, IRS by projected gradient
VARIANTS = ("pg", "af", "fixed", "mrt")


@dataclass(frozen=True)
class PgSettings:
    step: float = 1.0
    tolerance: float = 1e-5
    max_iterations: int = 100
    max_halvings: int = 30
    reset_step: bool = False

    def __post_init__(self):
        if self.step <= 0 or self.tolerance <= 0:
            raise ConfigError("step and tolerance must be positive")
        if self.max_iterations < 1 or self.max_halvings < 1:
            raise ConfigError("max_iterations and max_halvings must be >= 1")

    @classmethod
    def from_config(cls, config: SystemConfig) -> "PgSettings":
        return cls(config.pg_initial_step, config.tolerance,
                   config.max_iterations, config.max_halvings,
                   config.reset_step)


@dataclass
class RunTrace:
    """Per-iteration record; entry 0 is the initial point."""

    mse: List[float] = field(default_factory=list)
    step: List[float] = field(default_factory=list)
    halvings: List[int] = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return max(len(self.mse) - 1, 0)

    def record(self, mse: float, step: float, halvings: int) -> None:
        self.mse.append(float(mse))
        self.step.append(float(step))
        self.halvings.append(int(halvings))

    def is_monotone(self, slack: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.mse) <= slack))


# gradient and projections ---------------------------------------------------
def mse_gradient_nu(prob: DesignProblem, T: np.ndarray, nu) -> np.ndarray:
    """Cogradient of the uplink sum-MSE with respect to nu.

    g_n = -sum_l tr(B^-2 M^H Hc_n He^H M) / gamma_l with M the
    block-diagonal stack of C_k^{-1/2} T_k.  The real MSE changes by
    2 Re(g^T dnu) for a small perturbation dnu.
    """
    L, K, Nr, Nt, N, S = prob.dims
    if N == 0:
        return np.zeros(0, dtype=complex)
    A, gamma, CT, B = _uplink_B(prob, T, nu)
    B_inv = np.linalg.inv(B)
    Y = A @ (B_inv @ B_inv)                               # (L, Nt, K S)
    Y = Y.reshape(L, Nt, K, S).transpose(0, 2, 1, 3)      # (L, K, Nt, S)
    Z = Y @ hermitian(CT)                                 # (L, K, Nt, Nr)
    Z = Z / gamma[:, None, None, None]
    return -np.einsum("lknrt,lktr->n", prob.H_c, Z)


def project_unit_modulus(nu_raw) -> IrsPhases:
    nu_raw = np.asarray(getattr(nu_raw, "nu", nu_raw), dtype=complex)
    mag = np.abs(nu_raw)
    tiny = mag < 1e-300
    safe = np.where(tiny, 1.0, mag)
    return IrsPhases(np.where(tiny, 1.0 + 0j, nu_raw / safe))


def af_normalize(nu_raw, n: int = None) -> np.ndarray:
    """Rescale to squared norm N."""
    nu_raw = np.asarray(getattr(nu_raw, "nu", nu_raw), dtype=complex)
    n = nu_raw.size if n is None else n
    norm = np.linalg.norm(nu_raw)
    if norm == 0.0:
        raise DegenerateStateError("cannot normalise an all-zero IRS vector")
    return np.sqrt(n) * nu_raw / norm


def _unit_projector(x):
    return project_unit_modulus(x).nu


def pg_update(prob: DesignProblem, nu, T: np.ndarray, step: float,
              settings: PgSettings,
              projector: Callable[[np.ndarray], np.ndarray] = None,
              mse_now: float = None):
    """One projected-gradient step with step halving.

    Returns ``(nu_new, step_new, halvings, mse_new)``.  When the halving
    budget runs out the incumbent ``nu`` is returned.
    """
    projector = projector or _unit_projector
    nu = np.asarray(getattr(nu, "nu", nu))
    if mse_now is None:
        mse_now = uplink_mse(prob, T, nu)
    g = mse_gradient_nu(prob, T, nu)
    if not np.any(g):
        return nu, step, 0, mse_now
    direction = np.conj(g)
    halvings = 0
    while True:
        cand = projector(nu - step * direction)
        mse_cand = uplink_mse(prob, T, cand)
        if mse_cand <= mse_now:
            return cand, step, halvings, mse_cand
        if halvings == settings.max_halvings:
            return nu, step, halvings, mse_now
        step /= 2.0
        halvings += 1


# main loop ------------------------------------------------------------------
def _duality_round(prob: DesignProblem, T: np.ndarray, nu):
    """Uplink MMSE -> broadcast precoders -> downlink MMSE -> dual-MAC."""
    G = mmse_uplink_filter(prob, T, nu)
    P, xi = mac_to_bc(G, prob.power)
    W = mmse_downlink_filter(prob, P, nu)
    T_new, zeta = bc_to_mac(W, prob.power, prob.c_sqrt)
    return G, P, xi, W, T_new, zeta


def _mrt_round(prob: DesignProblem, nu):
    P, _ = mrt_precoders(prob, nu)
    W = mmse_downlink_filter(prob, P, nu)
    T, zeta = bc_to_mac(W, prob.power, prob.c_sqrt)
    return P, W, T, zeta


def alternating_minimize(prob: DesignProblem, settings: PgSettings,
                         nu0, variant: str = "pg",
                         init_P: Optional[np.ndarray] = None):
    """Run the alternating minimisation from IRS phases ``nu0``.

    ``variant`` selects the IRS update (see ``VARIANTS``).  ``init_P``
    warm-starts the downlink precoders; by default MRT is used.
    Returns ``(TransceiverState, RunTrace)``; the returned transceivers
    are recomputed at the final IRS phases.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; "
                          f"expected one of {VARIANTS}")
    start = time.perf_counter()
    nu = np.asarray(getattr(nu0, "nu", nu0), dtype=complex)
    if prob.num_irs_elements == 0:
        variant = "fixed" if variant != "mrt" else variant
    projector = af_normalize if variant == "af" else _unit_projector
    if variant == "af":
        nu = af_normalize(nu)

    if init_P is None:
        P, _ = mrt_precoders(prob, nu)
    else:
        P = np.asarray(init_P)
    W = mmse_downlink_filter(prob, P, nu)
    T, _ = bc_to_mac(W, prob.power, prob.c_sqrt)
    mse = uplink_mse(prob, T, nu)
    trace = RunTrace()
    step = settings.step
    trace.record(mse, step, 0)

    for _ in range(settings.max_iterations):
        if variant == "mrt":
            P, W, T, _ = _mrt_round(prob, nu)
        else:
            _, P, _, W, T, _ = _duality_round(prob, T, nu)
        if settings.reset_step:
            step = settings.step
        halvings = 0
        if variant == "fixed":
            mse_new = uplink_mse(prob, T, nu)
        else:
            nu, step, halvings, mse_new = pg_update(prob, nu, T, step,
                                                    settings, projector)
        trace.record(mse_new, step, halvings)
        decrease = mse - mse_new
        mse = mse_new
        if decrease < settings.tolerance:
            trace.converged = True
            break

    state = _finalize(prob, T, nu, variant)
    trace.wall_time = time.perf_counter() - start
    return state, trace


def _finalize(prob: DesignProblem, T: np.ndarray, nu, variant: str):
    if variant == "mrt":
        P, W, T, zeta = _mrt_round(prob, nu)
        G = mmse_uplink_filter(prob, T, nu)
        xi = np.full(prob.dims[0], np.nan)
    else:
        G, P, xi, W, _, _ = _duality_round(prob, T, nu)
        zeta = np.sqrt(prob.power / np.sum(np.abs(prob.c_sqrt[None]
                                                  @ hermitian(W)) ** 2,
                                           axis=(1, 2, 3)))
    return TransceiverState(P, W, T, G, xi, zeta, IrsPhases(nu))


def reoptimize_fixed(prob: DesignProblem, settings: PgSettings, nu,
                     state: TransceiverState, variant: str = "pg"):
    """Re-fit transceivers to new (e.g. quantized) IRS phases.

    MRT-based designs simply recompute MRT; the others run duality
    rounds with the IRS frozen, warm-started from ``state.P``.
    """
    if variant == "mrt":
        return alternating_minimize(
            prob, PgSettings(settings.step, settings.tolerance, 1,
                             settings.max_halvings), nu, "mrt")[0]
    return alternating_minimize(prob, settings, nu, "fixed",
                                init_P=state.P)[0]


def quantize_phases(nu, bits: int, keep_magnitude: bool = False) -> IrsPhases:
    """Snap every phase to the nearest multiple of 2 pi / 2^bits.

    Exact ties go to the smaller angle.
    """
    if bits < 1:
        raise ConfigError("bits must be >= 1")
    nu = np.asarray(getattr(nu, "nu", nu), dtype=complex)
    levels = 2 ** bits
    unit = 2.0 * np.pi / levels
    theta = np.mod(np.angle(nu), 2.0 * np.pi)
    m = np.mod(np.ceil(theta / unit - 0.5), levels)
    out = np.exp(1j * unit * m)
    if keep_magnitude:
        out = np.abs(nu) * out
    return IrsPhases(out)


def write_trace_csv(path, trace: RunTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mse_ul", "step", "halvings"])
        for i, (m, s, h) in enumerate(zip(trace.mse, trace.step,
                                          trace.halvings)):
            writer.writerow([i, "%.17g" % m, "%.17g" % s, h])
