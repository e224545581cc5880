"""Invariant checks behind ``irs-altmin validate``."""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .config import SystemConfig
from .csi import build_pilot_plan, ls_estimate_full
from .harness import _problem_for, draw_realization
from .optimizer import PgSettings, alternating_minimize, mse_gradient_nu
from .transceiver import (bc_to_mac, downlink_mse, downlink_mse_closed,
                          mac_to_bc, mmse_downlink_filter,
                          mmse_uplink_filter, mrt_precoders, uplink_mse)

Check = Tuple[str, bool, str]


def _gradient_error(prob, T, nu, h: float = 1e-6) -> float:
    g = mse_gradient_nu(prob, T, nu)
    worst = 0.0
    for n in range(nu.size):
        e = np.zeros(nu.size, dtype=complex)
        e[n] = h
        dx = (uplink_mse(prob, T, nu + e) - uplink_mse(prob, T, nu - e)) / (2 * h)
        dy = (uplink_mse(prob, T, nu + 1j * e)
              - uplink_mse(prob, T, nu - 1j * e)) / (2 * h)
        scale = max(abs(dx), abs(dy), 1e-12)
        worst = max(worst, abs(dx - 2 * g[n].real) / scale,
                    abs(dy + 2 * g[n].imag) / scale)
    return worst


def run_checks(config: SystemConfig, seed: int = 0,
               instances: int = 5) -> List[Check]:
    rng = np.random.default_rng(seed)
    grad_err = closed_err = cycle_excess = power_err = 0.0
    monotone = feasible = True
    ls_err = 0.0
    for r in range(instances):
        real = draw_realization(config, r, base_seed=seed)
        prob = _problem_for("proposed_pg", real, config)
        nu = real.nu0.nu
        L, K, Nr, Nt, N, S = prob.dims
        T = (rng.standard_normal((L, K, Nr, S))
             + 1j * rng.standard_normal((L, K, Nr, S))) * prob.mask[:, :, None]
        if N:
            grad_err = max(grad_err, _gradient_error(prob, T, nu))

        P, _ = mrt_precoders(prob, nu)
        W = mmse_downlink_filter(prob, P, nu)
        general = downlink_mse(prob, P, W, nu)
        closed = downlink_mse_closed(prob, P, nu)
        closed_err = max(closed_err, float(np.max(np.abs(general - closed)
                                                  / np.abs(closed))))

        perfect = _problem_for("proposed_perfect", real, config)
        P0, _ = mrt_precoders(perfect, nu)
        W0 = mmse_downlink_filter(perfect, P0, nu)
        before = downlink_mse(perfect, P0, W0, nu).sum(axis=1)
        T1, _ = bc_to_mac(W0, perfect.power, perfect.c_sqrt)
        G1 = mmse_uplink_filter(perfect, T1, nu)
        P1, _ = mac_to_bc(G1, perfect.power)
        power_err = max(power_err, float(np.max(np.abs(
            np.sum(np.abs(P1) ** 2, axis=(1, 2, 3)) / perfect.power - 1))))
        W1 = mmse_downlink_filter(perfect, P1, nu)
        after = downlink_mse(perfect, P1, W1, nu).sum(axis=1)
        cycle_excess = max(cycle_excess, float(np.max(after - before)))

        state, trace = alternating_minimize(
            prob, PgSettings.from_config(config), nu)
        monotone &= trace.is_monotone()
        feasible &= bool(np.all(np.abs(np.abs(state.nu.nu) - 1) <= 1e-12))
        feasible &= bool(np.all(np.sum(np.abs(state.P) ** 2, axis=(1, 2, 3))
                                <= prob.power * (1 + 1e-9)))

        ls = ls_estimate_full(real.channels, build_pilot_plan(config), rng,
                              config, noiseless=True)
        ls_err = max(ls_err,
                     float(np.max(np.abs(ls.H_B - real.channels.H_B))),
                     float(np.max(np.abs(ls.H_c - real.channels.cascaded()),
                                  initial=0.0)))

    return [
        ("gradient matches finite differences", grad_err < 1e-5,
         f"max relative error {grad_err:.2e}"),
        ("general downlink MSE equals closed form", closed_err < 1e-9,
         f"max relative error {closed_err:.2e}"),
        ("duality cycle does not increase downlink MSE", cycle_excess <= 1e-9,
         f"max increase {cycle_excess:.2e}"),
        ("broadcast power meets budget", power_err < 1e-10,
         f"max relative error {power_err:.2e}"),
        ("alternating minimisation is monotone", monotone, ""),
        ("IRS unit modulus and power feasibility", feasible, ""),
        ("noiseless LS recovers the channels", ls_err < 1e-9,
         f"max abs error {ls_err:.2e}"),
    ]
