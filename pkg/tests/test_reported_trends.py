"""Qualitative trends from the reference results, checked at desk scale.

Two of them do not reproduce under the implemented channel model and are
kept as strict expected failures.
"""

import numpy as np
import pytest
from scipy.stats import spearmanr

from irs_altmin.config import SystemConfig
from irs_altmin.harness import _problem_for, draw_realization, run_method
from irs_altmin.optimizer import PgSettings, alternating_minimize

from conftest import desk_cell, rates


def _delta_r(snr, N, n=100):
    return float(np.mean(rates(desk_cell("proposed_pg", snr, N=N, n=n))
                         - rates(desk_cell("r_irs_ops", snr, N=N, n=n))))


def test_delta_r_rank_correlates_with_irs_size():
    sizes = (9, 16, 25, 36)
    rho, _ = spearmanr(sizes, [_delta_r(5.0, N) for N in sizes])
    assert rho > 0


def test_delta_r_grows_with_snr():
    assert _delta_r(5.0, 25) >= _delta_r(-5.0, 25)


def test_three_bits_beat_two_bits():
    rows = desk_cell("proposed_pg", 10.0, n=100, bits=(None, 3, 2))
    assert rates(rows, 3).mean() >= rates(rows, 2).mean()


def test_irs_gain_is_positive_at_full_scale():
    cfg = SystemConfig(snr_db=10.0, paths_irs_user=4)
    gains = []
    for r in range(8):
        real = draw_realization(cfg, r)
        pg, = run_method("proposed_pg", real, cfg)
        base, = run_method("no_irs_mrt", real, cfg)
        gains.append(pg.sum_rate - base.sum_rate)
    assert np.mean(gains) > 0


@pytest.mark.xfail(strict=True, reason=(
    "the per-link normalisation makes link power independent of the path "
    "count, so the IRS gain is flat in the number of IRS-user paths"))
def test_irs_gain_increases_with_irs_user_paths():
    gains = [float(np.mean(rates(desk_cell("proposed_pg", 10.0, paths=p,
                                           n=100))
                           - rates(desk_cell("no_irs_mrt", 10.0, paths=p,
                                             n=100))))
             for p in (2, 3, 4)]
    assert gains[0] < gains[1] < gains[2], gains


@pytest.mark.xfail(strict=True, reason=(
    "at the default initial step most desk runs are still decreasing by "
    "more than the threshold when the iteration budget runs out"))
def test_perfect_csi_runs_converge_quickly():
    cfg = SystemConfig.desk(csi_mode="perfect")
    settings = PgSettings.from_config(cfg)
    its, converged = [], 0
    for r in range(50):
        real = draw_realization(cfg, r)
        prob = _problem_for("proposed_perfect", real, cfg)
        _, trace = alternating_minimize(prob, settings, real.nu0)
        its.append(trace.iterations)
        converged += trace.converged
    assert converged == 50 and np.median(its) <= 25, (converged,
                                                      np.median(its))
