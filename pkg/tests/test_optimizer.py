import numpy as np
import pytest
from hypothesis import given, strategies as st

from irs_altmin.config import SystemConfig
from irs_altmin.errors import ConfigError, DegenerateStateError
from irs_altmin.harness import _problem_for, draw_realization
from irs_altmin.optimizer import (PgSettings, RunTrace, af_normalize,
                                  alternating_minimize, mse_gradient_nu,
                                  pg_update, project_unit_modulus,
                                  quantize_phases, reoptimize_fixed,
                                  write_trace_csv)
from irs_altmin.transceiver import uplink_mse

from conftest import crandn, random_problem

seeds = st.integers(0, 2 ** 32 - 1)


def fd_gradient(prob, T, nu, h=1e-6):
    """dMSE/dx and dMSE/dy by central differences."""
    out = np.empty((nu.size, 2))
    for n in range(nu.size):
        e = np.zeros(nu.size, dtype=complex)
        e[n] = h
        out[n, 0] = (uplink_mse(prob, T, nu + e)
                     - uplink_mse(prob, T, nu - e)) / (2 * h)
        out[n, 1] = (uplink_mse(prob, T, nu + 1j * e)
                     - uplink_mse(prob, T, nu - 1j * e)) / (2 * h)
    return out


# gradient -------------------------------------------------------------------
def test_gradient_zero_precoder():
    rng = np.random.default_rng(0)
    prob = random_problem(rng)
    T = np.zeros((3, 2, 2, 1), dtype=complex)
    assert np.all(mse_gradient_nu(prob, T, np.ones(3)) == 0)


def test_gradient_zero_cascade():
    rng = np.random.default_rng(1)
    prob = random_problem(rng)
    prob = type(prob)(prob.H_B, np.zeros_like(prob.H_c), prob.noise,
                      prob.error_scale, prob.power, prob.streams)
    T = crandn(rng, 3, 2, 2, 1)
    assert np.all(mse_gradient_nu(prob, T, np.ones(3)) == 0)


@given(seeds, st.sampled_from([0.0, 0.2]))
def test_gradient_matches_finite_differences(seed, e):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, L=2, N=4, error_scale=e, streams=2)
    T = crandn(rng, 2, 2, 2, 2)
    nu = np.exp(1j * rng.uniform(0, 6, 4))
    g = mse_gradient_nu(prob, T, nu)
    fd = fd_gradient(prob, T, nu)
    scale = np.abs(fd).max()
    assert np.max(np.abs(fd[:, 0] - 2 * g.real)) < 1e-5 * scale
    assert np.max(np.abs(fd[:, 1] + 2 * g.imag)) < 1e-5 * scale


# projections ----------------------------------------------------------------
def test_project_unit_modulus_examples():
    out = project_unit_modulus(np.array([0.5 + 0.5j, 0.0, 2.0])).nu
    assert out[0] == pytest.approx(np.exp(1j * np.pi / 4), abs=1e-15)
    assert out[1] == 1.0
    assert out[2] == 1.0


@given(st.lists(st.floats(0, 2 * np.pi), min_size=1, max_size=10))
def test_project_unit_modulus_idempotent(theta):
    nu = np.exp(1j * np.array(theta))
    assert np.max(np.abs(project_unit_modulus(nu).nu - nu)) <= 1e-15


def test_af_normalize():
    nu = np.exp(1j * np.arange(5))
    assert np.allclose(af_normalize(nu), nu, atol=1e-15)
    out = af_normalize(np.array([3.0, 4.0]))
    assert np.sum(np.abs(out) ** 2) == pytest.approx(2.0)
    with pytest.raises(DegenerateStateError):
        af_normalize(np.zeros(3))


def test_quantize_examples():
    assert quantize_phases(np.array([np.exp(0.1j)]), 2).nu[0] == 1.0
    assert quantize_phases(np.array([np.exp(1j * np.pi / 4)]), 2).nu[0] == 1.0
    q = quantize_phases(np.array([np.exp(1j * (np.pi / 4 + 1e-9))]), 2).nu[0]
    assert q == pytest.approx(1j, abs=1e-15)
    with pytest.raises(ConfigError):
        quantize_phases(np.ones(2), 0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20),
       st.integers(1, 5))
def test_quantize_picks_nearest_level(theta, bits):
    nu = np.exp(1j * np.array(theta))
    q = quantize_phases(nu, bits).nu
    levels = np.exp(2j * np.pi * np.arange(2 ** bits) / 2 ** bits)
    best = np.min(np.abs(nu[:, None] - levels[None]), axis=1)
    assert np.allclose(np.abs(nu - q), best, atol=1e-12)
    assert np.allclose(np.abs(q), 1.0)


# projected-gradient step ----------------------------------------------------
def test_pg_update_zero_gradient_is_noop():
    rng = np.random.default_rng(2)
    prob = random_problem(rng)
    nu = np.exp(1j * rng.uniform(0, 6, 3))
    T = np.zeros((3, 2, 2, 1), dtype=complex)
    out, step, halvings, _ = pg_update(prob, nu, T, 1.0, PgSettings())
    assert np.array_equal(out, nu) and halvings == 0 and step == 1.0


def test_large_initial_step_triggers_halving_and_descends():
    cfg = SystemConfig.desk()
    real = draw_realization(cfg, 3)
    prob = _problem_for("proposed_pg", real, cfg)
    s = PgSettings(step=1e3, tolerance=cfg.tolerance, max_iterations=10)
    _, trace = alternating_minimize(prob, s, real.nu0)
    assert sum(trace.halvings) >= 1
    assert min(trace.step) < 1e3
    assert trace.is_monotone() and trace.mse[-1] <= trace.mse[0]


def test_pg_update_exhausted_halvings_keep_incumbent():
    rng = np.random.default_rng(4)
    prob = random_problem(rng, N=6)
    T = crandn(rng, 3, 2, 2, 1)
    nu = np.exp(1j * rng.uniform(0, 6, 6))
    mse = uplink_mse(prob, T, nu)
    settings = PgSettings(max_halvings=1)

    def reject(x):
        return -nu                                       # far from nu

    out, _, halvings, after = pg_update(prob, nu, T, 1.0, settings,
                                        projector=reject, mse_now=mse - 10)
    assert np.array_equal(out, nu) and halvings == 1
    assert after == mse - 10


def test_settings_validation():
    with pytest.raises(ConfigError):
        PgSettings(step=0)
    with pytest.raises(ConfigError):
        PgSettings(max_iterations=0)


# main loop ------------------------------------------------------------------
def _desk_problem(index=0, **kw):
    cfg = SystemConfig.desk(**kw)
    real = draw_realization(cfg, index)
    return cfg, real, _problem_for("proposed_pg", real, cfg)


def test_without_irs_is_pure_duality_and_monotone():
    cfg, real, prob = _desk_problem(num_irs_elements=0)
    state, trace = alternating_minimize(prob, PgSettings.from_config(cfg),
                                        np.zeros(0))
    assert trace.is_monotone()
    assert all(h == 0 for h in trace.halvings)
    assert len(state.nu) == 0


@pytest.mark.parametrize("variant", ["pg", "af", "fixed"])
def test_trace_is_monotone_and_feasible(variant):
    cfg, real, prob = _desk_problem(3)
    state, trace = alternating_minimize(prob, PgSettings.from_config(cfg),
                                        real.nu0, variant)
    assert trace.is_monotone()
    power = np.sum(np.abs(state.P) ** 2, axis=(1, 2, 3))
    assert np.all(power <= prob.power * (1 + 1e-9))
    if variant == "af":
        assert np.sum(np.abs(state.nu.nu) ** 2) == pytest.approx(
            prob.num_irs_elements)
    else:
        assert np.all(np.abs(np.abs(state.nu.nu) - 1) <= 1e-12)
    if variant == "fixed":
        assert np.array_equal(state.nu.nu, real.nu0.nu)


def test_mrt_variant_keeps_mrt_precoders():
    from irs_altmin.transceiver import mrt_precoders
    cfg, real, prob = _desk_problem(4)
    state, trace = alternating_minimize(prob, PgSettings.from_config(cfg),
                                        real.nu0, "mrt")
    P, _ = mrt_precoders(prob, state.nu)
    assert np.allclose(state.P, P)


def test_unknown_variant_rejected():
    cfg, real, prob = _desk_problem()
    with pytest.raises(ConfigError):
        alternating_minimize(prob, PgSettings(), real.nu0, "bogus")


def test_optimizer_is_deterministic():
    cfg, real, prob = _desk_problem(5)
    s = PgSettings.from_config(cfg)
    a_state, a = alternating_minimize(prob, s, real.nu0)
    b_state, b = alternating_minimize(prob, s, real.nu0)
    assert a.mse == b.mse and a.step == b.step
    assert np.array_equal(a_state.P, b_state.P)
    assert np.array_equal(a_state.nu.nu, b_state.nu.nu)


def test_reset_step_flag_restarts_each_iteration():
    cfg, real, prob = _desk_problem(6)
    s = PgSettings(step=1e4, tolerance=cfg.tolerance, max_iterations=5,
                   reset_step=True)
    _, trace = alternating_minimize(prob, s, real.nu0)
    # each recorded step is the restart value divided by its own halvings
    for step, h in zip(trace.step[1:], trace.halvings[1:]):
        assert step == pytest.approx(1e4 / 2 ** h)


def test_reoptimize_fixed_keeps_phases_and_improves_mse():
    cfg, real, prob = _desk_problem(7)
    s = PgSettings.from_config(cfg)
    state, _ = alternating_minimize(prob, s, real.nu0)
    q = quantize_phases(state.nu, 2)
    refit = reoptimize_fixed(prob, s, q, state)
    assert np.array_equal(refit.nu.nu, q.nu)
    from irs_altmin.transceiver import (downlink_mse, mmse_downlink_filter)
    W0 = mmse_downlink_filter(prob, state.P, q)
    assert (downlink_mse(prob, refit.P, refit.W, q).sum()
            <= downlink_mse(prob, state.P, W0, q).sum() + 1e-9)


def test_run_trace_helpers(tmp_path):
    t = RunTrace()
    assert t.iterations == 0
    t.record(3.0, 1.0, 0)
    t.record(2.0, 0.5, 1)
    assert t.iterations == 1 and t.is_monotone()
    t.record(2.5, 0.5, 0)
    assert not t.is_monotone()
    path = tmp_path / "trace.csv"
    write_trace_csv(path, t)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,mse_ul,step,halvings"
    assert lines[2] == "1,2,0.5,1"
