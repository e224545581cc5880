import numpy as np
import pytest
from hypothesis import given, strategies as st

from irs_altmin.config import (NoiseModel, SystemConfig, load_config,
                               power_per_subcarrier)
from irs_altmin.errors import ConfigError

from conftest import random_pd


def test_power_per_subcarrier_unit():
    cfg = SystemConfig.desk(num_subcarriers=32, total_power=32.0)
    assert power_per_subcarrier(cfg) == 1.0


def test_snr_zero_db_gives_unit_power_per_subcarrier():
    cfg = SystemConfig(snr_db=0.0, noise_power=1.0, num_subcarriers=32)
    assert cfg.P_T == 32.0
    assert power_per_subcarrier(cfg) == 1.0


def test_snr_10_db_per_subcarrier_power():
    cfg = SystemConfig.desk(snr_db=10.0, num_subcarriers=8)
    expected = 10 ** (10 / 10) * 1.0
    assert power_per_subcarrier(cfg) == pytest.approx(expected, rel=1e-15)


def test_error_scale_is_l_over_pt():
    cfg = SystemConfig.desk(total_power=16.0)
    assert cfg.error_scale == 8 / 16.0
    assert cfg.design_error_scale == cfg.error_scale
    assert cfg.replace(csi_mode="non_robust").design_error_scale == 0.0


def test_default_tolerance_scales_with_stream_count():
    cfg = SystemConfig.desk()
    assert cfg.tolerance == pytest.approx(1e-5 * 2 * 8)
    assert cfg.replace(mse_tolerance=1e-3).tolerance == 1e-3


@pytest.mark.parametrize("overrides", [
    dict(streams=3),                          # > min(Nr, Nt)
    dict(num_users=5, streams=1),             # sum > Nt
    dict(num_tx_antennas=0),
    dict(num_irs_elements=-1),
    dict(noise_power=0.0),
    dict(rolloff=1.5),
    dict(csi_mode="bogus"),
    dict(quantization_bits=0),
    dict(num_subcarriers=4),                  # fewer than delay taps
    dict(freq_sign=2),
])
def test_invalid_configs_rejected(overrides):
    with pytest.raises(ConfigError):
        SystemConfig.desk(**overrides)


def test_per_user_per_subcarrier_stream_map():
    streams = [[1] * 8, [2] * 4 + [1] * 4]
    cfg = SystemConfig.desk(streams=streams)
    ns = cfg.stream_counts()
    assert ns.shape == (8, 2)
    assert ns[0, 1] == 2 and ns[7, 1] == 1
    assert cfg.max_streams == 2


def test_dict_round_trip():
    cfg = SystemConfig.desk(streams=[[1] * 8, [2] * 8])
    assert SystemConfig.from_dict(cfg.to_dict()) == cfg


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("num_users: 2\nbogus_key: 1\n")
    with pytest.raises(ConfigError, match="bogus_key"):
        load_config(path)


def test_load_config_reads_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("num_users: 2\nnum_rx_antennas: 2\nnum_tx_antennas: 4\n"
                    "num_subcarriers: 8\nstreams: 1\nsnr_db: 5\n")
    cfg = load_config(path)
    assert cfg.num_users == 2 and cfg.snr_db == 5


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_noise_model_default_is_scaled_identity():
    cfg = SystemConfig.desk(noise_power=2.5)
    noise = NoiseModel.from_config(cfg)
    expected = 2.5 * np.eye(2)
    assert np.array_equal(noise.cov[0], expected)
    assert np.array_equal(noise.cov[1], expected)
    assert noise.is_scaled_identity


def test_noise_model_rejects_non_hermitian_and_indefinite():
    with pytest.raises(ConfigError):
        NoiseModel(np.array([[[1.0, 1.0], [0.0, 1.0]]]))
    with pytest.raises(ConfigError):
        NoiseModel(np.array([[[1.0, 0.0], [0.0, -1.0]]]))


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_noise_square_roots(seed, n):
    rng = np.random.default_rng(seed)
    cov = random_pd(rng, n)[None]
    noise = NoiseModel(cov)
    s, si = noise.sqrt()[0], noise.inv_sqrt()[0]
    assert np.allclose(s @ s, cov[0], atol=1e-10 * np.abs(cov).max())
    assert np.allclose(s, s.conj().T, atol=1e-12 * np.abs(s).max())
    assert np.allclose(si @ s, np.eye(n), atol=1e-10)


def test_config_is_immutable():
    cfg = SystemConfig.desk()
    with pytest.raises(Exception):
        cfg.num_users = 3
