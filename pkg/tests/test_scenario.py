import math

import numpy as np
import pytest

from sbfaf.scenario import (
    ConfigError,
    DimensionMismatch,
    NetworkConfig,
    NonPositiveParameter,
    Topology,
    db_to_linear,
    generate_channels,
    load_config,
    validate_config,
)


def test_simulation_setup_is_valid():
    cfg = NetworkConfig.uniform(8, 2, 16)
    validate_config(cfg)
    assert cfg.group_sizes == (8, 8)
    assert cfg.num_users == 16
    assert cfg.weight_dim == 64


def test_empty_group_rejected():
    cfg = NetworkConfig(1, 1, (0,), (1.0,), (1.0,), (), 1.0)
    with pytest.raises(DimensionMismatch):
        validate_config(cfg)


def test_zero_user_noise_rejected():
    cfg = NetworkConfig.uniform(2, 1, 2, sigma_user=0.0)
    with pytest.raises(NonPositiveParameter):
        validate_config(cfg)


@pytest.mark.parametrize(
    "change",
    [
        {"tx_powers": (1.0, 1.0)},
        {"relay_noise_vars": (1.0,)},
        {"user_noise_vars": (1.0,)},
        {"per_antenna_budgets": (1.0,)},
    ],
)
def test_length_mismatches(change):
    cfg = NetworkConfig.uniform(2, 1, 2).replace(**change)
    with pytest.raises(DimensionMismatch):
        validate_config(cfg)


def test_infinite_per_antenna_budget_allowed_but_not_total():
    cfg = NetworkConfig.uniform(2, 1, 2, per_antenna=[math.inf, 0.5])
    validate_config(cfg)
    with pytest.raises(NonPositiveParameter):
        validate_config(cfg.replace(total_power_budget=math.inf))


def test_uneven_groups_rejected():
    with pytest.raises(DimensionMismatch):
        NetworkConfig.uniform(2, 3, 4)


def test_db_conversion():
    assert db_to_linear(0) == 1.0
    assert db_to_linear(10) == pytest.approx(10.0)
    assert db_to_linear(-3) == pytest.approx(0.501187, rel=1e-5)


def test_dict_roundtrip_and_unknown_key(tmp_path):
    cfg = NetworkConfig.uniform(3, 1, 2, per_antenna=[math.inf, 1.0, 2.0], topology="Distributed")
    again = NetworkConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.topology is Topology.DISTRIBUTED
    path = tmp_path / "c.json"
    path.write_text('{"num_relay_antennas": 2, "bogus": 1}')
    with pytest.raises(ConfigError):
        load_config(path)


def test_channels_deterministic():
    cfg = NetworkConfig.uniform(4, 2, 4)
    a = generate_channels(cfg, 42)
    b = generate_channels(cfg, 42)
    assert np.array_equal(a.f, b.f) and np.array_equal(a.g, b.g)
    c = generate_channels(cfg, 43)
    assert not np.array_equal(a.f, c.f)
    assert a.f.shape == (2, 4) and a.g.shape == (4, 4)


def test_channels_read_only():
    ch = generate_channels(NetworkConfig.uniform(2, 1, 1), 0)
    with pytest.raises(ValueError):
        ch.f[0, 0] = 0


def test_channel_statistics():
    # 10^5 pooled entries: unit variance, zero mean in each part
    cfg = NetworkConfig.uniform(10, 1, 10)
    samples = np.concatenate(
        [generate_channels(cfg, 7, stream=(k,)).g.ravel() for k in range(1000)]
    )
    assert samples.size == 100_000
    assert abs(np.mean(np.abs(samples) ** 2) - 1.0) < 0.02
    assert abs(samples.real.mean()) < 0.02
    assert abs(samples.imag.mean()) < 0.02
