"""Network configurations and random channel realizations."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .rng import complex_normal, substream


class ConfigError(ValueError):
    """Invalid network configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class DimensionMismatch(ConfigError):
    pass


class NonPositiveParameter(ConfigError):
    pass


class Topology(enum.Enum):
    MIMO = "mimo"
    DISTRIBUTED = "distributed"

    @classmethod
    def parse(cls, value) -> "Topology":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        raise ConfigError("topology", f"unknown topology {value!r}")


def db_to_linear(db: float) -> float:
    return 10.0 ** (float(db) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """Relay network parameters.

    ``per_antenna_budgets`` is either ``None`` (total power constraint only)
    or one budget per relay antenna; an infinite entry leaves that antenna
    unconstrained, which is how partially constrained arrays are expressed.
    """

    num_relay_antennas: int
    num_groups: int
    group_sizes: tuple
    tx_powers: tuple
    relay_noise_vars: tuple
    user_noise_vars: tuple
    total_power_budget: float
    per_antenna_budgets: Optional[tuple] = None
    topology: Topology = Topology.MIMO

    def __post_init__(self):
        # normalise sequences so configs hash/compare by value
        for name in ("group_sizes", "tx_powers", "relay_noise_vars", "user_noise_vars"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.per_antenna_budgets is not None:
            budgets = tuple(math.inf if b is None else float(b) for b in self.per_antenna_budgets)
            object.__setattr__(self, "per_antenna_budgets", budgets)
        object.__setattr__(self, "topology", Topology.parse(self.topology))

    @property
    def num_users(self) -> int:
        return int(sum(self.group_sizes))

    @property
    def weight_dim(self) -> int:
        L = self.num_relay_antennas
        return L if self.topology is Topology.DISTRIBUTED else L * L

    def user_pairs(self):
        """(k, i) pairs in flat user order."""
        return [(k, i) for k, m in enumerate(self.group_sizes) for i in range(m)]

    @classmethod
    def uniform(
        cls,
        L: int,
        G: int,
        M: int,
        *,
        tx_power: float = 1.0,
        sigma_ant: float = 1.0,
        sigma_user: float = 1.0,
        total_power: float = 1.0,
        per_antenna: Optional[Sequence[float]] = None,
        topology=Topology.MIMO,
    ) -> "NetworkConfig":
        """Equal group sizes and common powers/noise levels (the simulation setup)."""
        if G < 1 or M % G:
            raise DimensionMismatch("group_sizes", f"M={M} users cannot be split evenly over G={G} groups")
        return cls(
            num_relay_antennas=L,
            num_groups=G,
            group_sizes=(M // G,) * G,
            tx_powers=(tx_power,) * G,
            relay_noise_vars=(sigma_ant,) * L,
            user_noise_vars=(sigma_user,) * M,
            total_power_budget=total_power,
            per_antenna_budgets=None if per_antenna is None else tuple(per_antenna),
            topology=topology,
        )

    def replace(self, **changes) -> "NetworkConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return NetworkConfig(**values)

    def to_dict(self) -> dict:
        budgets = None
        if self.per_antenna_budgets is not None:
            budgets = [None if math.isinf(b) else b for b in self.per_antenna_budgets]
        return {
            "num_relay_antennas": self.num_relay_antennas,
            "num_groups": self.num_groups,
            "group_sizes": list(self.group_sizes),
            "tx_powers": list(self.tx_powers),
            "relay_noise_vars": list(self.relay_noise_vars),
            "user_noise_vars": list(self.user_noise_vars),
            "total_power_budget": self.total_power_budget,
            "per_antenna_budgets": budgets,
            "topology": self.topology.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        missing = known - set(data) - {"per_antenna_budgets", "topology"}
        if missing:
            raise ConfigError(sorted(missing)[0], "missing configuration key")
        return cls(**data)


def load_config(path) -> NetworkConfig:
    """Read a JSON network configuration file."""
    with open(Path(path)) as fh:
        return NetworkConfig.from_dict(json.load(fh))


def _check_positive(name: str, values, allow_inf: bool = False) -> None:
    for v in np.atleast_1d(np.asarray(values, dtype=float)):
        if not (v > 0) or (math.isinf(v) and not allow_inf) or math.isnan(v):
            raise NonPositiveParameter(name, f"entries must be strictly positive, got {v}")


def validate_config(config: NetworkConfig) -> None:
    """Raise a :class:`ConfigError` unless every configuration invariant holds."""
    L, G = config.num_relay_antennas, config.num_groups
    if int(L) != L or L < 1:
        raise DimensionMismatch("num_relay_antennas", f"must be a positive integer, got {L}")
    if int(G) != G or G < 1:
        raise DimensionMismatch("num_groups", f"must be a positive integer, got {G}")
    if len(config.group_sizes) != G:
        raise DimensionMismatch("group_sizes", f"expected {G} entries, got {len(config.group_sizes)}")
    if any(int(m) != m or m < 1 for m in config.group_sizes):
        raise DimensionMismatch("group_sizes", "every group needs at least one user")
    if len(config.tx_powers) != G:
        raise DimensionMismatch("tx_powers", f"expected {G} entries, got {len(config.tx_powers)}")
    if len(config.relay_noise_vars) != L:
        raise DimensionMismatch("relay_noise_vars", f"expected {L} entries, got {len(config.relay_noise_vars)}")
    if len(config.user_noise_vars) != config.num_users:
        raise DimensionMismatch(
            "user_noise_vars", f"expected {config.num_users} entries, got {len(config.user_noise_vars)}"
        )
    _check_positive("tx_powers", config.tx_powers)
    _check_positive("relay_noise_vars", config.relay_noise_vars)
    _check_positive("user_noise_vars", config.user_noise_vars)
    _check_positive("total_power_budget", config.total_power_budget)
    if config.per_antenna_budgets is not None:
        if len(config.per_antenna_budgets) != L:
            raise DimensionMismatch(
                "per_antenna_budgets", f"expected {L} entries, got {len(config.per_antenna_budgets)}"
            )
        _check_positive("per_antenna_budgets", config.per_antenna_budgets, allow_inf=True)


@dataclass(frozen=True)
class ChannelRealization:
    """Uplink channels ``f`` (G x L) and downlink channels ``g`` (M x L)."""

    f: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        self.f.setflags(write=False)
        self.g.setflags(write=False)


def generate_channels(config: NetworkConfig, seed: int, stream: tuple = ()) -> ChannelRealization:
    """Draw i.i.d. CN(0, 1) channel entries, deterministically in ``(config, seed, stream)``.

    ``stream`` holds extra substream indices (sweep point, draw) used by sweeps.
    """
    validate_config(config)
    rng = substream(seed, "channels", *stream)
    L = config.num_relay_antennas
    f = complex_normal(rng, (config.num_groups, L))
    g = complex_normal(rng, (config.num_users, L))
    return ChannelRealization(f=f, g=g, seed=int(seed))
