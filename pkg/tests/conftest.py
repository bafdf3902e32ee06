import json
from pathlib import Path

import numpy as np
import pytest

from sbfaf.problem import build_problem
from sbfaf.scenario import ChannelRealization, NetworkConfig, Topology, generate_channels

FIXTURES = Path(__file__).parent / "fixtures"


def decode(entry):
    return (np.asarray(entry["re"]) + 1j * np.asarray(entry["im"])).reshape(entry["shape"])


def load_reference_instances():
    data = json.loads((FIXTURES / "sdr_reference.json").read_text())
    out = []
    for inst in data["instances"]:
        cfg = NetworkConfig.from_dict(inst["config"])
        ch = ChannelRealization(decode(inst["f"]), decode(inst["g"]), inst["seed"])
        out.append((cfg, build_problem(cfg, ch), inst["gamma_star"]))
    return out


def make_problem(L=3, G=2, M=4, seed=0, per_antenna=None, total_power=2.0, noise=1.0, topology=Topology.MIMO):
    cfg = NetworkConfig.uniform(
        L, G, M, sigma_ant=noise, sigma_user=noise, total_power=total_power,
        per_antenna=per_antenna, topology=topology,
    )
    ch = generate_channels(cfg, seed)
    return cfg, ch, build_problem(cfg, ch)


def random_psd(n, rank, rng):
    B = rng.standard_normal((rank, n)) + 1j * rng.standard_normal((rank, n))
    return B.conj().T @ B


@pytest.fixture(scope="session")
def reference_instances():
    return load_reference_instances()


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
