"""Hermitian data matrices of the max-min-fair relay beamforming problems.

A weight vector ``w`` is ``vec(V)`` (column-major) of the L x L relay matrix
in MIMO mode, and the diagonal ``v`` of ``V = Diag(conj(v))`` in distributed
mode.  Every user's SINR is ``A.W / (C.W + 1)`` with ``W = w w^H``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scenario import (
    ChannelRealization,
    DimensionMismatch,
    NetworkConfig,
    Topology,
    validate_config,
)


class TopologyMismatch(ValueError):
    pass


class NonPsdConstraint(ValueError):
    pass


def inner(A: np.ndarray, B: np.ndarray) -> float:
    """Real inner product ``A . B = Re tr(A^H B)``."""
    return float(np.real(np.vdot(A, B)))


@dataclass(frozen=True)
class ProblemData:
    dim: int
    topology: Topology
    signal_vecs: np.ndarray = field(repr=False)  # (M, n); A_j = a_j a_j^H
    signal_mats: np.ndarray = field(repr=False)  # (M, n, n)
    interference_mats: np.ndarray = field(repr=False)  # (M, n, n)
    constraint_mats: np.ndarray = field(repr=False)  # (S, n, n)
    budgets: np.ndarray = field(repr=False)  # (S,)
    constraint_labels: tuple = ()
    user_index: dict = field(default_factory=dict)
    relay_input_cov: np.ndarray = field(default=None, repr=False)

    @property
    def num_users(self) -> int:
        return self.signal_mats.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.constraint_mats.shape[0]

    @property
    def constraints(self):
        return list(zip(self.constraint_mats, self.budgets))

    def flat_index(self, k: int, i: int) -> int:
        return self.user_index[(k, i)]


def _rel_cov(config: NetworkConfig, channels: ChannelRealization) -> np.ndarray:
    P = np.asarray(config.tx_powers, dtype=float)
    f = channels.f
    return (f.T * P) @ f.conj() + np.diag(np.asarray(config.relay_noise_vars, dtype=float))


def _check_channels(config: NetworkConfig, channels: ChannelRealization) -> None:
    L = config.num_relay_antennas
    if channels.f.shape != (config.num_groups, L):
        raise DimensionMismatch("f", f"expected shape {(config.num_groups, L)}, got {channels.f.shape}")
    if channels.g.shape != (config.num_users, L):
        raise DimensionMismatch("g", f"expected shape {(config.num_users, L)}, got {channels.g.shape}")


def _group_of_users(config: NetworkConfig) -> np.ndarray:
    return np.repeat(np.arange(config.num_groups), config.group_sizes)


def _check_extra(extra, n: int) -> list:
    out = []
    for idx, (Q, b) in enumerate(extra):
        Q = np.asarray(Q, dtype=complex)
        if Q.shape != (n, n):
            raise DimensionMismatch("extra_constraints", f"constraint {idx} must be {n}x{n}")
        if not np.allclose(Q, Q.conj().T, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise NonPsdConstraint(f"constraint {idx} is not Hermitian")
        lam = np.linalg.eigvalsh(Q)
        if lam[0] < -1e-10 * max(np.abs(np.trace(Q)), 1e-300):
            raise NonPsdConstraint(f"constraint {idx} has negative eigenvalue {lam[0]:.3e}")
        if not b > 0:
            raise NonPsdConstraint(f"constraint {idx} budget must be positive")
        out.append((Q, float(b)))
    return out


def build_mimo_problem(
    config: NetworkConfig,
    channels: ChannelRealization,
    extra_constraints: Sequence = (),
) -> ProblemData:
    """Assemble A, C, D_0 and the configured D_l for the MIMO relay."""
    if config.topology is not Topology.MIMO:
        raise TopologyMismatch("build_mimo_problem needs a MIMO configuration")
    validate_config(config)
    _check_channels(config, channels)
    L = config.num_relay_antennas
    n = L * L
    P = np.asarray(config.tx_powers, dtype=float)
    sig_u = np.asarray(config.user_noise_vars, dtype=float)
    Sigma = np.diag(np.asarray(config.relay_noise_vars, dtype=float))
    groups = _group_of_users(config)
    f, g = channels.f, channels.g
    M = config.num_users

    # u[m, j] = f_m^* kron g_j
    u = np.einsum("ma,jb->mjab", f.conj(), g).reshape(config.num_groups, M, n)
    outer = np.einsum("mja,mjb->mjab", u, u.conj()) * P[:, None, None, None]

    signal_vecs = np.sqrt(P[groups] / sig_u)[:, None] * u[groups, np.arange(M)]
    signal = outer[groups, np.arange(M)] / sig_u[:, None, None]
    interference = np.empty((M, n, n), dtype=complex)
    for j in range(M):
        others = [m for m in range(config.num_groups) if m != groups[j]]
        acc = np.kron(Sigma, np.outer(g[j], g[j].conj()))
        if others:
            acc = acc + outer[others, j].sum(axis=0)
        interference[j] = acc / sig_u[j]

    R = _rel_cov(config, channels)
    mats = [np.kron(R.conj(), np.eye(L))]
    budgets = [float(config.total_power_budget)]
    labels = ["total"]
    if config.per_antenna_budgets is not None:
        for ell, b in enumerate(config.per_antenna_budgets):
            if np.isfinite(b):
                E = np.zeros((L, L))
                E[ell, ell] = 1.0
                mats.append(np.kron(R.conj(), E))
                budgets.append(float(b))
                labels.append(f"antenna{ell + 1}")
    for idx, (Q, b) in enumerate(_check_extra(extra_constraints, n)):
        mats.append(Q)
        budgets.append(b)
        labels.append(f"extra{idx + 1}")

    return ProblemData(
        dim=n,
        topology=Topology.MIMO,
        signal_vecs=signal_vecs,
        signal_mats=signal,
        interference_mats=interference,
        constraint_mats=np.array(mats),
        budgets=np.array(budgets),
        constraint_labels=tuple(labels),
        user_index={pair: j for j, pair in enumerate(config.user_pairs())},
        relay_input_cov=R,
    )


def build_distributed_problem(
    config: NetworkConfig,
    channels: ChannelRealization,
    extra_constraints: Sequence,
) -> ProblemData:
    """Assemble the Hadamard-product matrices for L single-antenna relays.

    The constraint list is exactly ``extra_constraints``; the first entry is
    treated as the power objective by the power-minimization step.
    """
    if config.topology is not Topology.DISTRIBUTED:
        raise TopologyMismatch("build_distributed_problem needs a Distributed configuration")
    validate_config(config)
    _check_channels(config, channels)
    L = config.num_relay_antennas
    P = np.asarray(config.tx_powers, dtype=float)
    sig_u = np.asarray(config.user_noise_vars, dtype=float)
    sig_r = np.asarray(config.relay_noise_vars, dtype=float)
    groups = _group_of_users(config)
    f, g = channels.f, channels.g
    M = config.num_users
    extra = _check_extra(extra_constraints, L)
    if not extra:
        raise DimensionMismatch("extra_constraints", "at least one power constraint is required")

    # u[m, j] = f_m (Hadamard) g_j^*
    u = f[:, None, :] * g.conj()[None, :, :]
    outer = np.einsum("mja,mjb->mjab", u, u.conj()) * P[:, None, None, None]
    signal_vecs = np.sqrt(P[groups] / sig_u)[:, None] * u[groups, np.arange(M)]
    signal = outer[groups, np.arange(M)] / sig_u[:, None, None]
    interference = np.empty((M, L, L), dtype=complex)
    for j in range(M):
        others = [m for m in range(config.num_groups) if m != groups[j]]
        acc = np.diag(np.abs(g[j]) ** 2 * sig_r).astype(complex)
        if others:
            acc = acc + outer[others, j].sum(axis=0)
        interference[j] = acc / sig_u[j]

    return ProblemData(
        dim=L,
        topology=Topology.DISTRIBUTED,
        signal_vecs=signal_vecs,
        signal_mats=signal,
        interference_mats=interference,
        constraint_mats=np.array([Q for Q, _ in extra]),
        budgets=np.array([b for _, b in extra]),
        constraint_labels=tuple(f"q{s + 1}" for s in range(len(extra))),
        user_index={pair: j for j, pair in enumerate(config.user_pairs())},
        relay_input_cov=_rel_cov(config, channels),
    )


def distributed_power_constraints(config: NetworkConfig) -> list:
    """Default constraint list for a distributed network: ``v^H v <= P_0`` plus
    ``|v_l|^2 <= P_l`` for every finite per-relay budget."""
    L = config.num_relay_antennas
    out = [(np.eye(L, dtype=complex), float(config.total_power_budget))]
    if config.per_antenna_budgets is not None:
        for ell, b in enumerate(config.per_antenna_budgets):
            if np.isfinite(b):
                E = np.zeros((L, L), dtype=complex)
                E[ell, ell] = 1.0
                out.append((E, float(b)))
    return out


def build_problem(config: NetworkConfig, channels: ChannelRealization) -> ProblemData:
    """Dispatch on the configured topology with the default constraint set."""
    if config.topology is Topology.DISTRIBUTED:
        return build_distributed_problem(config, channels, distributed_power_constraints(config))
    return build_mimo_problem(config, channels)


def _check_dim(W: np.ndarray, problem: ProblemData) -> None:
    if W.shape != (problem.dim, problem.dim):
        raise DimensionMismatch("W", f"expected {(problem.dim, problem.dim)}, got {W.shape}")


def user_sinrs(W: np.ndarray, problem: ProblemData) -> np.ndarray:
    """SINR of every user (flat order) for the PSD matrix ``W``."""
    W = np.asarray(W)
    _check_dim(W, problem)
    num = np.real(np.einsum("jab,ab->j", problem.signal_mats.conj(), W))
    den = np.real(np.einsum("jab,ab->j", problem.interference_mats.conj(), W)) + 1.0
    return np.maximum(num, 0.0) / den


def sinr(W: np.ndarray, problem: ProblemData, k: int, i: int) -> float:
    """SINR of user ``i`` (0-based) in group ``k`` (0-based)."""
    W = np.asarray(W)
    _check_dim(W, problem)
    j = problem.flat_index(k, i)
    num = inner(problem.signal_mats[j], W)
    return max(num, 0.0) / (inner(problem.interference_mats[j], W) + 1.0)


def min_sinr(W: np.ndarray, problem: ProblemData) -> float:
    return float(user_sinrs(W, problem).min())


def power(W: np.ndarray, problem: ProblemData, s: int) -> float:
    """``Q_s . W`` for constraint ``s`` (0 is the total-power constraint in MIMO mode)."""
    W = np.asarray(W)
    _check_dim(W, problem)
    if not 0 <= s < problem.num_constraints:
        raise IndexError(f"constraint index {s} out of range [0, {problem.num_constraints})")
    return inner(problem.constraint_mats[s], W)


def powers(W: np.ndarray, problem: ProblemData) -> np.ndarray:
    W = np.asarray(W)
    _check_dim(W, problem)
    return np.real(np.einsum("sab,ab->s", problem.constraint_mats.conj(), W))


def vector_sinrs(ws: np.ndarray, problem: ProblemData) -> np.ndarray:
    """SINRs for a batch of weight vectors ``ws`` of shape (N, n); returns (N, M)."""
    ws = np.atleast_2d(ws)
    num = np.abs(ws @ problem.signal_vecs.conj().T) ** 2
    den = quad_forms(ws, problem.interference_mats) + 1.0
    return num / den


def quad_forms(ws: np.ndarray, mats: np.ndarray) -> np.ndarray:
    """``w^H Q w`` for every row of ``ws`` and every matrix in ``mats``; (N, K)."""
    ws = np.atleast_2d(ws)
    out = np.empty((ws.shape[0], len(mats)))
    wc = ws.conj()
    for k, Q in enumerate(mats):
        out[:, k] = np.real(np.sum(wc * (ws @ Q.T), axis=1))
    return out


def mimo_sinr_direct(
    V: np.ndarray, config: NetworkConfig, channels: ChannelRealization
) -> np.ndarray:
    """Per-user SINR evaluated from the relay matrix itself (no vectorization)."""
    P = np.asarray(config.tx_powers, dtype=float)
    Sigma = np.diag(np.asarray(config.relay_noise_vars, dtype=float))
    groups = _group_of_users(config)
    out = np.empty(config.num_users)
    for j, gj in enumerate(channels.g):
        gains = P * np.abs(gj.conj() @ V @ channels.f.T) ** 2
        desired = gains[groups[j]]
        interf = gains.sum() - desired
        noise = np.real(gj.conj() @ V @ Sigma @ V.conj().T @ gj)
        out[j] = desired / (interf + noise + config.user_noise_vars[j])
    return out


def dump_problem(problem: ProblemData, path) -> None:
    """Write ``problem`` as JSON; each matrix is stored as ``{"re": [...], "im": [...]}``
    with entries flattened in row-major order."""

    def enc(X):
        X = np.asarray(X, dtype=complex)
        return {"shape": list(X.shape), "re": X.real.ravel().tolist(), "im": X.imag.ravel().tolist()}

    doc = {
        "dim": problem.dim,
        "topology": problem.topology.value,
        "signal_vecs": enc(problem.signal_vecs),
        "signal_mats": enc(problem.signal_mats),
        "interference_mats": enc(problem.interference_mats),
        "constraint_mats": enc(problem.constraint_mats),
        "budgets": [float(b) for b in problem.budgets],
        "constraint_labels": list(problem.constraint_labels),
        "user_index": [[k, i, j] for (k, i), j in problem.user_index.items()],
        "relay_input_cov": enc(problem.relay_input_cov),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_problem(path) -> ProblemData:
    with open(path) as fh:
        doc = json.load(fh)

    def dec(d):
        return (np.array(d["re"]) + 1j * np.array(d["im"])).reshape(d["shape"])

    return ProblemData(
        dim=doc["dim"],
        topology=Topology.parse(doc["topology"]),
        signal_vecs=dec(doc["signal_vecs"]),
        signal_mats=dec(doc["signal_mats"]),
        interference_mats=dec(doc["interference_mats"]),
        constraint_mats=dec(doc["constraint_mats"]),
        budgets=np.array(doc["budgets"], dtype=float),
        constraint_labels=tuple(doc["constraint_labels"]),
        user_index={(k, i): j for k, i, j in doc["user_index"]},
        relay_input_cov=dec(doc["relay_input_cov"]),
    )
