import dataclasses

import numpy as np
import pytest

from conftest import make_problem
from sbfaf.ipm import ConicProblem, IpmStatus, embed_hermitian, recover_hermitian, solve_conic
from sbfaf.problem import min_sinr, powers
from sbfaf.scenario import NetworkConfig, generate_channels
from sbfaf.problem import build_problem
from sbfaf.sdr import (
    FeasibilityStatus,
    UnboundedInstance,
    clean_psd,
    gamma_upper_bound,
    rank_of,
    solve_feasibility,
    solve_sdr,
)


def test_rank_of_examples():
    assert rank_of(np.eye(4), 1e-6) == 4
    w = np.random.default_rng(0).standard_normal(5) + 1j
    assert rank_of(np.outer(w, w.conj())) == 1
    assert rank_of(np.diag([1.0, 1e-9, 0.0, 0.0]), 1e-6) == 1
    assert rank_of(np.zeros((3, 3))) == 0


def test_clean_psd_removes_small_negative_eigenvalues():
    W = np.diag([2.0, 1e-12, -1e-10])
    Wc = clean_psd(W)
    assert np.allclose(Wc, np.diag([2.0, 0.0, 0.0]))


def test_embedding_roundtrip():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    X = X + X.conj().T
    E = embed_hermitian(X)
    assert np.allclose(E, E.T)
    assert np.allclose(recover_hermitian(E), X)
    # eigenvalues are duplicated, so PSD-ness is preserved
    assert np.allclose(np.sort(np.linalg.eigvalsh(E)), np.sort(np.repeat(np.linalg.eigvalsh(X), 2)))


def test_ipm_small_real_sdp():
    # min tr(C X) s.t. tr(X) = 1, X PSD  ->  smallest eigenvalue of C
    C = np.array([[2.0, 1.0], [1.0, 3.0]])
    prob = ConicProblem(C=C, c=np.zeros(0), A=np.eye(2)[None], B=np.zeros((1, 0)), b=np.array([1.0]))
    res = solve_conic(prob)
    assert res.status is IpmStatus.OPTIMAL
    assert res.pobj == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-7)


def test_ipm_complex_matches_embedded():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    C = B + B.conj().T
    A = np.eye(3, dtype=complex)[None]
    prob = ConicProblem(C=C, c=np.zeros(0), A=A, B=np.zeros((1, 0)), b=np.array([1.0]))
    emb = ConicProblem(
        C=0.5 * embed_hermitian(C), c=np.zeros(0), A=0.5 * embed_hermitian(A[0])[None],
        B=np.zeros((1, 0)), b=np.array([1.0]),
    )
    r1, r2 = solve_conic(prob), solve_conic(emb)
    assert r1.pobj == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-7)
    assert r2.pobj == pytest.approx(r1.pobj, abs=1e-7)


def test_feasibility_at_zero():
    _, _, p = make_problem(L=2, G=1, M=2)
    res = solve_feasibility(p, 0.0)
    assert res.status is FeasibilityStatus.FEASIBLE
    assert res.min_power == 0.0 and not np.any(res.W)


def test_feasibility_above_upper_bound():
    _, _, p = make_problem(L=2, G=1, M=2)
    res = solve_feasibility(p, 1.01 * gamma_upper_bound(p))
    assert res.status is FeasibilityStatus.INFEASIBLE


def test_feasibility_around_reference_optimum(reference_instances):
    # L=2, G=1, M=1 instance whose optimum was computed by an independent solver
    cfg, p, g = reference_instances[0]
    assert (cfg.num_relay_antennas, cfg.num_users) == (2, 1)
    below = solve_feasibility(p, g * (1 - 1e-3))
    above = solve_feasibility(p, g * (1 + 1e-3))
    assert below.status is FeasibilityStatus.FEASIBLE
    assert min_sinr(below.W, p) >= g * (1 - 1e-3) * (1 - 1e-6)
    assert powers(below.W, p)[0] <= p.budgets[0] * (1 + 1e-7)
    assert above.status is FeasibilityStatus.INFEASIBLE


def test_smallest_instance_is_rank_one(reference_instances):
    _, p, g = reference_instances[0]
    sol = solve_sdr(p)
    assert sol.rank == 1
    assert sol.gamma_star == pytest.approx(g, rel=1e-5)
    assert sol.sdr_rate == pytest.approx(np.log1p(sol.gamma_star))


@pytest.mark.parametrize("index", [3, 8, 13])
def test_embedded_solver_agrees(reference_instances, index):
    _, p, g = reference_instances[index]
    a = solve_sdr(p)
    b = solve_sdr(p, embed=True)
    assert a.gamma_star == pytest.approx(g, rel=1e-4)
    assert b.gamma_star == pytest.approx(g, rel=1e-4)


def test_budget_scaling_monotone():
    cfg, ch, p = make_problem(L=3, G=2, M=4, seed=4, per_antenna=[0.8] * 3)
    base = solve_sdr(p).gamma_star
    for alpha in (1.5, 3.0):
        q = dataclasses.replace(p, budgets=p.budgets * alpha)
        g = solve_sdr(q).gamma_star
        assert g >= base * (1 - 1e-5)
        base = g


def test_zero_downlink_gives_zero():
    cfg = NetworkConfig.uniform(2, 1, 2)
    ch = generate_channels(cfg, 0)
    ch0 = dataclasses.replace(ch, g=np.zeros_like(ch.g))
    sol = solve_sdr(build_problem(cfg, ch0))
    assert sol.gamma_star == 0.0 and sol.rank == 0


def test_unbounded_constraint_set_detected():
    _, _, p = make_problem(L=2, G=1, M=1)
    q = dataclasses.replace(p, constraint_mats=np.zeros_like(p.constraint_mats))
    with pytest.raises(UnboundedInstance):
        solve_sdr(q)


def test_solution_feasible_and_certified():
    _, _, p = make_problem(L=3, G=1, M=4, seed=9, per_antenna=[0.5] * 3)
    sol = solve_sdr(p)
    assert np.all(powers(sol.W_star, p) <= p.budgets * (1 + 1e-6))
    assert min_sinr(sol.W_star, p) >= sol.gamma_star * (1 - 1e-9)
    lo, hi = sol.diagnostics["bracket"]
    assert lo <= sol.gamma_star * (1 + 1e-12) and hi - lo <= 1e-5 * (1 + sol.diagnostics["gamma_high"])


def test_feasibility_monotone_in_level():
    _, _, p = make_problem(L=2, G=2, M=4, seed=12, per_antenna=[0.7, 0.7])
    g = solve_sdr(p).gamma_star
    statuses = [solve_feasibility(p, f * g).status for f in (0.25, 0.5, 0.9, 0.999, 1.01, 1.5)]
    feasible = [s is FeasibilityStatus.FEASIBLE for s in statuses]
    assert feasible == sorted(feasible, reverse=True)
    assert feasible[3] and not feasible[4]
