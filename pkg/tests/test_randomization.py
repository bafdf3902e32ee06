import math

import numpy as np
import pytest

from conftest import make_problem
from sbfaf.problem import min_sinr, quad_forms, vector_sinrs
from sbfaf.randomization import (
    bf_rate,
    gaussian_randomize,
    sinr_drop_beta,
    power_excess_rho,
    normalize_phase,
    power_excess_probabilities,
    psd_sqrt_factor,
    scale_to_budgets,
    sinr_drop_probabilities,
    theorem1_gap_bound,
)
from sbfaf.rng import substream
from sbfaf.sdr import SdrSolution, solve_sdr


@pytest.fixture(scope="module")
def solved():
    _, _, p = make_problem(L=3, G=2, M=6, seed=1, per_antenna=[0.6] * 3)
    return p, solve_sdr(p)


def test_rank_one_shortcut():
    _, _, p = make_problem(L=2, G=1, M=1, seed=3)
    w = np.array([0.3, 0.1j, -0.2, 0.05])
    w = w * math.sqrt(0.5 * p.budgets[0] / np.real(w.conj() @ p.constraint_mats[0] @ w))
    W = np.outer(w, w.conj())
    sdr = SdrSolution(W, min_sinr(W, p), 1, math.log1p(min_sinr(W, p)))
    out = gaussian_randomize(sdr, p, 10, seed=0)
    assert out.winning_index == -1
    ratio = out.w_hat / w
    assert np.allclose(ratio, ratio[0]) and abs(abs(ratio[0]) - 1) < 1e-10
    assert out.achieved_sinr == pytest.approx(min_sinr(W, p), rel=1e-10)


def test_output_feasible_and_below_sdr(solved):
    p, sol = solved
    out = gaussian_randomize(sol, p, 200, seed=5)
    q = quad_forms(out.w_hat[None, :], p.constraint_mats)[0]
    assert np.all(q <= p.budgets * (1 + 1e-9))
    assert out.bf_rate <= sol.sdr_rate + 1e-12
    assert out.achieved_sinr == pytest.approx(float(vector_sinrs(out.w_hat[None, :], p).min()))
    assert abs(np.angle(out.w_hat[np.flatnonzero(np.abs(out.w_hat) > 0)[0]])) < 1e-12


def test_deterministic_and_prefix_monotone(solved):
    p, sol = solved
    a = gaussian_randomize(sol, p, 10, seed=11, stream=(2,))
    b = gaussian_randomize(sol, p, 10, seed=11, stream=(2,))
    c = gaussian_randomize(sol, p, 1000, seed=11, stream=(2,))
    assert np.array_equal(a.w_hat, b.w_hat)
    assert c.bf_rate >= a.bf_rate
    if c.winning_index < 10:
        assert c.winning_index == a.winning_index


def test_invalid_count(solved):
    p, sol = solved
    with pytest.raises(ValueError):
        gaussian_randomize(sol, p, 0, seed=0)


def test_scaling_hits_tightest_budget(solved):
    p, _ = solved
    rng = np.random.default_rng(0)
    xis = rng.standard_normal((50, p.dim)) + 1j * rng.standard_normal((50, p.dim))
    q = quad_forms(scale_to_budgets(xis, p), p.constraint_mats)
    ratio = q / p.budgets
    assert np.allclose(ratio.max(axis=1), 1.0)


def test_scaling_skips_zero_power_constraints():
    _, _, p = make_problem(L=2, G=1, M=1, per_antenna=[1.0, 1.0])
    # a vector that no per-antenna constraint sees is limited only by the others
    e = np.zeros((1, 4), dtype=complex)
    e[0, 0] = 1.0
    out = scale_to_budgets(e, p)
    q = quad_forms(out, p.constraint_mats)[0]
    assert np.all(q <= p.budgets * (1 + 1e-12))
    assert np.isclose((q / p.budgets).max(), 1.0)


def test_bf_rate_basic(solved):
    p, sol = solved
    assert bf_rate(np.zeros(p.dim), p) == 0.0
    w = gaussian_randomize(sol, p, 20, seed=0).w_hat
    for a in (0.9, 0.5, 0.1):
        assert bf_rate(a * w, p) <= bf_rate(w, p) + 1e-15


def test_sqrt_factor_and_phase():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
    W = B.conj().T @ B
    F = psd_sqrt_factor(W)
    assert np.allclose(F @ F.conj().T, W)
    v = normalize_phase(np.array([0.0, 1j, 2.0]))
    assert v[1] == pytest.approx(1.0)
    assert not np.any(normalize_phase(np.zeros(3)))


def test_gap_bound_values():
    assert theorem1_gap_bound(1, 2) == pytest.approx(4.7315, abs=5e-5)
    assert theorem1_gap_bound(16, 8) == pytest.approx(7.8858, abs=5e-5)
    assert theorem1_gap_bound(17, 8) > theorem1_gap_bound(16, 8)
    with pytest.raises(ValueError):
        theorem1_gap_bound(4, 1)
    with pytest.raises(ValueError):
        theorem1_gap_bound(0, 4)


def test_tail_probabilities_below_bounds(solved):
    p, sol = solved
    n = 20_000
    p3, b3 = sinr_drop_probabilities(sol.W_star, p, sinr_drop_beta(p.num_users), n, substream(0, "t3"))
    p4, b4 = power_excess_probabilities(sol.W_star, p, power_excess_rho(3), n, substream(0, "t4"))
    assert b3 == pytest.approx(3 * sinr_drop_beta(6) / (1 - 2 * sinr_drop_beta(6)))
    assert np.all(p3 <= b3 + 3 * np.sqrt(b3 * (1 - b3) / n))
    assert np.all(p4 <= b4 + 3 * np.sqrt(b4 * (1 - b4) / n) + 3 / n)
