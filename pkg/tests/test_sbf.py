import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import make_problem, random_psd
from sbfaf import sbf
from sbfaf.rng import substream
from sbfaf.sdr import solve_sdr

EULER = 0.5772156649015329


def _scheme(kind, omega):
    return sbf.SbfScheme.from_covariance(kind, omega)


def test_factorize_identity_and_rank_one():
    Lf, r = sbf.factorize_covariance(np.eye(4))
    assert r == 4 and np.allclose(Lf.conj().T @ Lf, np.eye(4))
    w = np.array([1j, 2.0, -1.0])
    Lf, r = sbf.factorize_covariance(np.outer(w, w.conj()))
    assert r == 1
    row = Lf[0]
    assert np.allclose(np.outer(row.conj(), row), np.outer(w, w.conj()))
    assert abs(np.linalg.norm(row) - np.linalg.norm(w)) < 1e-12


def test_factorize_constructed_rank_three():
    omega = random_psd(6, 3, np.random.default_rng(0))
    Lf, r = sbf.factorize_covariance(omega)
    assert r == 3 and Lf.shape == (3, 6)
    err = np.linalg.norm(Lf.conj().T @ Lf - omega) / np.linalg.norm(omega)
    assert err <= 1e-10


def test_factorize_rejects_indefinite():
    with pytest.raises(sbf.NotPsd):
        sbf.factorize_covariance(np.diag([1.0, -0.5]))


def test_zero_covariance_gives_zero_weight():
    s = _scheme("gaussian", np.zeros((3, 3)))
    assert s.rank == 0
    assert not np.any(sbf.sample_gaussian_weight(s, np.random.default_rng(0)))
    assert sbf.sbf_rate(make_problem(L=2, G=1, M=1)[2], _scheme("gaussian", np.zeros((4, 4)))) == 0.0


@pytest.mark.parametrize("kind", ["gaussian", "elliptic"])
def test_sample_covariance_matches(kind):
    omega = random_psd(3, 2, np.random.default_rng(4))
    s = _scheme(kind, omega)
    w = (sbf.sample_gaussian_weight if kind == "gaussian" else sbf.sample_elliptic_weight)(
        s, substream(0, "cov", len(kind)), size=100_000
    )
    prods = w[:, :, None] * w[:, None, :].conj()
    mean = prods.mean(axis=0)
    se = prods.std(axis=0) / math.sqrt(w.shape[0])
    assert np.all(np.abs(mean - omega) <= 3 * se + 1e-12)


def test_elliptic_norm_fixed():
    s = _scheme("elliptic", np.eye(2))
    w = sbf.sample_elliptic_weight(s, np.random.default_rng(1), size=1000)
    assert np.allclose(np.sum(np.abs(w) ** 2, axis=1), 2.0)
    v = np.array([1.0, 1j])
    s1 = _scheme("elliptic", np.outer(v, v.conj()))
    w1 = sbf.sample_elliptic_weight(s1, np.random.default_rng(1), size=50)
    outer = w1[:, :, None] * w1[:, None, :].conj()
    assert np.allclose(outer, np.outer(v, v.conj())[None])


def test_wrong_kind_rejected():
    s = _scheme("gaussian", np.eye(2))
    with pytest.raises(ValueError):
        sbf.sample_elliptic_weight(s, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sbf.elliptic_power_bounds(s, np.eye(2))


def test_power_bounds_examples():
    s = _scheme("elliptic", np.eye(2))
    assert sbf.elliptic_power_bounds(s, np.eye(2)) == pytest.approx((2.0, 2.0))
    assert sbf.elliptic_power_bounds(s, np.zeros((2, 2))) == (0.0, 0.0)


def test_power_bounds_hold_on_samples():
    _, _, p = make_problem(L=3, G=2, M=4, seed=6, per_antenna=[0.5] * 3)
    sol = solve_sdr(p)
    s = _scheme("elliptic", sol.W_star)
    w = sbf.sample_elliptic_weight(s, np.random.default_rng(2), size=10_000)
    for Q in p.constraint_mats:
        lo, hi = sbf.elliptic_power_bounds(s, Q)
        q = np.real(np.einsum("ta,ab,tb->t", w.conj(), Q, w))
        eps = 1e-9 * hi
        assert q.min() >= lo - eps and q.max() <= hi + eps


def test_gaussian_rate_values():
    assert sbf.sbf_rate_gaussian(0.0) == 0.0
    assert sbf.sbf_rate_gaussian(1.0) == pytest.approx(0.596347, abs=1e-6)
    ref, _ = integrate.quad(lambda t: math.log1p(t) * math.exp(-t), 0, np.inf, epsabs=1e-13)
    assert sbf.sbf_rate_gaussian(1.0) == pytest.approx(ref, abs=1e-10)
    assert math.log1p(1e8) - sbf.sbf_rate_gaussian(1e8) == pytest.approx(EULER, abs=1e-6)


@pytest.mark.parametrize("gamma", [1e-3, 0.3, 1.0, 17.0, 1e3])
def test_elliptic_rate_vs_quadrature(gamma):
    assert sbf.sbf_rate_elliptic(gamma, 1) == pytest.approx(math.log1p(gamma), abs=1e-14)
    for r in (2, 5, 12):
        assert abs(sbf.sbf_rate_elliptic(gamma, r) - sbf.sbf_rate_elliptic_quad(gamma, r)) <= 1e-8
    assert sbf.sbf_rate_elliptic(0.0, 4) == 0.0


def test_literal_closed_form_at_high_snr():
    for r in (2, 6, 12):
        assert sbf.sbf_rate_elliptic_closed_form(500.0, r) == pytest.approx(
            sbf.sbf_rate_elliptic(500.0, r), abs=1e-8
        )


def test_gap_bound_values():
    assert sbf.gap_bound_elliptic(1) == 0.0
    assert sbf.gap_bound_elliptic(2) == pytest.approx(1 - math.log(2), abs=1e-12)
    vals = [sbf.gap_bound_elliptic(r) for r in range(1, 500)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert max(vals) < 0.5772157
    for r in (2, 4, 8):
        g = 1e7
        assert math.log1p(g) - sbf.sbf_rate_elliptic(g, r) == pytest.approx(vals[r - 1], abs=1e-5)


def test_binomial_identity_exact():
    assert all(sbf.binomial_harmonic_identity(n) == 0 for n in range(1, 21))


def test_densities_integrate():
    for r in (2, 3, 7):
        total, _ = integrate.quad(lambda t: float(sbf.p_elliptic(t, r)), 0, r)
        mean, _ = integrate.quad(lambda t: t * float(sbf.p_elliptic(t, r)), 0, r)
        assert total == pytest.approx(1.0, abs=1e-10) and mean == pytest.approx(1.0, abs=1e-10)
    assert float(sbf.p_gaussian(-1.0)) == 0.0


@settings(max_examples=40, deadline=None)
@given(gamma=st.floats(1e-3, 1e3), r=st.integers(2, 12))
def test_rate_ordering(gamma, r):
    rg = sbf.sbf_rate_gaussian(gamma)
    re = sbf.sbf_rate_elliptic(gamma, r)
    cap = math.log1p(gamma)
    assert 0 < rg <= re <= cap
    assert cap - re <= sbf.gap_bound_elliptic(r) + 1e-12
    assert cap - rg <= EULER + 1e-12


def test_monte_carlo_matches_formula():
    _, _, p = make_problem(L=3, G=2, M=8, seed=1)
    sol = solve_sdr(p)
    assert sol.rank >= 2
    for kind in ("gaussian", "elliptic"):
        s = _scheme(kind, sol.W_star)
        mean, se = sbf.sbf_rate_monte_carlo(p, s, 100_000, substream(3, "mc", len(kind)))
        assert abs(mean - sbf.sbf_rate(p, s)) <= 3 * se + 1e-12
