"""Stochastic beamforming: Gaussian and elliptic weight schemes.

A fresh weight ``w(t)`` with covariance ``Omega`` is drawn every symbol slot.
Both schemes write ``w = Lf^H a`` with ``Lf^H Lf = Omega``; the Gaussian one
uses ``a ~ CN(0, I_r)`` and the elliptic one rescales ``a`` to the sphere of
radius ``sqrt(r)``.  The worst user's rate is ``E[log(1 + xi Gamma)]`` where
``Gamma`` is the averaged-interference SINR at ``Omega`` and ``xi`` has
density ``p_G(t) = exp(-t)`` or ``p_E(t) = (1 - 1/r)(1 - t/r)^(r-2)`` on
``[0, r]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, special

from .problem import ProblemData, user_sinrs
from .randomization import normalize_phase

EULER_GAMMA = float(np.euler_gamma)


class NotPsd(ValueError):
    pass


class SbfKind(enum.Enum):
    GAUSSIAN = "gaussian"
    ELLIPTIC = "elliptic"


def factorize_covariance(omega: np.ndarray, rel_tol: float = 1e-6):
    """Rank-truncated factor ``Lf`` (r x n) with ``Lf^H Lf = Omega``.

    Rows are ``sqrt(lambda_j) v_j^H`` for eigenpairs above ``rel_tol * lambda_max``,
    largest first, each eigenvector phase-normalized.
    """
    omega = np.asarray(omega)
    lam, U = np.linalg.eigh(0.5 * (omega + omega.conj().T))
    top = lam[-1]
    if top <= 0:
        if lam[0] < 0:
            raise NotPsd("covariance has no positive eigenvalue")
        return np.zeros((0, omega.shape[0]), dtype=complex), 0
    if lam[0] < -rel_tol * top:
        raise NotPsd(f"min eigenvalue {lam[0]:.3g} below -{rel_tol:g} * lambda_max")
    keep = np.flatnonzero(lam > rel_tol * top)[::-1]
    rows = [math.sqrt(lam[j]) * normalize_phase(U[:, j]).conj() for j in keep]
    return np.array(rows, dtype=complex), len(rows)


@dataclass(frozen=True)
class SbfScheme:
    kind: SbfKind
    covariance: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    rank: int

    @classmethod
    def from_covariance(cls, kind, omega, rel_tol: float = 1e-6) -> "SbfScheme":
        Lf, r = factorize_covariance(omega, rel_tol)
        return cls(SbfKind(kind), np.asarray(omega), Lf, r)


def sample_coefficients(scheme: SbfScheme, rng, size: int) -> np.ndarray:
    """Coefficients ``a`` (size x r) with ``w = a @ conj(Lf)``, following the scheme's law."""
    r = scheme.rank
    raw = rng.standard_normal((size, r, 2))
    alpha = (raw[..., 0] + 1j * raw[..., 1]) * math.sqrt(0.5)
    if scheme.kind is SbfKind.ELLIPTIC and r > 0:
        norms = np.linalg.norm(alpha, axis=1)
        for i in np.flatnonzero(norms == 0):  # probability zero
            while norms[i] == 0:
                raw = rng.standard_normal((r, 2))
                alpha[i] = (raw[:, 0] + 1j * raw[:, 1]) * math.sqrt(0.5)
                norms[i] = np.linalg.norm(alpha[i])
        alpha = alpha * (math.sqrt(r) / norms)[:, None]
    return alpha


def _draw(scheme: SbfScheme, rng, size, expected: SbfKind):
    if scheme.kind is not expected:
        raise ValueError(f"scheme is {scheme.kind.value}, expected {expected.value}")
    alpha = sample_coefficients(scheme, rng, 1 if size is None else size)
    w = alpha @ scheme.factor.conj()
    return w if size is not None else w[0]


def sample_gaussian_weight(scheme: SbfScheme, rng, size=None) -> np.ndarray:
    """``w = Lf^H a`` with ``a ~ CN(0, I_r)``; ``size`` draws a batch of shape (size, n)."""
    return _draw(scheme, rng, size, SbfKind.GAUSSIAN)


def sample_elliptic_weight(scheme: SbfScheme, rng, size=None) -> np.ndarray:
    """``w = Lf^H a sqrt(r) / ||a||``; every draw has ``||Lf^-H w||^2 = r``."""
    return _draw(scheme, rng, size, SbfKind.ELLIPTIC)


def _psd_sqrt(Q):
    lam, U = np.linalg.eigh(0.5 * (Q + Q.conj().T))
    if lam[0] < -1e-10 * max(lam[-1], 1e-300):
        raise NotPsd("Q is not positive semidefinite")
    return (U * np.sqrt(np.maximum(lam, 0.0))) @ U.conj().T


def elliptic_power_bounds(scheme: SbfScheme, Q: np.ndarray, rel_tol: float = 1e-10):
    """Almost-sure range ``[lo, hi]`` of ``w^H Q w`` under the elliptic scheme.

    The spectrum is taken from ``Lf Q Lf^H`` (r x r), whose eigenvalues are the
    nonzero ones of ``Q^1/2 Omega Q^1/2`` padded with zeros when that product
    has rank below ``r``; in the padded case the lower end is 0.
    """
    if scheme.kind is not SbfKind.ELLIPTIC:
        raise ValueError("power bounds apply to the elliptic scheme")
    _psd_sqrt(Q)  # PSD check
    r = scheme.rank
    if r == 0:
        return 0.0, 0.0
    K = scheme.factor @ Q @ scheme.factor.conj().T
    lam = np.linalg.eigvalsh(0.5 * (K + K.conj().T))
    hi = max(lam[-1], 0.0)
    if hi == 0.0:
        return 0.0, 0.0
    lo = lam[0] if lam[0] > rel_tol * hi else 0.0
    return r * float(lo), r * float(hi)


def p_gaussian(t):
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, np.exp(-np.maximum(t, 0.0)), 0.0)


def p_elliptic(t, r: int):
    """Density of ``xi = r |a_1|^2 / ||a||^2`` for ``r >= 2``."""
    if r < 2:
        raise ValueError("p_E is a density only for r >= 2 (r = 1 is a point mass at 1)")
    t = np.asarray(t, dtype=float)
    inside = (t >= 0) & (t <= r)
    base = np.clip(1.0 - t / r, 0.0, None)
    return np.where(inside, (1.0 - 1.0 / r) * base ** (r - 2), 0.0)


def _exp_e1_scaled(x: float) -> float:
    """``exp(x) E1(x)`` for ``x > 0`` without overflow."""
    if x <= 50.0:
        return float(math.exp(x) * special.exp1(x))
    # continued fraction E1(x) = e^-x / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...))), modified Lentz
    tiny = 1e-300
    f = x + 1.0
    C, D = f, 0.0
    for k in range(1, 200):
        a = -float(k * k)
        b = x + 2 * k + 1
        D = b + a * D
        D = 1.0 / (D if D != 0 else tiny)
        C = b + a / C
        delta = C * D
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return 1.0 / f


def sbf_rate_gaussian(gamma: float) -> float:
    """``E[log(1 + xi gamma)]`` for ``xi ~ Exp(1)``, i.e. ``exp(1/gamma) E1(1/gamma)`` (nats)."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0:
        return 0.0
    return _exp_e1_scaled(1.0 / gamma)


def sbf_rate_gaussian_quad(gamma: float) -> float:
    """Quadrature oracle on ``[0, T]``; the dropped tail is below ``e^-T (log(1 + T gamma) + 1)``."""
    if gamma == 0:
        return 0.0
    T = max(50.0, 50.0 / max(gamma, 1.0))
    val, _ = integrate.quad(
        lambda t: math.log1p(t * gamma) * math.exp(-t), 0.0, T, epsabs=1e-13, epsrel=1e-13, limit=400
    )
    return val


def _check_r(r):
    if int(r) != r or r < 1:
        raise ValueError(f"r must be an integer >= 1, got {r}")
    return int(r)


def sbf_rate_elliptic(gamma: float, r: int) -> float:
    """``E[log(1 + xi gamma)]`` for ``xi ~ p_E`` (nats).

    With ``c = r gamma / (1 + r gamma)`` the rate equals
    ``sum_{j>=0} c^(j+1) / (r + j) = c^(1-r) (log(1 + r gamma) - sum_{k<r} c^k / k)``.
    The second form is used when ``c^(1-r)`` is moderate, the series otherwise,
    so neither the binomial alternating sum nor its large prefactor is needed.
    """
    r = _check_r(r)
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0:
        return 0.0
    rg = r * gamma
    if r == 1:
        return math.log1p(gamma)
    c = rg / (1.0 + rg)
    log_pref = (1 - r) * math.log(c)
    if log_pref <= math.log(1e3):
        k = np.arange(1, r)
        head = float(np.sum(c**k / k))
        return math.exp(log_pref) * (math.log1p(rg) - head)
    j = np.arange(0, max(64, int(40.0 / -math.log(c)) + 1))
    return float(np.sum(np.exp((j + 1) * math.log(c)) / (r + j)))


def sbf_rate_elliptic_closed_form(gamma: float, r: int) -> float:
    """The binomial closed form, term by term.

    ``(1 + 1/(r gamma))^(r-1) [log(1 + r gamma) - H_(r-1)
    - sum_k C(r-1, k) (-1)^k / (k (1 + r gamma)^k)]``.  Accurate when ``r gamma``
    is large; for small ``r gamma`` the bracket cancels catastrophically.
    """
    r = _check_r(r)
    if gamma == 0:
        return 0.0
    rg = r * gamma
    if r == 1:
        return math.log1p(gamma)
    k = np.arange(1, r)
    with np.errstate(over="ignore"):
        alt = float(np.sum(special.comb(r - 1, k) * (-1.0) ** k / (k * (1.0 + rg) ** k)))
    H = float(np.sum(1.0 / k))
    return (1.0 + 1.0 / rg) ** (r - 1) * (math.log1p(rg) - H - alt)


def sbf_rate_elliptic_quad(gamma: float, r: int) -> float:
    """Quadrature oracle ``int_0^r log(1 + t gamma) p_E(t) dt`` (``r = 1`` is the point mass)."""
    r = _check_r(r)
    if r == 1:
        return math.log1p(gamma)
    a = 1.0 - 1.0 / r
    val, _ = integrate.quad(
        lambda t: math.log1p(t * gamma) * a * (1.0 - t / r) ** (r - 2),
        0.0,
        float(r),
        epsabs=1e-14,
        epsrel=1e-13,
        limit=400,
        points=[min(1.0 / gamma, r / 2)] if gamma > 1 else None,
    )
    return val


def harmonic(n: int) -> float:
    return float(sum(1.0 / k for k in range(1, n + 1)))


def gap_bound_elliptic(r: int) -> float:
    """Large-SINR gap ``H_(r-1) - log r`` of the elliptic scheme (nats); below Euler's constant."""
    r = _check_r(r)
    return harmonic(r - 1) - math.log(r)


def binomial_harmonic_identity(n: int) -> Fraction:
    """``sum_k C(n,k) (-1)^k / k + H_n`` in exact arithmetic; zero for every ``n >= 1``."""
    total = Fraction(0)
    for k in range(1, n + 1):
        total += Fraction(math.comb(n, k) * (-1) ** k, k) + Fraction(1, k)
    return total


def sbf_rate_for(gamma: float, scheme: SbfScheme) -> float:
    if scheme.kind is SbfKind.GAUSSIAN:
        return sbf_rate_gaussian(gamma)
    return sbf_rate_elliptic(gamma, max(scheme.rank, 1))


def averaged_sinrs(problem: ProblemData, omega: np.ndarray) -> np.ndarray:
    """``Gamma_j(Omega) = A_j.Omega / (C_j.Omega + 1)`` for every user."""
    return user_sinrs(omega, problem)


def sbf_rate(problem: ProblemData, scheme: SbfScheme) -> float:
    """Worst-user SBF rate (nats): the rate formula at ``min_j Gamma_j(Omega)``."""
    g = float(averaged_sinrs(problem, scheme.covariance).min())
    if g <= 0 or scheme.rank == 0:
        return 0.0
    return sbf_rate_for(g, scheme)


def sbf_rate_monte_carlo(problem: ProblemData, scheme: SbfScheme, num_draws: int, rng):
    """Sample mean and standard error of ``log(1 + |a_j^H w|^2 / (C_j.Omega + 1))`` for the worst user."""
    gam = averaged_sinrs(problem, scheme.covariance)
    j = int(np.argmin(gam))
    den = float(np.real(np.vdot(problem.interference_mats[j], scheme.covariance))) + 1.0
    if scheme.kind is SbfKind.GAUSSIAN:
        w = sample_gaussian_weight(scheme, rng, size=num_draws)
    else:
        w = sample_elliptic_weight(scheme, rng, size=num_draws)
    vals = np.log1p(np.abs(w @ problem.signal_vecs[j].conj()) ** 2 / den)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(num_draws))
