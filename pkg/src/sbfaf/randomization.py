"""Rank-one Gaussian randomization of an SDR solution.

Candidates ``xi ~ CN(0, W*)`` are scaled onto the tightest power budget and
the candidate with the best worst-user SINR is kept.  Draw ``n`` always uses
the same random numbers for a given seed, so a run with ``N`` draws is a
prefix of any run with more draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .problem import ProblemData, quad_forms, vector_sinrs
from .rng import complex_normal, substream
from .sdr import SdrSolution, rank_of

CLIP_REL = 1e-12


class DegenerateCandidate(ValueError):
    """A nonzero candidate has zero power in every finite budget and violates some constraint."""


@dataclass
class BfSolution:
    w_hat: np.ndarray = field(repr=False)
    achieved_sinr: float
    bf_rate: float
    num_randomizations: int
    winning_index: int  # -1 when W* was already rank one


def psd_sqrt_factor(W: np.ndarray, clip_rel: float = CLIP_REL) -> np.ndarray:
    """``F`` with ``F F^H = W`` after clipping eigenvalues below ``clip_rel * lambda_max``."""
    lam, U = np.linalg.eigh(0.5 * (W + W.conj().T))
    top = max(lam[-1], 0.0)
    lam = np.where(lam > clip_rel * top, lam, 0.0)
    return U * np.sqrt(lam)[None, :]


def normalize_phase(w: np.ndarray) -> np.ndarray:
    """Rotate ``w`` so its first nonzero entry is real and positive."""
    w = np.asarray(w, dtype=complex)
    nz = np.flatnonzero(np.abs(w) > 0)
    if nz.size == 0:
        return w.copy()
    a = w[nz[0]]
    return w * (abs(a) / a)


def scale_to_budgets(xis: np.ndarray, problem: ProblemData) -> np.ndarray:
    """Scale each row of ``xis`` by ``min_s sqrt(b_s / xi^H Q_s xi)``.

    Zero-power constraints cannot be violated at any scale and are skipped;
    a row with no finite ratio is left unscaled (it satisfies every budget).
    """
    q = quad_forms(xis, problem.constraint_mats)
    b = problem.budgets[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, b / q, np.inf)
    rmin = ratio.min(axis=1)
    scale = np.where(np.isfinite(rmin), np.sqrt(rmin), 1.0)
    return xis * scale[:, None]


def _shrink_factor(w, problem: ProblemData) -> float:
    q = quad_forms(w[None, :], problem.constraint_mats)[0]
    with np.errstate(divide="ignore"):
        ratio = np.where(q > 0, problem.budgets / q, np.inf)
    r = float(ratio.min())
    return math.sqrt(r) if math.isfinite(r) else 1.0


def bf_rate(w: np.ndarray, problem: ProblemData) -> float:
    """Worst-user rate ``log(1 + min SINR)`` of a fixed weight vector, in nats."""
    return math.log1p(float(vector_sinrs(np.asarray(w)[None, :], problem).min()))


def gaussian_randomize(
    sdr: SdrSolution,
    problem: ProblemData,
    N: int,
    seed: int,
    *,
    stream: tuple = (),
    rank_tol: float = 1e-6,
) -> BfSolution:
    """Best scaled Gaussian candidate drawn around ``sdr.W_star``.

    ``stream`` extends the substream key (e.g. sweep and draw indices).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    W = sdr.W_star
    n = problem.dim
    r = rank_of(W, rank_tol)
    if r == 0:
        w = np.zeros(n, dtype=complex)
        return BfSolution(w, 0.0, 0.0, N, -1)
    if r == 1:
        lam, U = np.linalg.eigh(0.5 * (W + W.conj().T))
        # W* = w w^H already; only shrink if it sits (numerically) outside a budget
        w = U[:, -1] * math.sqrt(lam[-1])
        w = normalize_phase(w * min(1.0, _shrink_factor(w, problem)))
        theta = float(vector_sinrs(w[None, :], problem).min())
        return BfSolution(w, theta, math.log1p(theta), N, -1)

    F = psd_sqrt_factor(W)
    rng = substream(seed, "randomization", *stream)
    alpha = complex_normal(rng, (N, n))
    xis = alpha @ F.T
    norms = np.sum(np.abs(xis) ** 2, axis=1)
    cands = scale_to_budgets(xis, problem)
    q = quad_forms(cands, problem.constraint_mats)
    bad = (norms > 0) & np.any(q > problem.budgets * (1 + 1e-9), axis=1)
    if np.any(bad):
        # only reachable when every finite ratio was skipped yet a budget is exceeded
        raise DegenerateCandidate(f"{int(bad.sum())} candidate(s) cannot be scaled feasible")
    theta = vector_sinrs(cands, problem).min(axis=1)
    best = int(np.argmax(theta))
    w = normalize_phase(cands[best])
    th = float(vector_sinrs(w[None, :], problem).min())
    return BfSolution(w, th, math.log1p(th), N, best)


def theorem1_gap_bound(M: int, L: int) -> float:
    """Worst-case SDR-to-randomized rate gap ``ln M + ln(ln(3(L+1)) + 1/6) + ln 48`` (nats)."""
    if M < 1:
        raise ValueError("M must be at least 1")
    if L < 2:
        raise ValueError("the gap bound needs L >= 2 relay antennas")
    return math.log(M) + math.log(math.log(3 * (L + 1)) + 1.0 / 6.0) + math.log(48.0)


def sinr_drop_beta(M: int) -> float:
    return 1.0 / (8.0 * M)


def power_excess_rho(L: int) -> float:
    return 6.0 * math.log(3 * (L + 1)) + 1.0


def sinr_drop_probabilities(W: np.ndarray, problem: ProblemData, beta: float, num_draws: int, rng):
    """Empirical ``Pr(SINR_j(xi xi^H) <= beta SINR_j(W))`` per user, with its bound ``3b/(1-2b)``."""
    xis = complex_normal(rng, (num_draws, problem.dim)) @ psd_sqrt_factor(W).T
    ref = np.real(np.einsum("jab,ab->j", problem.signal_mats.conj(), W)) / (
        np.real(np.einsum("jab,ab->j", problem.interference_mats.conj(), W)) + 1.0
    )
    hit = vector_sinrs(xis, problem) <= beta * ref[None, :]
    return hit.mean(axis=0), 3 * beta / (1 - 2 * beta)


def power_excess_probabilities(W: np.ndarray, problem: ProblemData, rho: float, num_draws: int, rng):
    """Empirical ``Pr(Q_s . xi xi^H >= rho Q_s . W)`` per constraint, with its bound ``exp(-(rho-1)/6)``."""
    xis = complex_normal(rng, (num_draws, problem.dim)) @ psd_sqrt_factor(W).T
    ref = np.real(np.einsum("sab,ab->s", problem.constraint_mats.conj(), W))
    hit = quad_forms(xis, problem.constraint_mats) >= rho * ref[None, :]
    return hit.mean(axis=0), math.exp(-(rho - 1) / 6)
