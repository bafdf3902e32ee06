"""Semidefinite relaxation of the max-min-fair SINR problem.

The relaxation is solved by bisection on the SINR level.  Each step solves
a convex SDP at a fixed level ``gamma`` with :mod:`sbfaf.ipm`.  The bracket
``[lo, hi]`` is updated with certified bounds only:

* ``lo`` is always the exact minimum SINR of a feasible matrix in hand;
* ``hi`` comes from either an infeasible level or the optimal margin
  ``F(gamma) = max_W min_j [A_j.W - gamma (C_j.W + 1)]``, since every
  denominator is at least one and so ``gamma* <= gamma + F(gamma)``.

Levels are probed at the current ``lo`` (a Dinkelbach step, which closes
the bracket quickly near the optimum) unless the previous step failed to
halve the bracket, in which case the midpoint is probed.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ipm import ConicProblem, IpmStatus, embed_hermitian, recover_hermitian, solve_conic
from .problem import ProblemData, min_sinr, powers

log = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-6


class NumericalFailure(RuntimeError):
    """The interior-point method stalled; never silently read as infeasible."""


class UnboundedInstance(ValueError):
    pass


class FeasibilityStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class FeasibilityResult:
    status: FeasibilityStatus
    W: Optional[np.ndarray]
    min_power: float
    ipm_iters: int
    margin: float = float("nan")


@dataclass
class SdrSolution:
    W_star: np.ndarray = field(repr=False)
    gamma_star: float
    rank: int
    sdr_rate: float
    diagnostics: dict = field(default_factory=dict)


def rank_of(W: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of eigenvalues above ``rel_tol * lambda_max``; zero for W = 0."""
    lam = np.linalg.eigvalsh(0.5 * (W + W.conj().T))
    top = lam[-1]
    if top <= 0:
        return 0
    return int(np.count_nonzero(lam > rel_tol * top))


def clean_psd(W: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Hermitian part of ``W`` with eigenvalues below ``rel_tol * lambda_max`` zeroed."""
    lam, U = np.linalg.eigh(0.5 * (W + W.conj().T))
    if lam[-1] <= 0:
        return np.zeros_like(W)
    keep = lam > rel_tol * lam[-1]
    Uk = U[:, keep]
    out = (Uk * lam[keep]) @ Uk.conj().T
    return 0.5 * (out + out.conj().T)


def _fit_budgets(W: np.ndarray, problem: ProblemData) -> np.ndarray:
    ratio = float(np.max(powers(W, problem) / problem.budgets))
    return W / ratio if ratio > 1.0 else W


def gamma_upper_bound(problem: ProblemData) -> float:
    """``min_j lambda_max(A_j) * tau`` where ``tau`` bounds ``tr(W)`` on the feasible set."""
    Q = problem.constraint_mats
    b = problem.budgets
    taus = []
    for Qs, bs in zip(Q, b):
        lam = np.linalg.eigvalsh(Qs)[0]
        if lam > 1e-12 * max(np.abs(Qs).max(), 1e-300):
            taus.append(bs / lam)
    lam_sum = np.linalg.eigvalsh(Q.sum(axis=0))[0]
    if lam_sum > 1e-12 * max(np.abs(Q).max(), 1e-300):
        taus.append(float(b.sum()) / lam_sum)
    if not taus:
        raise UnboundedInstance("constraint set does not bound tr(W); SINR may be unbounded")
    a_norm2 = np.sum(np.abs(problem.signal_vecs) ** 2, axis=1)  # lambda_max of a a^H
    return float(np.min(a_norm2) * min(taus))


def _embed_stack(mats):
    return np.array([0.5 * embed_hermitian(M) for M in mats])


def _margin_problem(problem: ProblemData, gamma: float, embed: bool, weights=None) -> ConicProblem:
    """max t  s.t.  w_j [(A_j - gamma C_j).W - gamma] >= t,  Q_s.W <= b_s,  W PSD.

    ``t`` is shifted by ``kappa = max_j w_j gamma + 1`` so that the LP variable
    is nonnegative and ``W = 0`` is strictly feasible for every level.
    """
    M, S = problem.num_users, problem.num_constraints
    w = np.ones(M) if weights is None else np.asarray(weights, dtype=float)
    kappa = float(np.max(w) * gamma + 1.0)
    rows = np.concatenate(
        [
            w[:, None, None] * (problem.signal_mats - gamma * problem.interference_mats),
            problem.constraint_mats,
        ]
    )
    B = np.zeros((M + S, 1 + M + S))
    B[:M, 0] = -1.0
    B[:M, 1 : 1 + M] = -np.eye(M)
    B[M:, 1 + M :] = np.eye(S)
    b = np.concatenate([w * gamma - kappa, problem.budgets])
    c = np.zeros(1 + M + S)
    c[0] = -1.0
    A = _embed_stack(rows) if embed else _herm_stack(rows)
    N = A.shape[1]
    return ConicProblem(C=np.zeros((N, N), dtype=A.dtype), c=c, A=A, B=B, b=b), kappa


def _herm_stack(mats):
    return 0.5 * (mats + np.conj(np.swapaxes(mats, 1, 2)))


def _power_min_problem(problem: ProblemData, gamma: float, embed: bool) -> ConicProblem:
    M, S = problem.num_users, problem.num_constraints
    rows = np.concatenate(
        [problem.signal_mats - gamma * problem.interference_mats, problem.constraint_mats[1:]]
    )
    B = np.zeros((M + S - 1, M + S - 1))
    B[:M, :M] = -np.eye(M)
    B[M:, M:] = np.eye(S - 1)
    b = np.concatenate([np.full(M, gamma), problem.budgets[1:]])
    obj = problem.constraint_mats[0]
    if embed:
        A, C = _embed_stack(rows), 0.5 * embed_hermitian(obj)
    else:
        A, C = _herm_stack(rows), 0.5 * (obj + obj.conj().T)
    return ConicProblem(C=C, c=np.zeros(M + S - 1), A=A, B=B, b=b)


def _extract(X: np.ndarray, embed: bool) -> np.ndarray:
    W = recover_hermitian(X) if embed else X
    return 0.5 * (W + W.conj().T)


@dataclass
class _MarginStep:
    gamma: float
    W: np.ndarray
    f_lower: float  # normalized margin achieved by W
    bound: float  # certified: gamma* <= gamma + bound (when bound >= 0)
    status: IpmStatus
    iterations: int
    certified: bool = True


def _margin_step(problem, gamma, *, embed, ipm_tol, rank_tol, weights=None) -> _MarginStep:
    conic, kappa = _margin_problem(problem, gamma, embed, weights)
    res = solve_conic(conic, tol=ipm_tol)
    W = _fit_budgets(clean_psd(_extract(res.X, embed), rank_tol), problem)
    t_low = -res.pobj
    t_up = max(t_low, -res.dobj)
    # an inaccurate solve still certifies a bound when its dual residual is
    # negligible; the padding grows with the residuals actually reached
    slack = max(ipm_tol, res.rel_gap, res.dinf)
    t_up += 10 * slack * (1.0 + abs(t_up))
    certified = res.status is IpmStatus.OPTIMAL or (
        res.status is IpmStatus.INACCURATE and res.dinf <= 1e-7 and res.rel_gap <= 1e-6
    )
    w_min = 1.0 if weights is None else float(np.min(weights))
    return _MarginStep(
        gamma=gamma,
        W=W,
        f_lower=t_low - kappa,
        bound=(t_up - kappa) / w_min,
        status=res.status,
        iterations=res.iterations,
        certified=certified,
    )


def solve_feasibility(
    problem: ProblemData,
    gamma: float,
    *,
    embed: bool = False,
    ipm_tol: float = 1e-8,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> FeasibilityResult:
    """Minimum-power matrix meeting every SINR at level ``gamma``.

    The level is first classified with the always-feasible margin SDP (so an
    infeasible level never has to be detected by a diverging IPM); a feasible
    level is then handed to the power-minimization SDP.  Feasible means the
    minimum power fits the first (total) budget.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    n = problem.dim
    if gamma == 0:
        return FeasibilityResult(FeasibilityStatus.FEASIBLE, np.zeros((n, n), complex), 0.0, 0, 0.0)
    step = _margin_step(problem, gamma, embed=embed, ipm_tol=ipm_tol, rank_tol=rank_tol)
    iters = step.iterations
    if step.status is IpmStatus.FAILED:
        return FeasibilityResult(FeasibilityStatus.NUMERICAL_FAILURE, None, float("nan"), iters)
    if step.certified and step.bound < 0:
        return FeasibilityResult(FeasibilityStatus.INFEASIBLE, None, float("nan"), iters, step.f_lower)
    if step.f_lower < 0 and min_sinr(step.W, problem) < gamma * (1 - 1e-7):
        return FeasibilityResult(FeasibilityStatus.INFEASIBLE, None, float("nan"), iters, step.f_lower)

    W = step.W
    res = solve_conic(_power_min_problem(problem, gamma, embed), tol=ipm_tol)
    iters += res.iterations
    if res.status is not IpmStatus.FAILED:
        Wpm = _extract(res.X, embed)
        Wpm = _repair(clean_psd(Wpm, rank_tol), problem, gamma)
        if Wpm is not None and float(np.max(powers(Wpm, problem) / problem.budgets)) <= 1 + 1e-7:
            W = Wpm
    p0 = float(powers(W, problem)[0])
    status = FeasibilityStatus.FEASIBLE if p0 <= problem.budgets[0] * (1 + 1e-7) else FeasibilityStatus.INFEASIBLE
    return FeasibilityResult(status, W if status is FeasibilityStatus.FEASIBLE else None, p0, iters, step.f_lower)


def _repair(W, problem, gamma):
    """Scale ``W`` up just enough to meet the SINR level exactly, if it is close."""
    lhs = np.real(
        np.einsum("jab,ab->j", (problem.signal_mats - gamma * problem.interference_mats).conj(), W)
    )
    if np.any(lhs <= 0):
        return None
    alpha = max(1.0, float(np.max(gamma / lhs)))
    if alpha > 1 + 1e-6:
        return None
    return W * alpha


def solve_sdr(
    problem: ProblemData,
    tol_gamma: Optional[float] = None,
    *,
    embed: bool = False,
    ipm_tol: float = 1e-8,
    rank_tol: float = DEFAULT_RANK_TOL,
    max_steps: int = 100,
) -> SdrSolution:
    """Optimal SDR matrix ``W*`` and its minimum SINR ``gamma*``."""
    n = problem.dim
    if np.any(np.sum(np.abs(problem.signal_vecs) ** 2, axis=1) == 0):
        W0 = np.zeros((n, n), dtype=complex)
        return SdrSolution(W0, 0.0, 0, 0.0, {"steps": [], "bracket_width": 0.0, "degenerate": True})

    gamma_high = gamma_upper_bound(problem)
    tol = 1e-5 * (1.0 + gamma_high) if tol_gamma is None else float(tol_gamma)
    if tol <= 0:
        raise ValueError("tol_gamma must be positive")

    lo, hi = 0.0, gamma_high
    W_best = np.zeros((n, n), dtype=complex)
    probe = 0.0
    steps = []
    failures = 0
    use_weights = True
    while hi - lo > tol and len(steps) < max_steps:
        width = hi - lo
        weights = None
        if lo > 0 and use_weights:
            weights = 1.0 / (np.real(np.einsum("jab,ab->j", problem.interference_mats.conj(), W_best)) + 1.0)
        step = _margin_step(
            problem, probe, embed=embed, ipm_tol=ipm_tol, rank_tol=rank_tol, weights=weights
        )
        steps.append({"gamma": probe, "status": step.status.value, "iterations": step.iterations})
        if step.status is IpmStatus.FAILED:
            failures += 1
            if failures >= 3:
                raise NumericalFailure(f"IPM failed repeatedly near gamma={probe:.6g}")
            probe = 0.5 * (lo + hi)
            continue
        g = min_sinr(step.W, problem)
        if g > lo:
            lo, W_best = g, step.W
        if step.certified:
            hi = min(hi, probe + max(step.bound, 0.0))
        else:
            # the weighted problem can be badly scaled; fall back to plain margins
            use_weights = False
        hi = max(hi, lo)
        progressed = (hi - lo) <= 0.5 * width
        probe = lo if progressed else 0.5 * (lo + hi)
        log.debug("probe %.6g: lo=%.8g hi=%.8g", steps[-1]["gamma"], lo, hi)

    if hi - lo > tol:
        raise NumericalFailure(f"bisection did not converge: bracket [{lo:.6g}, {hi:.6g}]")
    gamma_star = min_sinr(W_best, problem)
    return SdrSolution(
        W_star=W_best,
        gamma_star=gamma_star,
        rank=rank_of(W_best, rank_tol),
        sdr_rate=math.log1p(gamma_star),
        diagnostics={
            "steps": steps,
            "bracket": (lo, hi),
            "bracket_width": hi - lo,
            "gamma_high": gamma_high,
            "ipm_iterations": sum(s["iterations"] for s in steps),
        },
    )
