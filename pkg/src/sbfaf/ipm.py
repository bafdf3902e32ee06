"""Dense primal-dual interior-point method for small SDPs with an LP block.

Solves::

    min  <C, X> + c^T x
    s.t. <A_i, X> + (B x)_i = b_i,   i = 1..m
         X PSD (real symmetric or complex Hermitian),  x >= 0

with an infeasible-start path-following scheme: Nesterov-Todd scaling,
Mehrotra predictor-corrector, Cholesky-factored Schur complement.  The
same code runs on real symmetric data (e.g. an embedded complex problem)
and on complex Hermitian data.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla


class IpmStatus(enum.Enum):
    OPTIMAL = "optimal"
    INACCURATE = "inaccurate"
    FAILED = "failed"


@dataclass
class ConicProblem:
    C: np.ndarray  # (N, N)
    c: np.ndarray  # (p,)
    A: np.ndarray  # (m, N, N)
    B: np.ndarray  # (m, p)
    b: np.ndarray  # (m,)


@dataclass
class IpmResult:
    status: IpmStatus
    X: np.ndarray
    x: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    z: np.ndarray
    pobj: float
    dobj: float
    iterations: int
    rel_gap: float
    pinf: float
    dinf: float


def embed_hermitian(X: np.ndarray) -> np.ndarray:
    """Complex n x n  ->  real symmetric 2n x 2n ``[[Re, -Im], [Im, Re]]``."""
    return np.block([[X.real, -X.imag], [X.imag, X.real]])


def recover_hermitian(Xr: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed_hermitian`, averaging the redundant blocks."""
    n = Xr.shape[0] // 2
    re = 0.5 * (Xr[:n, :n] + Xr[n:, n:])
    im = 0.5 * (Xr[n:, :n] - Xr[:n, n:])
    return re + 1j * im


def _herm(X):
    return 0.5 * (X + X.conj().T)


def _ip(A, B):
    return float(np.real(np.vdot(A, B)))


def _max_step(V_isqrt, D, tau):
    """Largest step (capped at 1) keeping ``V + a D`` PSD, damped by ``tau``."""
    lam = np.linalg.eigvalsh(_herm(V_isqrt[:, None] * D * V_isqrt[None, :]))[0]
    return 1.0 if lam >= -tau else min(1.0, tau / -lam)


def _lp_step(x, dx, tau):
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, tau * float(np.min(-x[neg] / dx[neg])))


def _low_rank_factors(A):
    """Signed eigen-factors ``A_i = U_i diag(s_i) U_i^H`` when that saves work.

    Rows built from rank-one signal terms and Kronecker-structured
    interference have rank far below ``N``; congruence by the scaling matrix
    then costs ``N^2 r`` instead of ``N^3`` per row.
    """
    m, N = A.shape[0], A.shape[1]
    lam, U = np.linalg.eigh(A)
    top = np.max(np.abs(lam), axis=1, keepdims=True)
    keep = np.abs(lam) > 1e-13 * np.maximum(top, 1e-300)
    if keep.sum() > 0.5 * m * N:
        return None
    return [(U[i][:, keep[i]], lam[i][keep[i]]) for i in range(m)]


def _congruence(A, GH, factors):
    if factors is None:
        return np.matmul(np.matmul(GH[None], A), GH.conj().T[None])
    allU = np.concatenate([U for U, _ in factors], axis=1)
    V = GH @ allU
    out = np.empty_like(A, dtype=np.result_type(A, GH))
    col = 0
    for i, (U, s) in enumerate(factors):
        Vi = V[:, col : col + U.shape[1]]
        col += U.shape[1]
        out[i] = (Vi * s) @ Vi.conj().T
    return out


def solve_conic(
    prob: ConicProblem,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
    tau: float = 0.98,
) -> IpmResult:
    C, c, A, B, b = prob.C, prob.c, prob.A, prob.B, prob.b
    m, N = A.shape[0], A.shape[1]
    p = c.shape[0]
    eye = np.eye(N, dtype=A.dtype)

    # row scaling keeps the Schur complement well conditioned
    norms = np.sqrt(np.sum(np.abs(A.reshape(m, -1)) ** 2, axis=1) + np.sum(B**2, axis=1))
    scale = 1.0 / np.maximum(norms, 1e-300)
    A = A * scale[:, None, None]
    B = B * scale[:, None]
    b = b * scale
    Aflat = A.reshape(m, -1)
    Aconj = Aflat.conj()
    cplx = np.iscomplexobj(A)
    factors = _low_rank_factors(A)

    normA = np.sqrt(np.sum(np.abs(Aflat) ** 2, axis=1))
    xi = max(10.0, np.sqrt(N), N * float(np.max((1 + np.abs(b)) / (1 + normA))))
    eta = max(10.0, np.sqrt(N), float(normA.max()), float(np.linalg.norm(C)))
    X = xi * eye
    Z = eta * eye
    x = np.full(p, max(10.0, float(np.max(1 + np.abs(b)))))
    z = np.full(p, max(10.0, float(np.max(np.abs(c), initial=0.0)) + 1.0))
    y = np.zeros(m)

    nb = 1.0 + np.linalg.norm(b)
    nc = 1.0 + np.linalg.norm(C) + np.linalg.norm(c)
    best = None
    status = IpmStatus.FAILED
    it = 0
    for it in range(max_iter + 1):
        AX = np.real(Aconj @ X.ravel())
        rp = b - AX - B @ x
        Rd = _herm(C - Z - np.tensordot(y, A, axes=1))
        rd = c - z - B.T @ y
        pobj = _ip(C, X) + float(c @ x)
        dobj = float(b @ y)
        gap = _ip(X, Z) + float(x @ z)
        rel_gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(rp)) / nb
        dinf = (float(np.linalg.norm(Rd)) + float(np.linalg.norm(rd))) / nc
        err = max(rel_gap, pinf, dinf, gap / (1.0 + abs(pobj) + abs(dobj)))
        if best is None or err < best[0]:
            best = (err, X, x, y, Z, z, pobj, dobj, it, rel_gap, pinf, dinf)
        if err <= tol:
            status = IpmStatus.OPTIMAL
            break
        if it == max_iter:
            break
        mu = gap / (N + p)

        try:
            Rx = np.linalg.cholesky(X)
            S = _herm(Rx.conj().T @ Z @ Rx)
            d, Q = np.linalg.eigh(S)
            if d[0] <= 0:
                break
            v = np.sqrt(d)
            G = (Rx @ Q) * (v**-0.5)[None, :]
            Ginv = (v**0.5)[:, None] * sla.solve_triangular(Rx, Q, lower=True, trans="C").conj().T
        except np.linalg.LinAlgError:
            break

        GH = G.conj().T
        At = _congruence(A, GH, factors)
        Atf = At.reshape(m, -1)
        Atr = np.concatenate([Atf.real, Atf.imag], axis=1) if cplx else Atf
        dscale = x / z
        schur = Atr @ Atr.T + (B * dscale[None, :]) @ B.T
        schur = 0.5 * (schur + schur.T)
        try:
            cho = sla.cho_factor(schur + 1e-14 * np.trace(schur) / m * np.eye(m))
        except np.linalg.LinAlgError:
            break
        Rdt = GH @ Rd @ G
        Vv = v
        V_isqrt = Vv**-0.5

        def direction(Y, rl):
            D = (Y - Rdt).ravel()
            Dr = np.concatenate([D.real, D.imag]) if cplx else D
            rhs = rp - Atr @ Dr - B @ ((rl - x * rd) / z)
            dy = sla.cho_solve(cho, rhs)
            dZt = Rdt - np.tensordot(dy, At, axes=1)
            dXt = Y - dZt
            dz = rd - B.T @ dy
            dx = (rl - x * dz) / z
            return _herm(dXt), _herm(dZt), dx, dy, dz

        # predictor
        Yp = -np.diag(Vv).astype(A.dtype)
        dXt, dZt, dx, dy, dz = direction(Yp, -x * z)
        ap = min(_max_step(V_isqrt, dXt, 1.0), _lp_step(x, dx, 1.0))
        ad = min(_max_step(V_isqrt, dZt, 1.0), _lp_step(z, dz, 1.0))
        Vd = np.diag(Vv)
        mu_aff = (
            _ip(Vd + ap * dXt, Vd + ad * dZt) + float((x + ap * dx) @ (z + ad * dz))
        ) / (N + p)
        sigma = min(1.0, (mu_aff / mu) ** 3)

        # corrector
        H = sigma * mu * eye - np.diag(Vv**2) - _herm(dXt @ dZt)
        Yc = 2.0 * H / (Vv[:, None] + Vv[None, :])
        rl = sigma * mu - x * z - dx * dz
        dXt, dZt, dx, dy, dz = direction(Yc, rl)
        ap = min(_max_step(V_isqrt, dXt, tau), _lp_step(x, dx, tau))
        ad = min(_max_step(V_isqrt, dZt, tau), _lp_step(z, dz, tau))

        X = _herm(X + ap * (G @ dXt @ GH))
        x = x + ap * dx
        Z = _herm(Z + ad * (Ginv.conj().T @ dZt @ Ginv))
        y = y + ad * dy
        z = z + ad * dz

    err, X, x, y, Z, z, pobj, dobj, it_best, rel_gap, pinf, dinf = best
    if status is not IpmStatus.OPTIMAL:
        status = IpmStatus.INACCURATE if err <= 1e-5 else IpmStatus.FAILED
    return IpmResult(
        status=status,
        X=X,
        x=x,
        y=y * scale,
        Z=Z,
        z=z,
        pobj=pobj,
        dobj=dobj,
        iterations=it,
        rel_gap=rel_gap,
        pinf=pinf,
        dinf=dinf,
    )
