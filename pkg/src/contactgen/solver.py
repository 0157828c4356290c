"""Dense convex-QP and barrier-Newton core shared by both steppers.

solve_qp minimizes 0.5 x'Hx + c'x subject to A x >= b for positive
definite H.  The implementation works on the dual bound-constrained QP
with a Lawson-Hanson style active-set loop, which terminates finitely,
keeps inactive multipliers exactly zero, and needs no feasible primal
starting point.  KKT residuals are verified before returning.

minimize_log_barrier handles the smoothed stepper's objective
0.5 x'Hx + c'x - (1/kappa) sum log(r_j + A_j x) with damped Newton and a
backtracking line search that never leaves the barrier domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QpError(RuntimeError):
    """QP solve failed to reach the requested KKT residual."""


class QpInfeasibleError(QpError):
    """No point satisfies the inequality constraints."""


@dataclass
class NewtonDiagnostics:
    iterations: int
    grad_norm: float
    x_last: np.ndarray


class NewtonError(RuntimeError):
    def __init__(self, message: str, diagnostics: NewtonDiagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


def _solve_psd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(mat, rhs, rcond=None)[0]


def _nnqp(m_mat: np.ndarray, d: np.ndarray, max_iter: int) -> np.ndarray:
    """Minimize 0.5 l'Ml - d'l over l >= 0 for PSD M (dual of solve_qp)."""
    m = d.shape[0]
    lam = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    tol = 1e-11 * max(1.0, float(np.abs(d).max(initial=0.0)))
    for _ in range(max_iter):
        w = d - m_mat @ lam
        w_masked = np.where(passive, -np.inf, w)
        j = int(np.argmax(w_masked))
        if w_masked[j] <= tol:
            return lam
        passive[j] = True
        for _ in range(max_iter):
            idx = np.flatnonzero(passive)
            if idx.size == 0:
                break
            z = _solve_psd(m_mat[np.ix_(idx, idx)], d[idx])
            if not np.all(np.isfinite(z)):
                raise QpError("singular dual subproblem")
            if np.all(z > 0.0):
                lam[:] = 0.0
                lam[idx] = z
                break
            cur = lam[idx]
            neg = z <= 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(neg, cur / (cur - z), np.inf)
            alpha = min(max(float(np.min(steps)), 0.0), 1.0)
            cur = cur + alpha * (z - cur)
            drop_mask = cur <= 1e-14
            if not drop_mask.any():
                drop_mask[int(np.argmin(steps))] = True
            lam[idx] = cur
            lam[idx[drop_mask]] = 0.0
            passive[idx[drop_mask]] = False
        if np.abs(lam).max(initial=0.0) > 1e12:
            raise QpInfeasibleError("dual iterates diverge; constraints look infeasible")
    raise QpInfeasibleError("active-set loop exhausted; constraints look infeasible")


def solve_qp(h_mat: np.ndarray, c: np.ndarray,
             a_ineq: np.ndarray | None = None, b_ineq: np.ndarray | None = None,
             *, kkt_tol: float = 1e-8, max_iter: int = 500) -> np.ndarray:
    """Minimize 0.5 x'Hx + c'x subject to a_ineq x >= b_ineq.

    H must be symmetric positive definite.  Raises QpInfeasibleError when
    the constraints admit no point, QpError when the KKT residual cannot
    be driven below kkt_tol.
    """
    h_mat = np.asarray(h_mat, dtype=float)
    c = np.asarray(c, dtype=float)
    x_free = -_solve_psd(h_mat, c)
    if a_ineq is None or len(a_ineq) == 0:
        return x_free
    a_ineq = np.asarray(a_ineq, dtype=float)
    b_ineq = np.asarray(b_ineq, dtype=float)
    if np.all(a_ineq @ x_free - b_ineq >= 0.0):
        return x_free
    h_inv_at = _solve_psd(h_mat, a_ineq.T)
    m_dual = a_ineq @ h_inv_at
    m_dual = 0.5 * (m_dual + m_dual.T)
    d = b_ineq - a_ineq @ x_free
    lam = _nnqp(m_dual, d, max_iter)
    x = x_free + h_inv_at @ lam

    scale = max(1.0, float(np.abs(c).max(initial=0.0)), float(np.abs(b_ineq).max(initial=0.0)))
    slack = a_ineq @ x - b_ineq
    r_stat = float(np.abs(h_mat @ x + c - a_ineq.T @ lam).max(initial=0.0))
    r_pri = float(np.maximum(0.0, -slack).max(initial=0.0))
    r_comp = float(np.abs(lam * slack).max(initial=0.0))
    if max(r_stat, r_pri, r_comp) > kkt_tol * scale:
        raise QpError(
            f"KKT residual too large: stat={r_stat:.2e} pri={r_pri:.2e} comp={r_comp:.2e}")
    return x


def minimize_log_barrier(h_mat: np.ndarray, c: np.ndarray,
                         rows: np.ndarray, offsets: np.ndarray, kappa: float,
                         x0: np.ndarray | None = None,
                         *, grad_tol: float = 1e-9, max_iter: int = 200) -> np.ndarray:
    """Minimize 0.5 x'Hx + c'x - (1/kappa) sum_j log(offsets_j + rows_j x).

    Newton iterations with backtracking start at x0 (default 0), which must
    be strictly inside the barrier domain.  Terminates when either the
    gradient falls below grad_tol or the Newton decrement drops to the
    float64 noise floor; near the optimum the objective differences are
    smaller than what the line search can resolve, so the decrement is the
    reliable signal there (decrement d bounds the error as f - f* <= d/2).
    """
    n = c.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    inv_k = 1.0 / kappa

    def slacks(v):
        return offsets + rows @ v

    def value(v):
        s = slacks(v)
        if np.any(s <= 0.0):
            return np.inf
        return float(0.5 * v @ (h_mat @ v) + c @ v - inv_k * np.log(s).sum())

    s = slacks(x)
    if np.any(s <= 0.0):
        raise NewtonError("starting point outside barrier domain",
                          NewtonDiagnostics(0, np.inf, x))
    f = value(x)
    for it in range(max_iter):
        inv_s = 1.0 / s
        grad = h_mat @ x + c - inv_k * (rows.T @ inv_s)
        gnorm = float(np.abs(grad).max(initial=0.0))
        if gnorm <= grad_tol:
            return x
        hess = h_mat + inv_k * (rows.T * (inv_s * inv_s)) @ rows
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.solve(hess + 1e-12 * np.eye(n), grad)
        descent = float(grad @ step)
        if descent >= 0.0:
            raise NewtonError("Newton direction is not a descent direction",
                              NewtonDiagnostics(it, gnorm, x))
        if -descent <= 2e-16 * max(1.0, abs(f)):
            return x
        row_step = rows @ step
        shrinking = row_step < 0.0
        t = 1.0
        if np.any(shrinking):
            t_max = float(np.min(s[shrinking] / -row_step[shrinking]))
            t = min(1.0, 0.999 * t_max)
        while t > 1e-14:
            x_new = x + t * step
            f_new = value(x_new)
            if f_new <= f + 1e-4 * t * descent:
                break
            t *= 0.5
        else:
            if -descent <= 1e-14 * max(1.0, abs(f)):
                return x
            raise NewtonError("line search failed",
                              NewtonDiagnostics(it, gnorm, x))
        x = x + t * step
        s = slacks(x)
        f = value(x)
    grad = h_mat @ x + c - inv_k * (rows.T @ (1.0 / s))
    raise NewtonError("Newton did not converge",
                      NewtonDiagnostics(max_iter, float(np.abs(grad).max()), x))
