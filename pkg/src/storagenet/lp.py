"""Deterministic bounded-variable primal simplex for small dense LPs.

Solves ``min c^T x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and
finite box bounds on every variable.  Pricing is by largest reduced cost with
a switch to Bland's rule after degenerate pivots, and ratio ties leave by
lowest column index, so identical inputs always follow the identical pivot
sequence.  The tableau kernel is compiled with numba; the online loop solves
one small LP per period and interpreter overhead would otherwise dominate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import LPInfeasible, LPIterationLimit, LPUnbounded

PIVOT_TOL = 1e-11
OPT_TOL = 1e-9
FEAS_TOL = 1e-9

_OK, _UNBOUNDED, _LIMIT, _INFEASIBLE = 0, 1, 2, 3


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float
    status: str
    iterations: int


@numba.njit(cache=True)
def _refactor(A, b, basis, is_basic, x):
    B = A[:, basis]
    T = np.linalg.solve(B, A)
    rhs = b.copy()
    for j in range(A.shape[1]):
        if not is_basic[j]:
            rhs -= A[:, j] * x[j]
    xb = np.linalg.solve(B, rhs)
    for i in range(basis.size):
        x[basis[i]] = xb[i]
    return T


@numba.njit(cache=True)
def _reduced_costs(cost, basis, T):
    d = cost.copy()
    for i in range(basis.size):
        cb = cost[basis[i]]
        if cb != 0.0:
            d -= cb * T[i]
    return d


@numba.njit(cache=True)
def _pivot(T, x, lo, hi, basis, is_basic, at_upper, j):
    """Move column ``j`` off its bound; return ``(step, leaving row or -1, status)``."""
    m = basis.size
    direction = -1.0 if at_upper[j] else 1.0
    theta = np.inf
    leave = -1
    for i in range(m):
        ch = -direction * T[i, j]
        k = basis[i]
        if ch < -PIVOT_TOL:
            r = (x[k] - lo[k]) / -ch
        elif ch > PIVOT_TOL:
            r = (hi[k] - x[k]) / ch
        else:
            continue
        if r < 0.0:
            r = 0.0
        if leave < 0 or r < theta - PIVOT_TOL * max(1.0, theta):
            theta, leave = r, i
        elif r <= theta + PIVOT_TOL * max(1.0, theta) and k < basis[leave]:
            theta, leave = min(theta, r), i
    flip = hi[j] - lo[j]
    if flip <= theta:
        for i in range(m):
            x[basis[i]] -= direction * T[i, j] * flip
        at_upper[j] = not at_upper[j]
        x[j] = hi[j] if at_upper[j] else lo[j]
        return flip, -1, _OK
    if leave < 0:
        return 0.0, -1, _UNBOUNDED
    ch_l = -direction * T[leave, j]
    k = basis[leave]
    step = (x[k] - lo[k]) / -ch_l if ch_l < 0 else (hi[k] - x[k]) / ch_l
    if step < 0.0:
        step = 0.0
    for i in range(m):
        x[basis[i]] -= direction * T[i, j] * step
    x[j] += direction * step
    to_upper = ch_l > 0
    x[k] = hi[k] if to_upper else lo[k]
    at_upper[k] = to_upper
    is_basic[k] = False
    is_basic[j] = True
    at_upper[j] = False
    basis[leave] = j
    T[leave] /= T[leave, j]
    prow = T[leave].copy()
    for i in range(m):
        if i != leave:
            f = T[i, j]
            if f != 0.0:
                T[i] -= f * prow
    return step, leave, _OK


@numba.njit(cache=True)
def _run(A, b, T, x, lo, hi, basis, is_basic, at_upper, cost, limit, iterations):
    """Simplex iterations until optimal; returns ``(T, iterations, status)``.

    After a degenerate pivot the lowest eligible index enters (Bland's rule)
    until a step makes progress, which rules out cycling.  Optimality is only
    declared after refactoring the basis and re-pricing from scratch.
    """
    n = A.shape[1]
    frozen = hi <= lo
    d = _reduced_costs(cost, basis, T)
    refactored = False
    bland = False
    while True:
        best = OPT_TOL
        j = -1
        for k in range(n):
            if is_basic[k] or frozen[k]:
                continue
            s = d[k] if at_upper[k] else -d[k]
            if s > best:
                best, j = s, k
                if bland:
                    break
        if j < 0:
            if refactored:
                return T, iterations, _OK
            T = _refactor(A, b, basis, is_basic, x)
            d = _reduced_costs(cost, basis, T)
            refactored = True
            continue
        refactored = False
        if iterations >= limit:
            return T, iterations, _LIMIT
        iterations += 1
        step, leave, status = _pivot(T, x, lo, hi, basis, is_basic, at_upper, j)
        if status != _OK:
            return T, iterations, status
        bland = step <= 0.0
        if leave >= 0:
            d = d - d[j] * T[leave]


@numba.njit(cache=True)
def _solve_standard(c, A, b, lo, hi, limit):
    """Crash basis, phase 1 on artificials if needed, then phase 2.

    ``A`` already holds the slack columns.  Returns ``(x, iterations, status)``.
    """
    m, ncol = A.shape
    x = lo.copy()
    resid = b - A @ x
    basis = np.full(m, -1, dtype=np.int64)
    used = np.zeros(ncol, dtype=np.bool_)
    nnz = np.zeros(ncol, dtype=np.int64)
    for j in range(ncol):
        for i in range(m):
            if A[i, j] != 0.0:
                nnz[j] += 1
    # crash: a single-row column becomes basic when its implied value fits its box
    for i in range(m):
        for j in range(ncol):
            if nnz[j] != 1 or A[i, j] == 0.0 or used[j]:
                continue
            val = x[j] + resid[i] / A[i, j]
            if lo[j] - FEAS_TOL <= val <= hi[j] + FEAS_TOL:
                x[j] = min(max(val, lo[j]), hi[j])
                resid[i] = 0.0
                basis[i] = j
                used[j] = True
                break
    n_art = 0
    for i in range(m):
        if basis[i] < 0:
            n_art += 1
    ntot = ncol + n_art
    A_full = np.zeros((m, ntot))
    A_full[:, :ncol] = A
    lo_full = np.zeros(ntot)
    hi_full = np.zeros(ntot)
    lo_full[:ncol] = lo
    hi_full[:ncol] = hi
    x_full = np.zeros(ntot)
    x_full[:ncol] = x
    k = ncol
    for i in range(m):
        if basis[i] < 0:
            A_full[i, k] = 1.0 if resid[i] >= 0 else -1.0
            x_full[k] = abs(resid[i])
            hi_full[k] = abs(resid[i])
            basis[i] = k
            k += 1
    is_basic = np.zeros(ntot, dtype=np.bool_)
    for i in range(m):
        is_basic[basis[i]] = True
    at_upper = np.zeros(ntot, dtype=np.bool_)
    T = np.empty((m, ntot))
    for i in range(m):
        T[i] = A_full[i] / A_full[i, basis[i]]
    iterations = 0

    scale = 1.0
    for i in range(m):
        scale = max(scale, abs(b[i]))
    if n_art:
        if x_full[ncol:].sum() > FEAS_TOL * scale:
            phase1 = np.zeros(ntot)
            phase1[ncol:] = 1.0
            T, iterations, status = _run(A_full, b, T, x_full, lo_full, hi_full, basis,
                                         is_basic, at_upper, phase1, limit, iterations)
            if status != _OK:
                return x_full[:ncol], iterations, status
            if x_full[ncol:].sum() > FEAS_TOL * scale:
                return x_full[:ncol], iterations, _INFEASIBLE
        for k in range(ncol, ntot):
            hi_full[k] = 0.0
            at_upper[k] = False
            if not is_basic[k]:
                x_full[k] = 0.0

    cost = np.zeros(ntot)
    cost[:c.size] = c
    T, iterations, status = _run(A_full, b, T, x_full, lo_full, hi_full, basis,
                                 is_basic, at_upper, cost, limit, iterations)
    return x_full[:ncol], iterations, status


def _as_2d(A, n):
    if A is None:
        return np.zeros((0, n))
    return np.asarray(A, dtype=float).reshape(-1, n)


def lp_solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None) -> LPResult:
    """Solve a bounded LP; ``bounds`` is a pair of arrays ``(lower, upper)``.

    Raises :class:`LPInfeasible`, :class:`LPUnbounded` or
    :class:`LPIterationLimit` (limit ``50 * (rows + cols)``).
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    A_ub, A_eq = _as_2d(A_ub, n), _as_2d(A_eq, n)
    b_ub = np.asarray(b_ub if b_ub is not None else [], dtype=float).reshape(-1)
    b_eq = np.asarray(b_eq if b_eq is not None else [], dtype=float).reshape(-1)
    if bounds is None:
        raise LPUnbounded("every variable needs finite bounds")
    lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)).copy()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise LPUnbounded("every variable needs finite bounds")
    if np.any(lo > hi + FEAS_TOL):
        raise LPInfeasible("a variable has lower bound above its upper bound")
    hi = np.maximum(hi, lo)

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    A = np.zeros((m_ub + m_eq, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    return solve_with_slacks(c, A, np.concatenate([b_ub, b_eq]), lo, hi, m_ub)


def solve_with_slacks(c, A, b, lo, hi, m_ub) -> LPResult:
    """Lower-level entry: ``A`` already carries one slack column per inequality row.

    The first ``m_ub`` rows are inequalities whose slacks are the last
    ``m_ub`` columns; ``lo``/``hi`` bound only the structural columns.  Slack
    upper bounds are derived from the row activity range over the box.
    """
    n = c.size
    m = A.shape[0]
    limit = 50 * (m + n)
    if m == 0:
        xs = np.where(c < 0, hi, lo)
        return LPResult(x=xs, objective=float(c @ xs), status="optimal", iterations=0)
    rows = A[:m_ub, :n]
    row_min = np.minimum(rows * lo, rows * hi).sum(axis=1)
    lo_full = np.concatenate([lo, np.zeros(m_ub)])
    hi_full = np.concatenate([hi, np.maximum(b[:m_ub] - row_min, 0.0)])
    x, iterations, status = _solve_standard(c, A, b, lo_full, hi_full, limit)
    if status == _INFEASIBLE:
        raise LPInfeasible("phase 1 ended with positive infeasibility")
    if status == _UNBOUNDED:
        raise LPUnbounded("objective unbounded along an improving ray")
    if status == _LIMIT:
        raise LPIterationLimit(f"no convergence within {limit} iterations")
    xs = np.clip(x[:n], lo, hi)
    return LPResult(x=xs, objective=float(c @ xs), status="optimal", iterations=iterations)
