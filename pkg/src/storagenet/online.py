"""Per-period online optimization.

Each period minimizes, over storage operations ``u`` and flows ``f``,

    sum_v  lam_v * (s_v + Gamma_v) * u_v / W_v  +  g_v(u_v, f)

subject to ramp limits and DC flow feasibility.  A single bus is solved
exactly by scanning the kinks of the convex piecewise-linear objective; a
network is solved as an LP with one epigraph variable per positive-part
cost term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostModel, CostRealization, argument_bound, evaluate_cost, term_arguments
from .exceptions import LPError
from .lp import solve_with_slacks
from .network import PowerNetwork
from .storage import StorageSpec

FLAT_TOL = 1e-12
THRESHOLD_TOL = 1e-9
NETTING_TOL = 1e-9


@dataclass(frozen=True)
class OnlineSolution:
    """Operations ``u``, flows ``f``, the optimized objective and per-bus stage costs."""

    u: np.ndarray
    f: np.ndarray
    objective: float
    stage_costs: np.ndarray | None = None


# -- single bus ------------------------------------------------------------------

def _segment_slope(model, storage, real, drift, x, inflow):
    """Slope of ``drift*u + g(u)`` at a non-kink point ``x``."""
    slope = drift
    branch = 1 if x > 0 else 0
    args = term_arguments(model, storage, real, x, inflow)
    for term, p, arg in zip(model.terms, real.p, args):
        s = term.branch_slopes(storage)[branch]
        if term.kind == "linear" or arg > 0:
            slope += p * s
    return slope


def minimize_piecewise(model: CostModel, storage: StorageSpec, real: CostRealization,
                       drift, lo, hi, inflow=0.0):
    """Minimizer of ``drift*u + g(u)`` over ``[lo, hi]`` closest to zero.

    The minimizer set of a convex piecewise-linear function is an interval
    between kinks; it is located from the signs of the segment slopes.
    """
    if hi - lo <= 0:
        return lo
    pts = {lo, hi}
    if lo < 0 < hi:
        pts.add(0.0)
    base = term_arguments(model, storage, real, 0.0, inflow)
    for term, arg0 in zip(model.terms, base):
        if term.kind == "linear":
            continue
        s_minus, s_plus = term.branch_slopes(storage)
        if s_minus != 0:
            r = -arg0 / s_minus
            if lo < r < min(hi, 0.0):
                pts.add(r)
        if s_plus != 0:
            r = -arg0 / s_plus
            if max(lo, 0.0) < r < hi:
                pts.add(r)
    xs = sorted(pts)
    slopes = [_segment_slope(model, storage, real, drift, 0.5 * (a + b), inflow)
              for a, b in zip(xs[:-1], xs[1:])]
    first = next((i for i, s in enumerate(slopes) if s >= -FLAT_TOL), None)
    if first is None:
        return hi
    last = max(i for i, s in enumerate(slopes) if s <= FLAT_TOL) if any(
        s <= FLAT_TOL for s in slopes) else None
    a = xs[first]
    b = xs[last + 1] if last is not None and last >= first else a
    return min(max(0.0, a), b)


def drift_coefficient(storage: StorageSpec, level, gamma, w):
    return storage.lam * (level + gamma) / w


def solve_single_bus(storage: StorageSpec, model: CostModel, real: CostRealization,
                     level, gamma, w, inflow=0.0) -> float:
    """Exact online operation for a single bus."""
    drift = drift_coefficient(storage, level, gamma, w)
    return minimize_piecewise(model, storage, real, drift, storage.u_min, storage.u_max, inflow)


def bus_objective(storage, model, real, drift, u, inflow=0.0):
    return drift * u + evaluate_cost(model, storage, real, u, inflow)


def threshold_violations(storage, model, real, drift, d_lo, d_hi, u, inflow=0.0,
                         tol=THRESHOLD_TOL):
    """Number of violated threshold clauses (0, 1 or 2) for one bus.

    Beyond a clause's threshold the operation must sit at the bound; exactly
    at the threshold the bound must attain the optimal value.
    """
    bad = 0
    for margin, bound in ((drift + d_lo, storage.u_min), (-(drift + d_hi), storage.u_max)):
        if margin > tol:
            if abs(u - bound) > tol:
                bad += 1
        elif margin >= -tol:
            jb = bus_objective(storage, model, real, drift, bound, inflow)
            ju = bus_objective(storage, model, real, drift, u, inflow)
            if jb > ju + tol * max(1.0, abs(ju)):
                bad += 1
    return bad


# -- network LP ----------------------------------------------------------------------

class DispatchLP:
    """Per-period network LP, assembled once per system and refilled each period.

    Columns: ``u+_v, u-_v`` per bus, ``f+_e, f-_e`` per edge, one epigraph
    variable per positive-part term, then one slack per epigraph row.  Only
    prices, offsets, the drift and the operation box change between periods.
    """

    def __init__(self, storages, models, network: PowerNetwork, delta_bounds=None):
        n, m = network.n, network.m
        self.n, self.m = n, m
        self.storages, self.models, self.network = storages, models, network
        self.delta_bounds = (np.zeros(n) if delta_bounds is None
                             else np.asarray(delta_bounds, dtype=float))
        inflow = network.inflow_matrix
        cap_in = np.abs(inflow) @ network.f_max if m else np.zeros(n)
        fo = 2 * n
        zo = fo + 2 * m
        terms = []  # (bus, term index, coefficient row, epigraph column or -1)
        n_pos = 0
        for v in range(n):
            st = storages[v]
            for l, term in enumerate(models[v].terms):
                a = np.zeros(zo)
                a[2 * v] = -term.alpha_c / st.mu_c
                a[2 * v + 1] = term.alpha_d * st.mu_d
                if m:
                    a[fo:zo:2] = term.alpha_f * inflow[v]
                    a[fo + 1:zo:2] = -term.alpha_f * inflow[v]
                col = -1
                if term.kind == "positive":
                    col = zo + n_pos
                    n_pos += 1
                terms.append((v, l, a, col))
        self.terms = terms
        self.nvar = zo + n_pos
        self.m_ub = n_pos
        K = network.k_matrix
        m_eq = K.shape[0]
        A = np.zeros((n_pos + m_eq, self.nvar + n_pos))
        for v, l, a, col in terms:
            if col >= 0:
                r = col - zo
                A[r, :zo] = a
                A[r, col] = -1.0
                A[r, self.nvar + r] = 1.0
        if m_eq:
            A[n_pos:, fo:zo:2] = K
            A[n_pos:, fo + 1:zo:2] = -K
        self.A = A
        self.lo = np.zeros(self.nvar)
        self.hi = np.zeros(self.nvar)
        self.hi[fo:zo:2] = network.f_max
        self.hi[fo + 1:zo:2] = network.f_max
        # |argument| bound without the imbalance part, plus a margin that keeps
        # the epigraph box slack
        self._z_static = np.array([
            argument_bound(models[v].terms[l], storages[v], 0.0, cap_in[v]) + 1.0
            for v, l, a, col in terms if col >= 0])
        self._z_alpha = np.array([abs(models[v].terms[l].alpha_delta)
                                  for v, l, a, col in terms if col >= 0])
        self._z_bus = np.array([v for v, l, a, col in terms if col >= 0], dtype=int)
        self.c = self.b = None
        self.const = 0.0

    def fill(self, reals, drift, u_lo, u_hi):
        """Set the period data; returns ``self`` for chaining."""
        n = self.n
        c = np.zeros(self.nvar)
        c[0:2 * n:2] = drift
        c[1:2 * n:2] = -np.asarray(drift)
        b = np.zeros(self.A.shape[0])
        const = 0.0
        for v, l, a, col in self.terms:
            real = reals[v]
            term = self.models[v].terms[l]
            offset = term.alpha_delta * real.delta + real.const[l]
            p = real.p[l]
            if col < 0:
                c[:a.size] += p * a
                const += p * offset
            else:
                c[col] = p
                b[col - a.size] = -offset
        self.c, self.b, self.const = c, b, const
        lo, hi = self.lo, self.hi
        lo[0:2 * n:2] = np.maximum(u_lo, 0.0)
        hi[0:2 * n:2] = np.maximum(u_hi, 0.0)
        lo[1:2 * n:2] = np.maximum(-u_hi, 0.0)
        hi[1:2 * n:2] = np.maximum(-u_lo, 0.0)
        if self._z_bus.size:
            deltas = np.array([abs(r.delta) for r in reals])[self._z_bus]
            hi[2 * n + 2 * self.m:] = self._z_static + self._z_alpha * np.maximum(
                self.delta_bounds[self._z_bus], deltas)
        return self

    def split(self, x):
        n, m = self.n, self.m
        u = x[0:2 * n:2] - x[1:2 * n:2]
        f = x[2 * n:2 * n + 2 * m:2] - x[2 * n + 1:2 * n + 2 * m:2]
        return u, f

    def solve(self, c=None, extra_row=None):
        """Solve with the filled data; ``extra_row=(a, rhs)`` adds ``a @ x <= rhs``."""
        c = self.c if c is None else c
        A, b, m_ub = self.A, self.b, self.m_ub
        if extra_row is not None:
            a, rhs = extra_row
            rows, cols = A.shape
            A2 = np.zeros((rows + 1, cols + 1))
            A2[:m_ub, :self.nvar] = A[:m_ub, :self.nvar]
            A2[:m_ub, self.nvar:self.nvar + m_ub] = A[:m_ub, self.nvar:]
            A2[m_ub, :self.nvar] = a
            A2[m_ub, self.nvar + m_ub] = 1.0
            A2[m_ub + 1:, :self.nvar] = A[m_ub:, :self.nvar]
            A, b, m_ub = A2, np.concatenate([b[:m_ub], [rhs], b[m_ub:]]), m_ub + 1
        return solve_with_slacks(c, A, b, self.lo, self.hi, m_ub)


def stage_costs(storages, models, network, reals, u, f):
    inflow = network.inflow_matrix @ f if network.m else np.zeros(network.n)
    return np.array([evaluate_cost(models[v], storages[v], reals[v], u[v], inflow[v])
                     for v in range(network.n)])


def network_objective(storages, models, network, reals, drift, u, f):
    return float(np.dot(drift, u)
                 + stage_costs(storages, models, network, reals, u, f).sum())


def solve_dispatch(storages, models, network, reals, drift, u_lo=None, u_hi=None,
                   delta_bounds=None, prefer_small_u=False, lp=None) -> OnlineSolution:
    """Minimize ``sum_v drift_v*u_v + g_v`` over boxed operations and feasible flows.

    With ``prefer_small_u`` a second LP picks, among optimal dispatches, one
    with the least total ``|u|``.  Pass a prebuilt :class:`DispatchLP` as
    ``lp`` to skip assembling the constraint matrix.
    """
    n = network.n
    u_lo = np.array([s.u_min for s in storages]) if u_lo is None else np.asarray(u_lo, float)
    u_hi = np.array([s.u_max for s in storages]) if u_hi is None else np.asarray(u_hi, float)
    prob = lp if lp is not None else DispatchLP(storages, models, network, delta_bounds)
    prob.fill(reals, np.asarray(drift, float), u_lo, u_hi)
    res = prob.solve()
    x = res.x
    lp_obj = res.objective + prob.const
    tol = NETTING_TOL * max(1.0, abs(lp_obj))
    if prefer_small_u:
        tie_c = np.zeros_like(prob.c)
        tie_c[:2 * n] = 1.0
        x = prob.solve(tie_c, (prob.c, res.objective + tol)).x
        tol *= 2
    u, f = prob.split(x)
    u = np.clip(u, u_lo, u_hi)
    costs = stage_costs(storages, models, network, reals, u, f)
    obj = float(np.dot(drift, u) + costs.sum())
    if abs(obj - lp_obj) > tol:
        raise LPError(f"netting repair changed the objective: LP {lp_obj!r} vs {obj!r}")
    return OnlineSolution(u=u, f=f, objective=obj, stage_costs=costs)


def solve_network(storages, models, network: PowerNetwork, reals, levels, gamma, w,
                  delta_bounds=None) -> OnlineSolution:
    """Online Lyapunov step for a network of storages."""
    drift = [drift_coefficient(s, lv, g, wv) for s, lv, g, wv in zip(storages, levels, gamma, w)]
    return solve_dispatch(storages, models, network, reals, drift, delta_bounds=delta_bounds)
