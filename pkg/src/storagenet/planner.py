"""Controller parameter selection: feasible (Gamma, W) region and bound minimization.

The bound-minimization program is a semidefinite program whose PSD blocks
are all 2x2, so by Schur complements it is equivalent to minimizing

    M(Gamma) / W,   M = M_u + lam*(1-lam)*M_s,

over the convex region ``ks_min(W) <= Gamma <= ks_max(W), 0 < W <= W_max``.
Each piece ``(affine)^2 / W`` is jointly convex for ``W > 0``, so the value
``F(W) = min_Gamma M(Gamma)/W`` is convex in ``W`` and a bracketed scalar
search over ``W`` with an exact inner minimization over ``Gamma`` is exact
up to the search tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost import CostModel, check_convexity, subderivative_bounds
from .exceptions import InfeasibleParametersError
from .storage import StorageSpec, validate_storage

#: cap on W relative to the storage span when the cost slope is constant
W_CAP_FACTOR = 1e6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _pos(x):
    return x if x > 0 else 0.0


def gamma_w_region(storage: StorageSpec, d_lo, d_hi, w):
    """Return ``(ks_min, ks_max, w_max)`` at weight ``w``.

    ``w_max`` is ``inf`` when ``d_lo == d_hi``.
    """
    if d_lo > d_hi:
        raise ValueError(f"d_lo={d_lo} exceeds d_hi={d_hi}")
    lam = storage.lam
    up = _pos(storage.u_max - (1 - lam) * storage.s_max)
    down = _pos((1 - lam) * storage.s_min - storage.u_min)
    ks_min = (-w * d_lo + up) / lam - storage.s_max
    ks_max = (-w * d_hi - down) / lam - storage.s_min
    span = lam * (storage.s_max - storage.s_min) - down - up
    w_max = math.inf if d_hi == d_lo else span / (d_hi - d_lo)
    return ks_min, ks_max, w_max


def bound_components(storage: StorageSpec, gamma):
    """``(M_u, M_s)`` at shift ``gamma``; ``M_s`` without the ``lam(1-lam)`` factor."""
    lam = storage.lam
    m_u = 0.5 * max((storage.u_min + (1 - lam) * gamma) ** 2,
                    (storage.u_max + (1 - lam) * gamma) ** 2)
    m_s = max((storage.s_min + gamma) ** 2, (storage.s_max + gamma) ** 2)
    return m_u, m_s


def drift_constant(storage: StorageSpec, gamma):
    m_u, m_s = bound_components(storage, gamma)
    return m_u + storage.lam * (1 - storage.lam) * m_s


def suboptimality_bound(storage: StorageSpec, gamma, w):
    """i.i.d. sub-optimality bound ``M(gamma) / w``."""
    if not w > 0:
        raise ValueError(f"weight must be positive, got {w}")
    return drift_constant(storage, gamma) / w


def markov_bound(storage: StorageSpec, gamma, w, moments):
    """Sub-optimality bound under a Markov disturbance.

    ``moments`` is ``(E[dT], E[dT^2])`` of the return time of the chain to
    its reference state.
    """
    mean, second = moments
    if not w > 0:
        raise ValueError(f"weight must be positive, got {w}")
    if mean < 1 or second < mean * mean * (1 - 1e-12):
        raise ValueError(f"invalid return-time moments {moments}")
    m_u, m_s = bound_components(storage, gamma)
    lam = storage.lam
    return (lam * (1 - lam) * m_s + m_u * (2 * second + mean) / mean) / w


def minimize_drift_constant(storage: StorageSpec, lo, hi):
    """Exact minimizer of the convex piecewise-quadratic ``M`` over ``[lo, hi]``.

    ``M(G) = 0.5*((1-lam)|G - a| + r_u)^2 + lam(1-lam)(|G - b| + r_s)^2``
    with breakpoints ``a`` and ``b``; every piece is a quadratic whose
    stationary point is a candidate along with the breakpoints and ends.
    """
    lam = storage.lam
    if lo > hi:
        raise InfeasibleParametersError(f"empty shift interval [{lo}, {hi}]")
    if lam == 1.0:
        return lo, drift_constant(storage, lo)
    k = 1 - lam
    c_u = 0.5 * (storage.u_min + storage.u_max)
    r_u = 0.5 * (storage.u_max - storage.u_min)
    c_s = 0.5 * (storage.s_min + storage.s_max)
    r_s = 0.5 * (storage.s_max - storage.s_min)
    a, b = -c_u / k, -c_s
    cands = {lo, hi}
    for brk in (a, b):
        if lo < brk < hi:
            cands.add(brk)
    # on a piece, |G-a| = sa*(G-a), |G-b| = sb*(G-b); derivative:
    # k*sa*(k*sa*(G-a) + r_u) + 2*lam*k*sb*(sb*(G-b) + r_s) = 0
    for sa in (-1.0, 1.0):
        for sb in (-1.0, 1.0):
            denom = k * k + 2 * lam * k
            num = k * k * a - k * sa * r_u + 2 * lam * k * b - 2 * lam * k * sb * r_s
            g = num / denom
            if lo <= g <= hi and sa * (g - a) >= 0 and sb * (g - b) >= 0:
                cands.add(g)
    best = min(sorted(cands), key=lambda g: drift_constant(storage, g))
    return best, drift_constant(storage, best)


@dataclass(frozen=True)
class BusPlan:
    gamma: float
    w: float
    d_lo: float
    d_hi: float
    ks_min: float
    ks_max: float
    w_max: float
    m_u: float
    m_s_weighted: float
    w_capped: bool

    @property
    def bound(self):
        return (self.m_u + self.m_s_weighted) / self.w


@dataclass(frozen=True)
class ControllerParams:
    """Per-bus shifts and weights plus the certified total bound."""

    buses: tuple
    certified_bound: float
    shared_weight: bool = False

    @property
    def gamma(self):
        return np.array([b.gamma for b in self.buses])

    @property
    def w(self):
        return np.array([b.w for b in self.buses])


def _w_limit(storage, d_lo, d_hi):
    _, _, w_max = gamma_w_region(storage, d_lo, d_hi, 0.0)
    capped = math.isinf(w_max)
    if capped:
        w_max = W_CAP_FACTOR * (storage.s_max - storage.s_min)
    if not w_max > 0:
        raise InfeasibleParametersError(
            f"W_max = {w_max} <= 0: the storage cannot absorb the dissipation and ramp "
            f"margins for cost slopes [{d_lo}, {d_hi}]")
    return w_max, capped


def _inner(storage, d_lo, d_hi, w):
    ks_min, ks_max, _ = gamma_w_region(storage, d_lo, d_hi, w)
    # rounding can invert a singleton interval at W_max
    if ks_min > ks_max and ks_min - ks_max <= 1e-12 * (1 + abs(ks_min)):
        ks_min = ks_max = 0.5 * (ks_min + ks_max)
    gamma, m = minimize_drift_constant(storage, ks_min, ks_max)
    return gamma, m / w


def _golden_min(fun, lo, hi, grid=64, iters=200, xtol=1e-14):
    """Minimize a convex scalar function on ``[lo, hi]``: grid bracket, then golden section."""
    xs = np.linspace(lo, hi, grid + 1)[1:]
    vals = [fun(x) for x in xs]
    i = int(np.argmin(vals))
    a = xs[i - 1] if i > 0 else lo + (xs[0] - lo) * 1e-9
    b = xs[i + 1] if i + 1 < len(xs) else hi
    best_x, best_v = xs[i], vals[i]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if b - a <= xtol * max(1.0, abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    for x, v in ((c, fc), (d, fd), (hi, fun(hi))):
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v


def _bus_plan(storage, d_lo, d_hi, w, capped):
    ks_min, ks_max, w_max = gamma_w_region(storage, d_lo, d_hi, w)
    gamma, _ = _inner(storage, d_lo, d_hi, w)
    m_u, m_s = bound_components(storage, gamma)
    lam = storage.lam
    return BusPlan(gamma=gamma, w=w, d_lo=d_lo, d_hi=d_hi, ks_min=ks_min, ks_max=ks_max,
                   w_max=w_max if not capped else W_CAP_FACTOR * (storage.s_max - storage.s_min),
                   m_u=m_u, m_s_weighted=lam * (1 - lam) * m_s, w_capped=capped)


def plan_bus(storage: StorageSpec, d_lo, d_hi) -> BusPlan:
    """Bound-minimizing ``(Gamma, W)`` for one bus."""
    w_max, capped = _w_limit(storage, d_lo, d_hi)
    if storage.lam == 1.0:
        # M does not depend on Gamma, so W = W_max and the shift interval is
        # (for a non-constant slope) a single point
        return _bus_plan(storage, d_lo, d_hi, w_max, capped)
    w, _ = _golden_min(lambda x: _inner(storage, d_lo, d_hi, x)[1], 0.0, w_max)
    return _bus_plan(storage, d_lo, d_hi, w, capped)


def plan_parameters(storages, cost_models, shared_weight=False) -> ControllerParams:
    """Plan controller parameters for every bus.

    ``storages`` and ``cost_models`` are equal-length sequences (a single
    storage/model pair is accepted too).  With ``shared_weight`` a single
    ``W <= min_v W_max_v`` is used for all buses.
    """
    if isinstance(storages, StorageSpec):
        storages, cost_models = [storages], [cost_models]
    slopes = []
    for storage, model in zip(storages, cost_models):
        validate_storage(storage)
        check_convexity(model, storage)
        slopes.append(subderivative_bounds(model, storage))
    if not shared_weight:
        plans = tuple(plan_bus(s, lo, hi) for s, (lo, hi) in zip(storages, slopes))
    else:
        limits = [_w_limit(s, lo, hi) for s, (lo, hi) in zip(storages, slopes)]
        w_max = min(lim for lim, _ in limits)

        def total(w):
            return sum(_inner(s, lo, hi, w)[1] for s, (lo, hi) in zip(storages, slopes))

        if all(s.lam == 1.0 for s in storages):
            w = w_max
        else:
            w, _ = _golden_min(total, 0.0, w_max)
        plans = tuple(_bus_plan(s, lo, hi, w, capped)
                      for s, (lo, hi), (_, capped) in zip(storages, slopes, limits))
    bound = sum(p.bound for p in plans)
    return ControllerParams(buses=plans, certified_bound=bound, shared_weight=shared_weight)


def closed_form_unit_efficiency(storage: StorageSpec, d_lo, d_hi):
    """``(Gamma, W, bound)`` for ``lam == 1`` from the closed-form expressions."""
    if storage.lam != 1.0:
        raise ValueError("closed form only applies to lam == 1")
    w = ((storage.s_max - storage.s_min) - (storage.u_max - storage.u_min)) / (d_hi - d_lo)
    gamma = -(d_hi * (storage.s_max - storage.u_max)
              + d_lo * (storage.u_min - storage.s_min)) / (d_hi - d_lo)
    m = 0.5 * max(storage.u_min ** 2, storage.u_max ** 2)
    return gamma, w, m / w
