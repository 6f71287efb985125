"""Stochastic piecewise-linear stage cost for one bus.

Each term is ``p * arg`` (``kind="linear"``) or ``p * max(arg, 0)``
(``kind="positive"``) with the affine argument

    arg = a_delta*delta - a_c*u_plus/mu_c + a_d*mu_d*u_minus + a_f*inflow + a_const(t)

where ``u_plus = max(u, 0)`` and ``u_minus = max(-u, 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonConvexCostError
from .storage import StorageSpec

HOURS_PER_DAY = 24


# -- coefficient processes ---------------------------------------------------

@dataclass(frozen=True)
class ConstantPrice:
    value: float

    @property
    def bounds(self):
        return self.value, self.value

    def at(self, t):
        return float(self.value)

    def path(self, horizon, rng=None):
        return np.full(horizon, float(self.value))


@dataclass(frozen=True)
class SchedulePrice:
    """Deterministic periodic price; period ``t`` uses ``values[t % len(values)]``."""

    values: tuple

    @property
    def bounds(self):
        return min(self.values), max(self.values)

    def at(self, t):
        return float(self.values[t % len(self.values)])

    def path(self, horizon, rng=None):
        t = np.arange(1, horizon + 1)
        return np.asarray(self.values, dtype=float)[t % len(self.values)]


@dataclass(frozen=True)
class UniformPrice:
    """i.i.d. price drawn uniformly from ``[low, high]`` each period."""

    low: float
    high: float

    @property
    def bounds(self):
        return self.low, self.high

    def at(self, t):
        raise ValueError("a uniform price has no deterministic value; pass prices explicitly")

    def path(self, horizon, rng=None):
        if rng is None:
            raise ValueError("a uniform price path needs a random generator")
        return self.low + (self.high - self.low) * rng.random(horizon)


def day_night_schedule(day=3.0, night=1.0, start=7, end=19):
    """24-entry schedule: ``day`` for ``start <= t mod 24 < end``, else ``night``."""
    return tuple(day if start <= h < end else night for h in range(HOURS_PER_DAY))


# -- terms and models ----------------------------------------------------------

@dataclass(frozen=True)
class CostTerm:
    kind: str = "positive"
    alpha_delta: float = 0.0
    alpha_c: float = 0.0
    alpha_d: float = 0.0
    alpha_f: float = 0.0
    alpha_const: float | tuple = 0.0
    price: ConstantPrice | SchedulePrice | UniformPrice = field(default_factory=lambda: ConstantPrice(1.0))

    def __post_init__(self):
        if self.kind not in ("positive", "linear"):
            raise ValueError(f"unknown cost term kind {self.kind!r}")
        if self.kind == "positive" and self.price.bounds[0] < 0:
            raise NonConvexCostError(
                f"positive-part term with price lower bound {self.price.bounds[0]} < 0")

    @property
    def p_min(self):
        return self.price.bounds[0]

    @property
    def p_max(self):
        return self.price.bounds[1]

    def const_at(self, t):
        if isinstance(self.alpha_const, tuple):
            return float(self.alpha_const[t % len(self.alpha_const)])
        return float(self.alpha_const)

    def const_bound(self):
        if isinstance(self.alpha_const, tuple):
            return max(abs(c) for c in self.alpha_const)
        return abs(self.alpha_const)

    def branch_slopes(self, storage: StorageSpec):
        """Slope of the argument in ``u`` for ``u < 0`` and for ``u > 0``."""
        return -self.alpha_d * storage.mu_d, -self.alpha_c / storage.mu_c


@dataclass(frozen=True)
class CostModel:
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))


@dataclass(frozen=True)
class CostRealization:
    """Observed parameters of one period: imbalance, prices and constants per term."""

    delta: float
    p: tuple
    const: tuple


def balancing_cost(q_plus=1.0, q_minus=1.0, alpha_f=1.0):
    """``q_plus * r^+ + q_minus * r^-`` of the residual imbalance ``r``."""
    q_plus = q_plus if hasattr(q_plus, "bounds") else ConstantPrice(q_plus)
    q_minus = q_minus if hasattr(q_minus, "bounds") else ConstantPrice(q_minus)
    return CostModel((
        CostTerm("positive", 1.0, 1.0, 1.0, alpha_f, 0.0, q_plus),
        CostTerm("positive", -1.0, -1.0, -1.0, -alpha_f, 0.0, q_minus),
    ))


def unmet_demand_cost(price=1.0, alpha_f=1.0):
    """``price * r^-``: only unsatisfied demand is penalized."""
    price = price if hasattr(price, "bounds") else ConstantPrice(price)
    return CostModel((CostTerm("positive", -1.0, -1.0, -1.0, -alpha_f, 0.0, price),))


def arbitrage_cost(price):
    """Energy purchase cost ``price * (h_c(u^+) - h_d(u^-))``."""
    price = price if hasattr(price, "bounds") else ConstantPrice(price)
    return CostModel((CostTerm("linear", 0.0, -1.0, -1.0, 0.0, 0.0, price),))


def realize(model: CostModel, t, delta, prices=None) -> CostRealization:
    """Realization for period ``t``; ``prices`` overrides the term processes."""
    if prices is None:
        prices = tuple(term.price.at(t) for term in model.terms)
    return CostRealization(float(delta), tuple(float(p) for p in prices),
                           tuple(term.const_at(t) for term in model.terms))


def term_arguments(model, storage, real, u, inflow=0.0):
    up, um = max(u, 0.0), max(-u, 0.0)
    hc, hd = up / storage.mu_c, storage.mu_d * um
    return [term.alpha_delta * real.delta - term.alpha_c * hc + term.alpha_d * hd
            + term.alpha_f * inflow + c
            for term, c in zip(model.terms, real.const)]


def evaluate_cost(model: CostModel, storage: StorageSpec, real: CostRealization,
                  u, inflow=0.0) -> float:
    total = 0.0
    for term, p, arg in zip(model.terms, real.p, term_arguments(model, storage, real, u, inflow)):
        total += p * (arg if term.kind == "linear" else max(arg, 0.0))
    return total


def _branches(storage):
    out = []
    if storage.u_min < 0:
        out.append(0)
    if storage.u_max > 0:
        out.append(1)
    return out


def subderivative_bounds(model: CostModel, storage: StorageSpec):
    """Extreme sub-derivatives ``(d_lo, d_hi)`` of the cost in ``u``.

    Enumerates, per operating branch, each term's argument slope times the
    activity indicator ``{0, 1}`` (positive-part terms) at the price bounds,
    and sums the per-term interval endpoints.
    """
    lo, hi = np.inf, -np.inf
    branches = _branches(storage)
    if not branches:
        return 0.0, 0.0
    for b in branches:
        blo = bhi = 0.0
        for term in model.terms:
            slope = term.branch_slopes(storage)[b]
            cands = [p * slope for p in (term.p_min, term.p_max)]
            if term.kind == "positive":
                cands.append(0.0)
            blo += min(cands)
            bhi += max(cands)
        lo, hi = min(lo, blo), max(hi, bhi)
    return float(lo), float(hi)


def check_convexity(model: CostModel, storage: StorageSpec, tol=1e-12):
    """Reject cost models that can be nonconvex in ``u``.

    Kinks where a term's argument crosses zero are convex for nonnegative
    prices, so only the kink at ``u = 0`` needs checking: over every price
    extreme and activity pattern, the slope jump there must be nonnegative.
    """
    for i, term in enumerate(model.terms):
        if term.kind == "positive" and term.p_min < 0:
            raise NonConvexCostError(f"term {i}: positive-part term needs p_min >= 0")
    if len(_branches(storage)) < 2:
        return model
    worst = 0.0
    for term in model.terms:
        s_minus, s_plus = term.branch_slopes(storage)
        jumps = [p * (s_plus - s_minus) for p in (term.p_min, term.p_max)]
        if term.kind == "positive":
            jumps.append(0.0)
        worst += min(jumps)
    if worst < -tol:
        raise NonConvexCostError(
            f"cost can have a concave kink at u=0 (slope jump {worst:.6g}); "
            "only convex piecewise-linear costs are supported")
    return model


def argument_bound(term: CostTerm, storage: StorageSpec, delta_bound, inflow_bound):
    """Upper bound on ``|arg|`` over all admissible operations and parameters."""
    return (abs(term.alpha_delta) * delta_bound
            + abs(term.alpha_c) * storage.u_max / storage.mu_c
            + abs(term.alpha_d) * storage.mu_d * (-storage.u_min)
            + abs(term.alpha_f) * inflow_bound + term.const_bound())
