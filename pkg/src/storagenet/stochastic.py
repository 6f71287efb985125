"""Imbalance disturbances and finite Markov chain analysis.

Every random quantity comes from its own numpy ``Generator`` seeded by
``SeedSequence(seed, spawn_key=(bus, stream))`` and consumes exactly one
uniform per period.  A path of length ``T`` is therefore a prefix of every
longer path, and different policies see identical draws for the same seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.sparse.csgraph import connected_components

from .exceptions import MarkovChainError

ROW_SUM_TOL = 1e-12
STREAM_DISTURBANCE = 0
STREAM_PRICE = 1


def generator(seed, bus=0, stream=STREAM_DISTURBANCE):
    """Independent generator for one (bus, stream) pair of a run."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(bus), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def uniforms(seed, horizon, bus=0, stream=STREAM_DISTURBANCE):
    return generator(seed, bus, stream).random(horizon)


# -- Markov chains ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MarkovChain:
    """Row-stochastic, irreducible and aperiodic chain on states ``0..k-1``."""

    transition: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        object.__setattr__(self, "transition", P)
        validate_chain(self)

    @property
    def size(self):
        return self.transition.shape[0]

    def state_path(self, horizon, seed, bus=0, stream=STREAM_DISTURBANCE):
        """States for periods ``1..horizon``; period 1 is the initial state."""
        u = uniforms(seed, horizon, bus, stream)
        cum = np.cumsum(self.transition, axis=1)
        cum[:, -1] = 1.0
        states = np.empty(horizon, dtype=int)
        s = self.initial_state
        for t in range(horizon):
            if t:
                s = min(int(np.searchsorted(cum[s], u[t], side="right")), self.size - 1)
            states[t] = s
        return states


def _period(P):
    """Period of an irreducible chain from BFS levels: gcd of level[u] + 1 - level[v]."""
    k = P.shape[0]
    level = np.full(k, -1)
    level[0] = 0
    queue = [0]
    for u in queue:
        for v in np.flatnonzero(P[u] > 0):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(int(v))
    diffs = [int(level[u] + 1 - level[v]) for u in range(k) for v in np.flatnonzero(P[u] > 0)]
    return reduce(math.gcd, (abs(d) for d in diffs), 0)


def validate_chain(chain: MarkovChain):
    P = chain.transition
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise MarkovChainError(f"transition matrix must be square and non-empty, got {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise MarkovChainError("transition probabilities must be finite and nonnegative")
    rows = np.abs(P.sum(axis=1) - 1.0)
    if np.any(rows > ROW_SUM_TOL):
        i = int(np.argmax(rows))
        raise MarkovChainError(f"row {i} sums to {P[i].sum()!r}, not 1")
    if not 0 <= chain.initial_state < P.shape[0]:
        raise MarkovChainError(f"initial state {chain.initial_state} out of range")
    ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
    if ncomp != 1:
        raise MarkovChainError(f"chain is reducible ({ncomp} communicating classes)")
    period = _period(P)
    if period != 1:
        raise MarkovChainError(f"chain is periodic with period {period}")
    return chain


def return_time_moments(chain: MarkovChain, state=None):
    """``(E[T], E[T^2])`` of the first return time ``T`` to ``state``.

    First-passage recursions on the chain with ``state`` made taboo:
    ``m = 1 + Q m`` and ``s = 1 + 2 Q m + Q s``.
    """
    P = chain.transition
    r = chain.initial_state if state is None else int(state)
    others = [j for j in range(P.shape[0]) if j != r]
    if not others:
        return 1.0, 1.0
    Q = P[np.ix_(others, others)]
    I = np.eye(len(others))
    ones = np.ones(len(others))
    m = np.linalg.solve(I - Q, ones)
    s = np.linalg.solve(I - Q, ones + 2.0 * Q @ m)
    row = P[r, others]
    return float(1.0 + row @ m), float(1.0 + 2.0 * row @ m + row @ s)


def stationary_distribution(chain: MarkovChain, tol=1e-15, max_iter=1_000_000):
    """Stationary law by power iteration on the lazy chain ``(I + P) / 2``."""
    P = 0.5 * (np.eye(chain.size) + chain.transition)
    pi = np.full(chain.size, 1.0 / chain.size)
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= tol:
            return nxt
        pi = nxt
    return pi


# -- disturbance processes --------------------------------------------------------------

@dataclass(frozen=True)
class LaplaceDisturbance:
    """Zero-mean Laplace imbalance with standard deviation ``sigma``.

    The scale is ``b = sigma / sqrt(2)`` and the law is conditioned on
    ``|delta| <= truncation * b``; draws use the inverse CDF of that
    conditional law so each period consumes one uniform.
    """

    sigma: float
    truncation: float = 8.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not self.truncation > 0:
            raise ValueError(f"truncation must be positive, got {self.truncation}")

    @property
    def scale(self):
        return self.sigma / math.sqrt(2.0)

    @property
    def bound(self):
        return self.truncation * self.scale

    def quantile(self, u):
        b = self.scale
        if b == 0:
            return np.zeros_like(np.asarray(u, dtype=float))
        tail = 0.5 * math.exp(-self.truncation)
        p = tail + np.asarray(u, dtype=float) * (1.0 - 2.0 * tail)
        return np.where(p < 0.5, b * np.log(2.0 * p), -b * np.log(2.0 - 2.0 * p))

    def path(self, horizon, seed, bus=0):
        return self.quantile(uniforms(seed, horizon, bus))


@dataclass(frozen=True)
class EmpiricalDisturbance:
    """i.i.d. imbalance on a finite support."""

    support: tuple
    weights: tuple = ()

    def __post_init__(self):
        support = tuple(float(x) for x in self.support)
        if not support:
            raise ValueError("support must be non-empty")
        weights = tuple(float(w) for w in self.weights) or (1.0 / len(support),) * len(support)
        if len(weights) != len(support):
            raise ValueError("support and weights must be non-empty and of equal length")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > ROW_SUM_TOL * len(weights):
            raise ValueError(f"weights must be a probability vector, got {weights}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def bound(self):
        return max(abs(x) for x in self.support)

    def path(self, horizon, seed, bus=0):
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, uniforms(seed, horizon, bus), side="right")
        return np.asarray(self.support)[np.minimum(idx, len(self.support) - 1)]


@dataclass(frozen=True, eq=False)
class MarkovDisturbance:
    """Imbalance driven by one chain shared by all buses.

    ``values[state][bus]`` is the imbalance at ``bus`` while the chain is in
    ``state``; a one-dimensional ``values`` applies to every bus.
    """

    chain: MarkovChain
    values: tuple

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.chain.size:
            raise MarkovChainError(
                f"{vals.shape[0]} state values for a chain with {self.chain.size} states")
        object.__setattr__(self, "values", vals)

    def bus_values(self, bus):
        return self.values[:, bus if self.values.shape[1] > 1 else 0]

    def bound_at(self, bus):
        return float(np.max(np.abs(self.bus_values(bus))))

    def path(self, horizon, seed, bus=0):
        return self.bus_values(bus)[self.chain.state_path(horizon, seed)]


def disturbance_bound(proc, bus=0):
    return proc.bound_at(bus) if isinstance(proc, MarkovDisturbance) else proc.bound


def sample_paths(proc, horizon, seed, n_buses):
    """``(horizon, n_buses)`` imbalance array for periods ``1..horizon``."""
    if isinstance(proc, MarkovDisturbance):
        states = proc.chain.state_path(horizon, seed)
        return np.column_stack([proc.bus_values(v)[states] for v in range(n_buses)]) \
            if horizon else np.zeros((0, n_buses))
    return np.column_stack([proc.path(horizon, seed, v) for v in range(n_buses)]) \
        if horizon else np.zeros((0, n_buses))


def sample(proc, t, seed, bus=0):
    """Imbalance at period ``t >= 1``; equal to ``sample_paths(...)[t - 1, bus]``."""
    if t < 1:
        raise ValueError(f"periods start at 1, got {t}")
    return float(proc.path(t, seed, bus)[t - 1])
