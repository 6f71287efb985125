"""Closed-loop simulation, online guarantee audits and summary metrics."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import CostRealization
from .exceptions import SimulationAbort
from .network import flow_feasible
from .online import threshold_violations
from .policies import LyapunovController, make_controller
from .stochastic import STREAM_PRICE, generator, sample_paths
from .storage import LEVEL_TOL
from .system import StorageSystem

N_BATCHES = 20


@dataclass(frozen=True)
class Sweep:
    """Capacities to sweep; ramps are rescaled to ``+-ramp_ratio * s_max``."""

    s_max: tuple
    ramp_ratio: float


@dataclass(frozen=True, eq=False)
class Scenario:
    system: StorageSystem
    disturbance: object
    horizon: int
    policy: str = "lyapunov"
    seed: int = 0
    initial_levels: tuple | None = None
    warmup: int = 0
    shared_weight: bool = False
    sweep: Sweep | None = None
    name: str = ""
    edge_ids: tuple = ()

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if not 0 <= self.warmup <= max(self.horizon, 0):
            raise ValueError(f"warm-up {self.warmup} outside [0, horizon]")
        if self.initial_levels is not None and len(self.initial_levels) != self.system.n:
            raise ValueError(f"{len(self.initial_levels)} initial levels for {self.system.n} buses")
        if not self.edge_ids:
            object.__setattr__(self, "edge_ids",
                               tuple(str(e) for e in range(self.system.network.m)))

    def start_levels(self):
        if self.initial_levels is None:
            return np.array([s.s_min for s in self.system.storages], dtype=float)
        return np.array(self.initial_levels, dtype=float)

    def at_capacity(self, s_max):
        """Copy with every storage rescaled to capacity ``s_max`` per the sweep."""
        if self.sweep is None:
            raise ValueError("scenario has no sweep")
        storages = tuple(s.scaled(s_max, self.sweep.ramp_ratio) for s in self.system.storages)
        system = replace(self.system, storages=storages)
        levels = None
        if self.initial_levels is not None:
            levels = tuple(min(max(lv, s.s_min), s.s_max)
                           for lv, s in zip(self.initial_levels, storages))
        return replace(self, system=system, initial_levels=levels, sweep=None)

    def sweep_points(self):
        if self.sweep is None:
            return [(self.system.storages[0].s_max, self)]
        return [(s, self.at_capacity(s)) for s in self.sweep.s_max]


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """Per-period record; row ``t - 1`` holds period ``t``.

    ``levels`` are start-of-period levels; ``final_levels`` follows the last
    period.  ``threshold`` counts violated threshold clauses per bus
    (Lyapunov runs only) and ``bound_violations`` flags periods whose next
    level left its bounds.
    """

    policy: str
    seed: int
    levels: np.ndarray
    u: np.ndarray
    f: np.ndarray
    cost: np.ndarray
    threshold: np.ndarray
    bound_violations: np.ndarray
    final_levels: np.ndarray
    warmup: int = 0

    @property
    def horizon(self):
        return self.u.shape[0]

    @property
    def total_cost(self):
        return self.cost.sum(axis=1)

    @property
    def cumulative_average(self):
        tc = self.total_cost
        return np.cumsum(tc) / np.arange(1, tc.size + 1) if tc.size else tc

    @property
    def measured_cost(self):
        return self.total_cost[self.warmup:]


def _price_paths(system, horizon, seed):
    """Per bus, a ``(terms, horizon)`` array of realized prices."""
    out = []
    for v, model in enumerate(system.costs):
        rows = []
        for l, term in enumerate(model.terms):
            rng = generator(seed, v, STREAM_PRICE + l)
            rows.append(term.price.path(horizon, rng))
        out.append(np.array(rows).reshape(len(model.terms), horizon))
    return out


def _consts(system, t):
    return [tuple(term.const_at(t) for term in model.terms) for model in system.costs]


def realizations(scenario: Scenario, seed=None):
    """Generator of per-period realization tuples for periods ``1..T``."""
    seed = scenario.seed if seed is None else seed
    system, T = scenario.system, scenario.horizon
    deltas = sample_paths(scenario.disturbance, T, seed, system.n)
    prices = _price_paths(system, T, seed)
    for t in range(1, T + 1):
        consts = _consts(system, t)
        yield tuple(CostRealization(float(deltas[t - 1, v]), tuple(prices[v][:, t - 1].tolist()),
                                    consts[v])
                    for v in range(system.n))


def fit_controller(scenario: Scenario, policy=None):
    policy = policy or scenario.policy
    kwargs = {"shared_weight": scenario.shared_weight} if policy == "lyapunov" else {}
    return make_controller(policy, **kwargs).fit(scenario.system)


def _dump(levels, u, f):
    return {"levels": [float(x) for x in levels], "u": [float(x) for x in u],
            "f": [float(x) for x in f]}


def run(scenario: Scenario, policy=None, seed=None, controller=None, strict=True):
    """Simulate one policy over the scenario horizon.

    With ``strict`` a level leaving its bounds (beyond ``1e-9``) or an
    infeasible flow aborts with :class:`SimulationAbort`; otherwise the
    period is flagged and the run continues.
    """
    policy = policy or scenario.policy
    seed = scenario.seed if seed is None else seed
    ctrl = controller if controller is not None else fit_controller(scenario, policy)
    system = scenario.system
    n, m, T = system.n, system.network.m, scenario.horizon
    storages, costs, net = system.storages, system.costs, system.network
    lam = np.array([s.lam for s in storages])
    s_min = np.array([s.s_min for s in storages])
    s_max = np.array([s.s_max for s in storages])
    audit = isinstance(ctrl, LyapunovController)
    track = policy != "no-storage"

    levels_log = np.zeros((T, n))
    u_log = np.zeros((T, n))
    f_log = np.zeros((T, m))
    cost_log = np.zeros((T, n))
    thr_log = np.zeros((T, n), dtype=int)
    viol_log = np.zeros(T, dtype=int)
    levels = scenario.start_levels()
    inflow_map = net.inflow_matrix
    for t, reals in enumerate(realizations(scenario, seed), start=1):
        sol = ctrl._act(levels, reals)
        u, f = sol.u, sol.f
        if m and not flow_feasible(net, f):
            raise SimulationAbort(f"infeasible flow at period {t}", t, _dump(levels, u, f))
        inflow = inflow_map @ f if m else np.zeros(n)
        cost_log[t - 1] = sol.stage_costs
        if audit:
            drift = ctrl.drift(levels)
            for v, b in enumerate(ctrl.params_.buses):
                thr_log[t - 1, v] = threshold_violations(
                    storages[v], costs[v], reals[v], drift[v], b.d_lo, b.d_hi, u[v], inflow[v])
        levels_log[t - 1] = levels
        u_log[t - 1] = u
        f_log[t - 1] = f
        nxt = lam * levels + u
        if track and (np.any(nxt < s_min - LEVEL_TOL) or np.any(nxt > s_max + LEVEL_TOL)):
            viol_log[t - 1] = 1
            if strict:
                raise SimulationAbort(
                    f"storage level left its bounds after period {t} under policy {policy!r}",
                    t, {**_dump(levels, u, f), "next_levels": [float(x) for x in nxt]})
        levels = nxt
    return SimulationTrace(policy=policy, seed=seed, levels=levels_log, u=u_log, f=f_log,
                           cost=cost_log, threshold=thr_log, bound_violations=viol_log,
                           final_levels=levels, warmup=scenario.warmup)


def _run_job(args):
    scenario, policy, seed, strict = args
    return run(scenario, policy, seed, strict=strict)


def run_seeds(scenario: Scenario, policy=None, n_seeds=1, workers=None, strict=True):
    """Runs for seeds ``seed, seed+1, ..., seed+n_seeds-1``, in parallel when possible."""
    policy = policy or scenario.policy
    seeds = [scenario.seed + k for k in range(n_seeds)]
    workers = min(n_seeds, workers or os.cpu_count() or 1)
    if workers <= 1:
        ctrl = fit_controller(scenario, policy)
        return [run(scenario, policy, s, controller=ctrl, strict=strict) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, [(scenario, policy, s, strict) for s in seeds]))


# -- statistics ---------------------------------------------------------------------

def batch_means(series, n_batches=N_BATCHES):
    """Batch means of a series (trailing remainder dropped when not divisible)."""
    series = np.asarray(series, dtype=float)
    k = min(n_batches, series.size)
    if k == 0:
        return np.zeros(0)
    size = series.size // k
    return series[:k * size].reshape(k, size).mean(axis=1)


def estimate(series_list, n_batches=N_BATCHES):
    """``(mean, standard error)`` pooled over runs by batch means."""
    series_list = [np.asarray(s, dtype=float) for s in series_list]
    total = sum(s.size for s in series_list)
    if total == 0:
        return float("nan"), float("nan")
    mean = float(sum(s.sum() for s in series_list) / total)
    batches = np.concatenate([batch_means(s, n_batches) for s in series_list])
    if batches.size < 2:
        return mean, float("nan")
    return mean, float(batches.std(ddof=1) / math.sqrt(batches.size))


def average_cost(traces):
    return estimate([t.measured_cost for t in traces])


def paired_difference(traces_a, traces_b):
    """Mean and SE of ``J(a) - J(b)`` over runs sharing seeds (common random numbers)."""
    by_seed = {t.seed: t for t in traces_b}
    return estimate([a.measured_cost - by_seed[a.seed].measured_cost for a in traces_a])


@dataclass(frozen=True)
class SummaryMetrics:
    """Time averages and savings accounting against the no-storage baseline.

    ``vos_interval`` brackets the long-run value of storage using the
    certified bound; percentages are ``None`` when the no-storage cost is 0.
    ``lower_bound`` is ``J(lyapunov) - M/W``, a lower bound on the optimal
    average cost.
    """

    certified_bound: float
    j: dict
    se: dict
    j1_estimate: float
    j1_se: float
    lower_bound: float
    vos_interval: tuple
    pct_savings: float | None
    pct_savings_upper_bound: float | None
    greedy_vos: float | None
    greedy_pct_savings: float | None
    diff_se: dict = field(default_factory=dict)
    violation_count: int = 0
    threshold_violations: int = 0
    bound_violations: int = 0

    def as_dict(self):
        return {
            "certified_bound": self.certified_bound,
            "average_cost": dict(sorted(self.j.items())),
            "standard_error": dict(sorted(self.se.items())),
            "paired_difference_se": dict(sorted(self.diff_se.items())),
            "j1_estimate": self.j1_estimate,
            "j1_standard_error": self.j1_se,
            "lower_bound": self.lower_bound,
            "vos_interval": list(self.vos_interval),
            "pct_savings": self.pct_savings,
            "pct_savings_upper_bound": self.pct_savings_upper_bound,
            "greedy_vos": self.greedy_vos,
            "greedy_pct_savings": self.greedy_pct_savings,
            "violation_count": self.violation_count,
            "threshold_violations": self.threshold_violations,
            "bound_violations": self.bound_violations,
        }


def summarize(traces: dict, certified_bound) -> SummaryMetrics:
    """Summary from ``{policy: [trace, ...]}``; needs the lyapunov and no-storage runs."""
    j, se = {}, {}
    for policy, runs in traces.items():
        j[policy], se[policy] = average_cost(runs)
    ol, ns = traces["lyapunov"], traces["no-storage"]
    diff_se = {"no-storage-lyapunov": paired_difference(ns, ol)[1]}
    j_ol, j_ns = j["lyapunov"], j["no-storage"]
    vos = j_ns - j_ol
    pct = pct_up = None
    if j_ns != 0:
        pct = vos / j_ns
        pct_up = (vos + certified_bound) / j_ns
    g_vos = g_pct = None
    if "greedy" in traces:
        g = traces["greedy"]
        g_vos = j_ns - j["greedy"]
        g_pct = g_vos / j_ns if j_ns != 0 else None
        diff_se["lyapunov-greedy"] = paired_difference(ol, g)[1]
        diff_se["no-storage-greedy"] = paired_difference(ns, g)[1]
    thr = int(sum(int(t.threshold.sum()) for t in ol))
    bnd = int(sum(int(t.bound_violations.sum()) for runs in traces.values()
                  for t in runs if t.policy != "no-storage"))
    return SummaryMetrics(
        certified_bound=float(certified_bound), j=j, se=se, j1_estimate=j_ol,
        j1_se=se["lyapunov"], lower_bound=j_ol - certified_bound,
        vos_interval=(vos, vos + certified_bound), pct_savings=pct,
        pct_savings_upper_bound=pct_up, greedy_vos=g_vos, greedy_pct_savings=g_pct,
        diff_se=diff_se, violation_count=thr + bnd, threshold_violations=thr,
        bound_violations=bnd)


@dataclass(frozen=True)
class ComparisonPoint:
    s_max: float
    certified_bound: float
    summary: SummaryMetrics
    params: object


def compare(scenario: Scenario, n_seeds=1, workers=None):
    """All three policies under common random numbers at every sweep point."""
    out = []
    for s_max, sc in scenario.sweep_points():
        traces = {p: run_seeds(sc, p, n_seeds, workers)
                  for p in ("no-storage", "greedy", "lyapunov")}
        ctrl = fit_controller(sc, "lyapunov")
        bound = ctrl.params_.certified_bound
        out.append(ComparisonPoint(float(s_max), bound, summarize(traces, bound), ctrl.params_))
    return out
