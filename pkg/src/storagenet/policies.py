"""Controllers with a scikit-learn style interface.

Every controller is fitted on a :class:`~storagenet.system.StorageSystem`
and then maps the current storage levels plus the observed per-bus cost
realizations to an :class:`~storagenet.online.OnlineSolution`::

    ctrl = LyapunovController().fit(system)
    sol = ctrl.predict(levels, realizations)
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .cost import evaluate_cost
from .online import (
    DispatchLP,
    OnlineSolution,
    drift_coefficient,
    minimize_piecewise,
    solve_dispatch,
    threshold_violations,
)
from .planner import plan_parameters
from .system import StorageSystem

VARIANTS = ("lyapunov", "greedy", "no-storage")


def _check_levels(system, levels):
    levels = check_array(np.atleast_1d(np.asarray(levels, dtype=float)), ensure_2d=False)
    if levels.shape != (system.n,):
        raise ValueError(f"expected {system.n} storage levels, got shape {levels.shape}")
    return levels


def _check_realizations(system, realizations):
    realizations = tuple(realizations)
    if len(realizations) != system.n:
        raise ValueError(f"expected {system.n} realizations, got {len(realizations)}")
    return realizations


def _single_solution(system, real, u, drift=0.0):
    st, cost = system.storages[0], system.costs[0]
    g = evaluate_cost(cost, st, real, u)
    return OnlineSolution(u=np.array([u]), f=np.zeros(0), objective=drift * u + g,
                          stage_costs=np.array([g]))


def _dispatch_lp(system):
    if system.is_single_bus:
        return None
    return DispatchLP(system.storages, system.costs, system.network, system.delta_bounds)


def greedy_action(system: StorageSystem, levels, realizations, lp=None) -> OnlineSolution:
    """Myopic stage-cost minimization that keeps the next level feasible.

    Among equally cheap actions the one with least total ``|u|`` is taken.
    """
    s_min, s_max, u_min, u_max, lam = system.bounds()
    lo = np.maximum(u_min, s_min - lam * levels)
    hi = np.minimum(u_max, s_max - lam * levels)
    hi = np.maximum(hi, lo)
    if system.is_single_bus:
        st, cost, real = system.storages[0], system.costs[0], realizations[0]
        u = minimize_piecewise(cost, st, real, 0.0, lo[0], hi[0])
        return _single_solution(system, real, u)
    return solve_dispatch(system.storages, system.costs, system.network, realizations,
                          np.zeros(system.n), lo, hi, system.delta_bounds, prefer_small_u=True,
                          lp=lp)


def no_storage_action(system: StorageSystem, realizations, lp=None) -> OnlineSolution:
    """Never operate storage; flows still minimize the stage cost."""
    if system.is_single_bus:
        return _single_solution(system, realizations[0], 0.0)
    zero = np.zeros(system.n)
    return solve_dispatch(system.storages, system.costs, system.network, realizations,
                          zero, zero, zero, system.delta_bounds, lp=lp)


class LyapunovController(BaseEstimator):
    """Online drift-plus-penalty controller with bound-optimal parameters.

    Parameters
    ----------
    shared_weight : bool, default=False
        Use one weight ``W`` for all buses instead of a per-bus ``W_v``.

    Attributes
    ----------
    params_ : ControllerParams
        Planned shifts, weights and the certified sub-optimality bound.
    system_ : StorageSystem
    """

    variant = "lyapunov"

    def __init__(self, shared_weight=False):
        self.shared_weight = shared_weight

    def fit(self, system: StorageSystem, y=None):
        system.validate()
        self.system_ = system
        self.params_ = plan_parameters(system.storages, system.costs, self.shared_weight)
        self.lp_ = _dispatch_lp(system)
        return self

    def drift(self, levels):
        return np.array([drift_coefficient(s, lv, b.gamma, b.w)
                         for s, lv, b in zip(self.system_.storages, levels, self.params_.buses)])

    def predict(self, levels, realizations) -> OnlineSolution:
        check_is_fitted(self, "params_")
        levels = _check_levels(self.system_, levels)
        return self._act(levels, _check_realizations(self.system_, realizations))

    def _act(self, levels, realizations):
        system = self.system_
        drift = self.drift(levels)
        if system.is_single_bus:
            st, cost, real = system.storages[0], system.costs[0], realizations[0]
            u = minimize_piecewise(cost, st, real, drift[0], st.u_min, st.u_max)
            return _single_solution(system, real, u, drift[0])
        return solve_dispatch(system.storages, system.costs, system.network, realizations,
                              drift, delta_bounds=system.delta_bounds, lp=self.lp_)

    def threshold_violations(self, levels, realizations, solution: OnlineSolution) -> int:
        """Count threshold-clause violations of ``solution`` (flows held fixed)."""
        check_is_fitted(self, "params_")
        system = self.system_
        drift = self.drift(levels)
        net = system.network
        inflow = net.inflow_matrix @ solution.f if net.m else np.zeros(net.n)
        return sum(
            threshold_violations(st, cost, real, dr, b.d_lo, b.d_hi, u, inf)
            for st, cost, real, dr, b, u, inf in zip(
                system.storages, system.costs, realizations, drift, self.params_.buses,
                solution.u, inflow))


class GreedyController(BaseEstimator):
    """Myopic baseline; see :func:`greedy_action`."""

    variant = "greedy"

    def fit(self, system: StorageSystem, y=None):
        self.system_ = system.validate()
        self.lp_ = _dispatch_lp(system)
        return self

    def predict(self, levels, realizations) -> OnlineSolution:
        check_is_fitted(self, "system_")
        levels = _check_levels(self.system_, levels)
        return self._act(levels, _check_realizations(self.system_, realizations))

    def _act(self, levels, realizations):
        return greedy_action(self.system_, levels, realizations, self.lp_)


class NoStorageController(BaseEstimator):
    """Baseline that never operates storage."""

    variant = "no-storage"

    def fit(self, system: StorageSystem, y=None):
        self.system_ = system.validate()
        self.lp_ = _dispatch_lp(system)
        return self

    def predict(self, levels, realizations) -> OnlineSolution:
        check_is_fitted(self, "system_")
        return self._act(None, _check_realizations(self.system_, realizations))

    def _act(self, levels, realizations):
        return no_storage_action(self.system_, realizations, self.lp_)


def make_controller(variant, **kwargs):
    try:
        cls = {"lyapunov": LyapunovController, "greedy": GreedyController,
               "no-storage": NoStorageController}[variant]
    except KeyError:
        raise ValueError(f"unknown policy {variant!r}; choose from {VARIANTS}") from None
    return cls(**kwargs)
