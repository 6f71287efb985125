import math
from dataclasses import replace

import numpy as np
import pytest

from storagenet import load_scenario
from storagenet.exceptions import SimulationAbort
from storagenet.online import OnlineSolution
from storagenet.scenario import bundled
from storagenet.simulation import (
    average_cost,
    batch_means,
    compare,
    estimate,
    fit_controller,
    paired_difference,
    run,
    run_seeds,
    summarize,
)

SIGMA = 0.149


def scenario(name, **changes):
    return replace(load_scenario(bundled(name)), **changes)


def test_zero_horizon_gives_empty_trace():
    trace = run(scenario("unit_storage", horizon=0))
    assert trace.horizon == 0
    assert trace.levels.shape == (0, 1)
    assert trace.cumulative_average.size == 0
    np.testing.assert_array_equal(trace.final_levels, [0.0])


def test_no_storage_cost_is_mean_absolute_imbalance():
    trace = run(scenario("unit_storage", horizon=100_000), policy="no-storage", seed=7)
    mean, se = average_cost([trace])
    assert abs(mean - SIGMA / math.sqrt(2)) <= 3 * se
    np.testing.assert_array_equal(trace.u, 0.0)


def test_lyapunov_run_is_feasible_and_threshold_clean():
    sc = scenario("single_bus_day_night")
    for seed in range(3):
        trace = run(sc, seed=seed)
        s = sc.system.storages[0]
        assert np.all(trace.levels >= s.s_min - 1e-9) and np.all(trace.levels <= s.s_max + 1e-9)
        assert trace.threshold.sum() == 0
        assert trace.bound_violations.sum() == 0


def test_star_network_run_is_feasible():
    sc = scenario("star_homogeneous", horizon=300)
    trace = run(sc)
    s_min, s_max = sc.system.bounds()[:2]
    assert np.all(trace.levels >= s_min - 1e-9) and np.all(trace.levels <= s_max + 1e-9)
    caps = sc.system.network.f_max
    assert np.all(np.abs(trace.f) <= caps + 1e-9)
    assert trace.threshold.sum() == 0


def test_runs_are_deterministic():
    sc = scenario("star_homogeneous", horizon=200)
    a, b = run(sc, seed=3), run(sc, seed=3)
    for field in ("levels", "u", "f", "cost"):
        assert getattr(a, field).tobytes() == getattr(b, field).tobytes()
    assert run(sc, seed=4).cost.tobytes() != a.cost.tobytes()


def test_run_seeds_uses_consecutive_seeds():
    sc = scenario("unit_storage", horizon=50, seed=10)
    traces = run_seeds(sc, "greedy", n_seeds=3, workers=1)
    assert [t.seed for t in traces] == [10, 11, 12]
    assert traces[1].cost.tobytes() == run(sc, "greedy", seed=11).cost.tobytes()


def test_common_random_numbers_across_policies():
    sc = scenario("unit_storage", horizon=400)
    ns = run(sc, "no-storage")
    g = run(sc, "greedy")
    # with storage idle the greedy stage cost equals the raw imbalance penalty
    idle = np.all(g.u == 0, axis=1)
    np.testing.assert_allclose(g.total_cost[idle], ns.total_cost[idle], atol=1e-12)


class _Runaway:
    """Controller that always charges at a fixed rate, ignoring the levels."""

    def _act(self, levels, reals):
        return OnlineSolution(u=np.array([0.1]), f=np.zeros(0), objective=0.0,
                              stage_costs=np.zeros(1))


def test_bound_violation_aborts_with_state_dump():
    sc = scenario("unit_storage", horizon=50)
    with pytest.raises(SimulationAbort) as info:
        run(sc, "greedy", controller=_Runaway())
    assert info.value.period == 11
    assert info.value.state["next_levels"][0] > 1.0


def test_lenient_run_flags_violations():
    trace = run(scenario("unit_storage", horizon=50), "greedy", controller=_Runaway(),
                strict=False)
    assert trace.bound_violations.sum() == 50 - 10


def test_warmup_is_excluded_from_measured_cost():
    trace = run(scenario("unit_storage", horizon=100, warmup=30), "no-storage")
    assert trace.measured_cost.size == 70
    np.testing.assert_array_equal(trace.measured_cost, trace.total_cost[30:])


def test_batch_means_and_estimate():
    x = np.arange(40, dtype=float)
    np.testing.assert_allclose(batch_means(x), np.arange(20) * 2 + 0.5)
    mean, se = estimate([x])
    assert mean == pytest.approx(19.5)
    assert se == pytest.approx(np.std(np.arange(20) * 2.0, ddof=1) / math.sqrt(20))
    assert math.isnan(estimate([np.zeros(0)])[0])
    assert batch_means(np.ones(45)).size == 20


def test_summary_with_identical_traces():
    sc = scenario("unit_storage", horizon=500)
    ns = run(sc, "no-storage")
    summary = summarize({"no-storage": [ns], "lyapunov": [replace(ns, policy="lyapunov")]},
                        0.0125)
    assert summary.vos_interval == (0.0, 0.0125)
    assert summary.pct_savings == 0.0
    assert summary.pct_savings_upper_bound == pytest.approx(0.0125 / summary.j["no-storage"])
    assert summary.lower_bound == pytest.approx(summary.j1_estimate - 0.0125)
    assert summary.greedy_vos is None


def test_summary_with_zero_baseline_cost():
    sc = scenario("unit_storage", horizon=10, disturbance=replace(
        load_scenario(bundled("unit_storage")).disturbance, sigma=0.0))
    traces = {p: [run(sc, p)] for p in ("no-storage", "greedy", "lyapunov")}
    summary = summarize(traces, 0.0125)
    assert summary.pct_savings is None and summary.pct_savings_upper_bound is None
    assert summary.greedy_pct_savings is None


def test_summary_is_ordered_and_counts_violations():
    sc = scenario("unit_storage", horizon=2000)
    traces = {p: [run(sc, p)] for p in ("no-storage", "greedy", "lyapunov")}
    summary = summarize(traces, fit_controller(sc).params_.certified_bound)
    lo, hi = summary.vos_interval
    assert lo <= hi
    assert summary.pct_savings <= summary.pct_savings_upper_bound
    assert summary.violation_count == 0


def test_greedy_is_near_optimal_without_leakage():
    sc = scenario("unit_storage", horizon=10_000)
    ol, g = run(sc, "lyapunov"), run(sc, "greedy")
    bound = fit_controller(sc).params_.certified_bound
    j_ol, j_g = average_cost([ol])[0], average_cost([g])[0]
    _, se = paired_difference([ol], [g])
    assert j_ol - bound - 3 * se <= j_g <= j_ol + 3 * se


def test_greedy_value_grows_with_capacity():
    base = scenario("single_bus_balancing", horizon=4000)
    costs = []
    for s_max in (0.2, 0.6, 1.2, 2.0):
        costs.append(run(base.at_capacity(s_max), "greedy", seed=1))
    for small, large in zip(costs, costs[1:]):
        diff, se = paired_difference([large], [small])
        assert diff <= 3 * se


def test_compare_covers_the_sweep():
    sc = scenario("single_bus_balancing", horizon=300,
                  sweep=replace(load_scenario(bundled("single_bus_balancing")).sweep, s_max=(0.4, 1.0)))
    points = compare(sc, n_seeds=2, workers=1)
    assert [p.s_max for p in points] == [0.4, 1.0]
    for p in points:
        assert p.summary.violation_count == 0
        assert set(p.summary.j) == {"no-storage", "greedy", "lyapunov"}
        assert p.certified_bound == p.params.certified_bound
