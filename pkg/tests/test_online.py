import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from instances import make_instance, two_bus_line
from oracles import network_grid, network_grid_best, stage_cost
from storagenet import (
    StorageSpec,
    balancing_cost,
    build_network,
    realize,
    subderivative_bounds,
    unmet_demand_cost,
)
from storagenet.network import flow_feasible, single_bus_network
from storagenet.online import (
    bus_objective,
    minimize_piecewise,
    network_objective,
    solve_dispatch,
    solve_network,
    solve_single_bus,
    threshold_violations,
)

UNIT = StorageSpec(0, 1, -0.1, 0.1)
BAL = balancing_cost()


def test_high_shifted_level_discharges_fully():
    u = solve_single_bus(UNIT, BAL, realize(BAL, 1, 0.05), level=1.0, gamma=0.0, w=0.4)
    assert u == UNIT.u_min


def test_low_shifted_level_charges_fully():
    u = solve_single_bus(UNIT, BAL, realize(BAL, 1, -0.05), level=0.0, gamma=-1.0, w=0.4)
    assert u == UNIT.u_max


def test_zero_shifted_level_and_imbalance_idles():
    assert solve_single_bus(UNIT, BAL, realize(BAL, 1, 0.0), level=0.5, gamma=-0.5, w=0.4) == 0.0


def test_flat_objective_ties_break_towards_zero():
    # surplus 0.05 with an unmet-demand cost: every u in [-0.05, 0.05] costs nothing
    model = unmet_demand_cost()
    assert minimize_piecewise(model, UNIT, realize(model, 1, 0.05), 0.0, -0.1, 0.1) == 0.0
    assert minimize_piecewise(model, UNIT, realize(model, 1, 0.05), 0.0, 0.02, 0.1) == 0.02
    assert minimize_piecewise(model, UNIT, realize(model, 1, 0.05), 0.0, -0.1, -0.03) == -0.03


def test_two_bus_transfer_with_ample_capacity():
    P, _ = two_bus_line(1.0)
    sol = solve_dispatch(P["storages"], P["models"], P["network"], P["reals"], P["drift"])
    np.testing.assert_allclose(sol.f, [0.5], atol=1e-12)
    np.testing.assert_allclose(sol.u, [0.0, 0.0], atol=1e-12)
    assert sol.objective == pytest.approx(0.0, abs=1e-12)


def test_two_bus_transfer_with_tight_capacity():
    P, O = two_bus_line(0.2, q=2.0)
    sol = solve_dispatch(P["storages"], P["models"], P["network"], P["reals"], P["drift"])
    np.testing.assert_allclose(sol.f, [0.2], atol=1e-12)
    np.testing.assert_allclose(sol.stage_costs, [0.0, 2.0 * 0.3], atol=1e-12)
    best, _ = network_grid(O["buses"], O["edges"], O["caps"], O["flows_of"], O["dof"])
    assert sol.objective == pytest.approx(best, abs=1e-6)


def test_two_bus_with_storage_matches_grid():
    P, O = two_bus_line(0.2, ramp=0.1)
    sol = solve_dispatch(P["storages"], P["models"], P["network"], P["reals"], P["drift"])
    best, _ = network_grid(O["buses"], O["edges"], O["caps"], O["flows_of"], O["dof"])
    assert sol.objective == pytest.approx(best, abs=1e-6)
    assert sol.objective == pytest.approx(0.2, abs=1e-9)


@pytest.mark.parametrize("n, cycle", [(2, False), (3, False), (3, True)])
def test_random_instance_matches_grid(n, cycle):
    P, O = make_instance(np.random.default_rng(100 + n + cycle), n, cycle)
    sol = solve_dispatch(P["storages"], P["models"], P["network"], P["reals"], P["drift"])
    best, _ = network_grid_best(O)
    assert sol.objective == pytest.approx(best, abs=1e-6)
    assert flow_feasible(P["network"], sol.f)


def test_solve_network_uses_shifted_levels():
    P, _ = make_instance(np.random.default_rng(7), 3, True)
    gamma = np.array([-0.4, -0.6, -0.5])
    w = np.array([0.3, 0.5, 0.2])
    levels = np.array([0.1, 0.9, 0.5])
    sol = solve_network(P["storages"], P["models"], P["network"], P["reals"], levels, gamma, w)
    drift = levels + gamma
    drift = drift / w
    ref = solve_dispatch(P["storages"], P["models"], P["network"], P["reals"], drift)
    assert sol.objective == pytest.approx(ref.objective, abs=1e-12)


@st.composite
def single_bus_problem(draw):
    mu_c = draw(st.floats(0.5, 1.0))
    mu_d = draw(st.floats(0.5, 1.0))
    spec = StorageSpec(0, 1, -draw(st.floats(0.0, 0.3)), draw(st.floats(0.0, 0.3)),
                       mu_c, mu_d, 1.0)
    model = unmet_demand_cost(draw(st.floats(0.1, 3.0)))
    if mu_c == mu_d == 1.0 and draw(st.booleans()):
        model = balancing_cost(draw(st.floats(0.1, 3.0)), draw(st.floats(0.1, 3.0)))
    real = realize(model, 1, draw(st.floats(-0.5, 0.5)))
    drift = draw(st.floats(-5, 5))
    inflow = draw(st.floats(-0.3, 0.3))
    return spec, model, real, drift, inflow


@given(single_bus_problem())
def test_breakpoint_scan_matches_dense_grid(problem):
    spec, model, real, drift, inflow = problem
    u = minimize_piecewise(model, spec, real, drift, spec.u_min, spec.u_max, inflow)
    grid = np.linspace(spec.u_min, spec.u_max, 20001)
    terms = [(t.kind, t.alpha_delta, t.alpha_c, t.alpha_d, t.alpha_f, c, p)
             for t, c, p in zip(model.terms, real.const, real.p)]
    vals = drift * grid + stage_cost(terms, spec.mu_c, spec.mu_d, real.delta, grid, inflow)
    assert bus_objective(spec, model, real, drift, u, inflow) <= vals.min() + 1e-12
    assert spec.u_min <= u <= spec.u_max


@given(single_bus_problem())
def test_threshold_structure(problem):
    spec, model, real, drift, inflow = problem
    d_lo, d_hi = subderivative_bounds(model, spec)
    u = minimize_piecewise(model, spec, real, drift, spec.u_min, spec.u_max, inflow)
    if drift + d_lo > 1e-9:
        assert u == spec.u_min
    if drift + d_hi < -1e-9:
        assert u == spec.u_max
    assert threshold_violations(spec, model, real, drift, d_lo, d_hi, u, inflow) == 0


@given(st.integers(0, 2**31), st.sampled_from([(2, False), (3, False), (3, True)]))
def test_objective_never_exceeds_idle_dispatch(seed, shape):
    P, _ = make_instance(np.random.default_rng(seed), *shape)
    sol = solve_dispatch(P["storages"], P["models"], P["network"], P["reals"], P["drift"])
    n, m = P["network"].n, P["network"].m
    idle = network_objective(P["storages"], P["models"], P["network"], P["reals"], P["drift"],
                             np.zeros(n), np.zeros(m))
    assert sol.objective <= idle + 1e-9
    assert flow_feasible(P["network"], sol.f)
    for st_, u in zip(P["storages"], sol.u):
        assert st_.u_min <= u <= st_.u_max


@given(st.integers(0, 2**31), st.sampled_from([(2, False), (3, False), (3, True)]))
def test_zero_capacity_network_decouples(seed, shape):
    P, _ = make_instance(np.random.default_rng(seed), *shape)
    net = P["network"]
    closed = build_network(net.edges, net.beta, np.zeros(net.m))
    sol = solve_dispatch(P["storages"], P["models"], closed, P["reals"], P["drift"])
    singles = 0.0
    for st_, model, real, dr in zip(P["storages"], P["models"], P["reals"], P["drift"]):
        u = minimize_piecewise(model, st_, real, dr, st_.u_min, st_.u_max)
        singles += bus_objective(st_, model, real, dr, u)
    assert sol.objective == pytest.approx(singles, abs=1e-9)


@given(single_bus_problem())
def test_one_node_network_equals_breakpoint_scan(problem):
    spec, model, real, drift, _ = problem
    sol = solve_dispatch([spec], [model], single_bus_network(), [real], [drift])
    u = minimize_piecewise(model, spec, real, drift, spec.u_min, spec.u_max)
    assert sol.objective == pytest.approx(bus_objective(spec, model, real, drift, u), abs=1e-9)
