"""Random dispatch instances shared by the online-solver and acceptance tests."""
from __future__ import annotations

import numpy as np

from storagenet import (
    ConstantPrice,
    CostModel,
    CostTerm,
    StorageSpec,
    build_network,
    realize,
)


def make_instance(rng, n_buses, cycle=False):
    """Random 2- or 3-bus instance plus the data the grid oracle needs.

    Each bus penalizes unmet demand and, half the time, also pays a linear
    energy price for charging.  Returns ``(package, oracle)`` dictionaries.
    """
    storages, models, reals, buses = [], [], [], []
    drift = rng.uniform(-2, 2, n_buses)
    for v in range(n_buses):
        u = rng.uniform(0.03, 0.1)
        mu_c, mu_d = rng.uniform(0.8, 1.0, 2)
        st = StorageSpec(0.0, 1.0, -u, rng.uniform(0.03, 0.1), mu_c, mu_d, 1.0)
        q = rng.uniform(1, 3)
        terms = [CostTerm("positive", -1.0, -1.0, -1.0, -1.0, 0.0, ConstantPrice(q))]
        oracle_terms = [("positive", -1.0, -1.0, -1.0, -1.0, 0.0, q)]
        if rng.random() < 0.5:
            p = rng.uniform(0, 1)
            terms.append(CostTerm("linear", 0.0, -1.0, -1.0, 0.0, 0.0, ConstantPrice(p)))
            oracle_terms.append(("linear", 0.0, -1.0, -1.0, 0.0, 0.0, p))
        model = CostModel(tuple(terms))
        delta = rng.uniform(-0.4, 0.4)
        storages.append(st)
        models.append(model)
        reals.append(realize(model, 1, delta))
        buses.append({"drift": drift[v], "u_min": st.u_min, "u_max": st.u_max, "mu_c": mu_c,
                      "mu_d": mu_d, "delta": delta, "terms": oracle_terms})
    if n_buses == 2:
        edges = [(0, 1)]
    elif cycle:
        edges = [(0, 1), (1, 2), (2, 0)]
    else:
        edges = [(0, 1), (1, 2)]
    caps = rng.uniform(0.02, 0.2, len(edges))
    beta = rng.uniform(0.5, 2.0, len(edges))
    net = build_network(edges, beta, caps)
    charts = None
    if cycle:
        # Kirchhoff around the loop (all edges oriented along it): sum f_e / beta_e = 0
        charts = [(free, _loop_chart(beta, free)) for free in ((0, 1), (0, 2), (1, 2))]
        flows_of = charts[0][1]
    else:
        def flows_of(Z):
            return Z
    dof = 1 if n_buses == 2 else 2
    package = {"storages": storages, "models": models, "network": net, "reals": reals,
               "drift": drift}
    oracle = {"buses": buses, "edges": edges, "caps": caps, "flows_of": flows_of, "dof": dof,
              "charts": charts}
    return package, oracle


def _loop_chart(beta, free):
    """Flows on a 3-edge loop from the two flows on edges ``free``."""
    i, j = free
    k = 3 - i - j

    def flows_of(Z):
        F = np.empty((Z.shape[0], 3))
        F[:, i], F[:, j] = Z[:, 0], Z[:, 1]
        F[:, k] = -beta[k] * (Z[:, 0] / beta[i] + Z[:, 1] / beta[j])
        return F
    return flows_of


def two_bus_line(cap, ramp=0.0, q=1.0):
    """Two buses penalizing unmet demand, surplus 0.5 at bus 0 and deficit 0.5 at bus 1."""
    st = StorageSpec(0.0, 1.0, -ramp, ramp)
    model = CostModel((CostTerm("positive", -1.0, -1.0, -1.0, -1.0, 0.0, ConstantPrice(q)),))
    net = build_network([(0, 1)], [1.0], [cap])
    reals = [realize(model, 1, 0.5), realize(model, 1, -0.5)]
    package = {"storages": [st, st], "models": [model, model], "network": net,
               "reals": reals, "drift": np.zeros(2)}
    bus = {"drift": 0.0, "u_min": -ramp, "u_max": ramp, "mu_c": 1.0, "mu_d": 1.0,
           "terms": [("positive", -1.0, -1.0, -1.0, -1.0, 0.0, q)]}
    oracle = {"buses": [{**bus, "delta": 0.5}, {**bus, "delta": -0.5}], "edges": [(0, 1)],
              "caps": np.array([cap]), "flows_of": lambda Z: Z, "dof": 1}
    return package, oracle


def random_connected_graph(rng, n):
    """Random spanning tree plus random extra edges (parallel edges allowed)."""
    order = rng.permutation(n)
    edges = [(int(order[k]), int(order[rng.integers(0, k)])) for k in range(1, n)]
    for _ in range(rng.integers(0, 2 * n)):
        a, b = rng.choice(n, size=2, replace=False)
        edges.append((int(a), int(b)))
    return edges
