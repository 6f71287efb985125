"""DC network model: incidence matrix, KVL matrix and flow feasibility.

Flows live in the range of ``H = diag(beta) A``; the rows of ``K`` span the
nullspace of ``H^T`` so that ``K f = 0`` characterizes DC-feasible flows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.sparse.csgraph import connected_components

from .exceptions import DisconnectedNetworkError, InvalidAdmittanceError, NetworkError, SelfLoopError

FLOW_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PowerNetwork:
    n: int
    edges: tuple
    beta: np.ndarray
    f_max: np.ndarray
    incidence: np.ndarray = field(repr=False)
    k_matrix: np.ndarray = field(repr=False)

    @property
    def m(self):
        return len(self.edges)

    @property
    def is_tree(self):
        return self.k_matrix.shape[0] == 0

    @property
    def inflow_matrix(self):
        """``n x m`` matrix mapping a flow vector to per-bus net inflow."""
        return -self.incidence.T


def _rref_rows(M, tol=1e-12):
    """Reduced row echelon form of ``M``; unique for the row space of ``M``."""
    R = np.array(M, dtype=float)
    rows, cols = R.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[p, c]) <= tol:
            continue
        R[[r, p]] = R[[p, r]]
        R[r] /= R[r, c]
        for i in range(rows):
            if i != r:
                R[i] -= R[i, c] * R[r]
        r += 1
    return R[:r]


def _canonical_basis(N):
    """Orthonormal, sign-canonical basis for the column space of ``N``.

    The column space is first reduced to echelon form, which does not depend
    on the particular basis the SVD returned, then orthonormalized in order.
    """
    if N.shape[1] == 0:
        return np.zeros((0, N.shape[0]))
    E = _rref_rows(N.T)
    Q, _ = np.linalg.qr(E.T)
    K = Q.T.copy()
    for row in K:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return K


def build_network(edges, beta, f_max, n=None) -> PowerNetwork:
    """Build a network from an edge list of ``(from_bus, to_bus)`` pairs.

    Buses are integers ``0..n-1``; ``n`` defaults to one past the largest bus
    index (or 1 with no edges).  Parallel edges are allowed, self-loops are
    not.
    """
    edges = tuple((int(a), int(b)) for a, b in edges)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    f_max = np.asarray(f_max, dtype=float).reshape(-1)
    m = len(edges)
    if beta.size != m or f_max.size != m:
        raise NetworkError(f"expected {m} admittances and capacities, "
                           f"got {beta.size} and {f_max.size}")
    if n is None:
        n = 1 + max((max(e) for e in edges), default=0)
    if n < 1:
        raise NetworkError("a network needs at least one bus")
    for e, (a, b) in enumerate(edges):
        if a == b:
            raise SelfLoopError(f"edge {e} is a self-loop at bus {a}")
        if not (0 <= a < n and 0 <= b < n):
            raise NetworkError(f"edge {e} = ({a}, {b}) references an unknown bus")
    if np.any(~np.isfinite(beta)) or np.any(beta <= 0):
        raise InvalidAdmittanceError(f"admittances must be positive, got {beta.tolist()}")
    if np.any(~np.isfinite(f_max)) or np.any(f_max < 0):
        raise NetworkError(f"capacities must be finite and >= 0, got {f_max.tolist()}")

    A = np.zeros((m, n))
    for e, (a, b) in enumerate(edges):
        A[e, a] = 1.0
        A[e, b] = -1.0
    adj = np.zeros((n, n))
    for a, b in edges:
        adj[a, b] = adj[b, a] = 1.0
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise DisconnectedNetworkError(f"network has {ncomp} connected components")

    H = beta[:, None] * A
    if m == n - 1:
        K = np.zeros((0, m))
    else:
        N = null_space(H.T) if n > 0 else np.eye(m)
        if N.shape[1] != m - n + 1:
            raise NetworkError(f"nullspace dimension {N.shape[1]} != m - n + 1 = {m - n + 1}")
        K = _canonical_basis(N)
    return PowerNetwork(n=n, edges=edges, beta=beta, f_max=f_max, incidence=A, k_matrix=K)


def single_bus_network() -> PowerNetwork:
    return build_network([], [], [], n=1)


def kvl_residual(net: PowerNetwork) -> float:
    """``max |K H|``, zero up to round-off for a correct ``K``."""
    if net.k_matrix.size == 0:
        return 0.0
    H = net.beta[:, None] * net.incidence
    return float(np.max(np.abs(net.k_matrix @ H)))


def flow_feasible(net: PowerNetwork, f, tol=FLOW_TOL) -> bool:
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != net.m:
        raise NetworkError(f"flow has {f.size} entries, network has {net.m} edges")
    if np.any(np.abs(f) > net.f_max + tol):
        return False
    if net.k_matrix.shape[0] and np.max(np.abs(net.k_matrix @ f)) > tol:
        return False
    return True


def net_inflow(net: PowerNetwork, f, v=None):
    """Net inflow at bus ``v`` (or the vector over all buses when ``v`` is None)."""
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != net.m:
        raise NetworkError(f"flow has {f.size} entries, network has {net.m} edges")
    inflow = net.inflow_matrix @ f if net.m else np.zeros(net.n)
    if v is None:
        return inflow
    if not 0 <= v < net.n:
        raise NetworkError(f"unknown bus {v}")
    return float(inflow[v])
