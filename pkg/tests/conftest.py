"""Shared fixtures and independent dense oracles.

The oracles rebuild the transition matrix from the edge list with plain
numpy and solve the PPR fixed points by dense linear algebra, so they share
no code path with the sparse power iterations under test.
"""

from __future__ import annotations

import numpy as np
import pytest

from pprhub.graph import HubPartition, build_from_pairs


def dense_transition(g) -> np.ndarray:
    """Row-stochastic ``P`` with a self-loop on dangling nodes."""
    n = g.node_count
    P = np.zeros((n, n))
    for u, w in g.edges():
        P[u, w] += 1.0
    rows = P.sum(axis=1)
    for u in range(n):
        if rows[u] == 0:
            P[u, u] = 1.0
        else:
            P[u] /= rows[u]
    return P


def dense_ppr(g, v: int, alpha: float) -> np.ndarray:
    """``pi = alpha e_v (I - (1 - alpha) P)^{-1}``."""
    n = g.node_count
    P = dense_transition(g)
    e = np.zeros(n)
    e[v] = 1.0
    return np.linalg.solve((np.eye(n) - (1 - alpha) * P).T, alpha * e)


def dense_ppr_all(g, alpha: float) -> np.ndarray:
    """Row ``v`` is ``pi_v``."""
    n = g.node_count
    P = dense_transition(g)
    return alpha * np.linalg.inv(np.eye(n) - (1 - alpha) * P)


def dense_hub_restricted(g, hubs: HubPartition, v: int, alpha: float) -> np.ndarray:
    """Stationary law of the chain that jumps to ``v`` from every hub."""
    n = g.node_count
    P = dense_transition(g)
    Pv = P.copy()
    for k in hubs.hub_list:
        Pv[k] = 0.0
        Pv[k, v] = 1.0
    e = np.zeros(n)
    e[v] = 1.0
    return np.linalg.solve((np.eye(n) - (1 - alpha) * Pv).T, alpha * e)


def exact_estimation_error(g, hubs: HubPartition, v: int, alpha: float, pis=None) -> float:
    """``||pi_v - alpha e_v - sum_k beta_v(k) pi_k||_1`` by dense solves."""
    pis = dense_ppr_all(g, alpha) if pis is None else pis
    pt = dense_hub_restricted(g, hubs, v, alpha)
    h = pt[hubs.hub_list].sum()
    denom = alpha + (1 - alpha) * h
    est = alpha * np.eye(g.node_count)[v]
    for k in hubs.hub_list:
        est = est + pt[k] / denom * pis[k]
    return float(np.abs(pis[v] - est).sum())


def random_multigraph(rng: np.random.Generator, n: int, mean_degree: float = 2.5,
                      dangling: float = 0.1):
    """Random multigraph with self-loops, multi-edges and some dangling nodes."""
    D = rng.poisson(mean_degree, size=n)
    D[rng.random(n) < dangling] = 0
    src = np.repeat(np.arange(n), D)
    dst = rng.integers(0, n, size=src.size)
    return build_from_pairs(np.column_stack([src, dst]), n)


def random_hubs(rng: np.random.Generator, n: int, low: int = 1, high: int | None = None) -> HubPartition:
    high = max(low, n // 3) if high is None else high
    k = int(rng.integers(low, high + 1))
    return HubPartition.from_hubs(rng.choice(n, size=k, replace=False), n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
