"""Branching-process side of the graph/tree coupling.

A tree is grown from attribute triples ``(N, D, U)``: the root draws
``(N, D)`` uniformly from the non-hubs, every other node draws from the
in-degree-biased law ``f_n``, and only non-hub nodes reproduce. Weights
``mu^`` follow ``mu^(child) = mu^(parent) (1 - alpha) U_parent / D_parent``
and ``X_j`` sums ``U mu^`` over generation ``j``.

:func:`simultaneous_construct` grows a tree in lockstep with the
breadth-first configuration-model construction until the coupling breaks
(``tau_s``); before that the graph-side discounted occupancy equals the
tree-side ``sum_j X_j`` exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import check_alpha
from .dcm import (LABEL_A, LABEL_C, LABEL_D, ConstructionTrace, DegreeSequence, _GraphBuild,
                  _PairingContext, _draw_source, construct_dcm)
from .errors import TreeExplodedError
from .graph import HubPartition
from .kstest import ks_2samp
from .ppr import mu_truncated
from .sampling import AliasTable

logger = logging.getLogger(__name__)

DEFAULT_NODE_CAP = 10_000_000


@dataclass(frozen=True, eq=False)
class AttributeDistributions:
    """Empirical attribute laws of a degree sequence and hub indicator.

    Attributes
    ----------
    triples : ndarray, shape (k, 3)
        Support ``(N, D, U)`` of ``f_n``.
    f_n : ndarray, shape (k,)
        Probabilities proportional to total in-degree of each triple.
    pairs : ndarray, shape (k*, 2)
        Support ``(N, D)`` of ``f_n_star``.
    f_n_star : ndarray, shape (k*,)
        Probabilities proportional to the number of non-hubs with each pair.
    """

    triples: np.ndarray
    f_n: np.ndarray
    pairs: np.ndarray
    f_n_star: np.ndarray
    p_hat: float
    _table: AliasTable = field(repr=False, default=None)
    _table_star: AliasTable = field(repr=False, default=None)

    def sample_f(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` triples from ``f_n`` as an ``(size, 3)`` array."""
        return self.triples[self._table.sample(rng, size)]

    def sample_f_star(self, rng: np.random.Generator) -> tuple[int, int]:
        i = int(self._table_star.sample(rng, 1)[0])
        return int(self.pairs[i, 0]), int(self.pairs[i, 1])


def build_distributions(deg: DegreeSequence, hubs: HubPartition) -> AttributeDistributions:
    """Exact empirical ``f_n`` and ``f_n_star``.

    Raises
    ------
    ValueError
        If there are no stubs or no non-hubs.
    """
    if hubs.n != deg.n:
        raise ValueError("hub partition and degree sequence differ in length")
    N, D, U = deg.in_degrees, deg.out_degrees, hubs.indicator.astype(np.int64)
    if deg.total == 0:
        raise ValueError("f_n needs at least one stub")
    if U.sum() == 0:
        raise ValueError("f_n_star needs at least one non-hub")
    rows = np.column_stack([N, D, U])
    triples, inv = np.unique(rows, axis=0, return_inverse=True)
    inv = inv.ravel()
    w = np.bincount(inv, weights=N, minlength=triples.shape[0])
    keep = w > 0
    triples, f = triples[keep], w[keep] / deg.total
    nh = U == 1
    pairs, inv_s = np.unique(rows[nh, :2], axis=0, return_inverse=True)
    f_star = np.bincount(inv_s.ravel(), minlength=pairs.shape[0]) / nh.sum()
    p_hat = float((U * N).sum() / deg.total)
    return AttributeDistributions(triples, f, pairs, f_star, p_hat, AliasTable(f), AliasTable(f_star))


class _TreeArena:
    """Growable tree stored generation by generation."""

    def __init__(self, root_n, root_d, root_u, cap):
        self.parent = [-1]
        self.ordinal = [0]
        self.N, self.D, self.U = [int(root_n)], [int(root_d)], [int(root_u)]
        self.gen_start = [0, 1]
        self.cap = cap

    def __len__(self):
        return len(self.parent)

    def add(self, parent, ordinal, n, d, u):
        self.parent.append(parent)
        self.ordinal.append(ordinal)
        self.N.append(n)
        self.D.append(d)
        self.U.append(u)

    def add_sampled(self, parents, first_ordinal, counts, dist, rng, generation):
        """Give ``counts[i]`` f_n-sampled children to ``parents[i]``."""
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        if total == 0:
            return
        if len(self) + total > self.cap:
            raise TreeExplodedError(f"tree exceeded {self.cap} nodes in generation {generation}",
                                    generation, len(self) + total)
        attrs = dist.sample_f(rng, total)
        starts = np.cumsum(counts) - counts
        ords = np.arange(total) - np.repeat(starts, counts) + np.repeat(first_ordinal, counts)
        self.parent.extend(np.repeat(parents, counts).tolist())
        self.ordinal.extend(ords.tolist())
        self.N.extend(attrs[:, 0].tolist())
        self.D.extend(attrs[:, 1].tolist())
        self.U.extend(attrs[:, 2].tolist())

    def close_generation(self):
        self.gen_start.append(len(self))

    def expand_alg2(self, lo, hi, dist, rng, generation):
        """Algorithm-2 offspring for nodes ``lo..hi-1``: ``D`` children iff ``U = 1``."""
        idx = np.arange(lo, hi)
        U = np.asarray(self.U[lo:hi], dtype=bool)
        D = np.asarray(self.D[lo:hi], dtype=np.int64)
        sel = U & (D > 0)
        self.add_sampled(idx[sel], np.ones(int(sel.sum()), dtype=np.int64), D[sel], dist, rng, generation)

    def freeze(self, max_depth) -> "GenerationTree":
        arr = lambda a: np.asarray(a, dtype=np.int64)  # noqa: E731
        return GenerationTree(arr(self.parent), arr(self.ordinal), arr(self.N), arr(self.D),
                              arr(self.U).astype(bool), arr(self.gen_start[:max_depth + 2]), max_depth)


@dataclass(frozen=True, eq=False)
class GenerationTree:
    """Tree in arena form: node ``i`` has ``parent[i]`` and child ``ordinal[i]``.

    Generation ``j`` occupies indices ``gen_start[j]:gen_start[j + 1]``.
    Path labels are materialized on demand by :meth:`label`.
    """

    parent: np.ndarray
    ordinal: np.ndarray
    N: np.ndarray
    D: np.ndarray
    U: np.ndarray
    gen_start: np.ndarray
    max_depth: int

    @property
    def size(self) -> int:
        return int(self.parent.size)

    def generation(self, j: int) -> np.ndarray:
        return np.arange(self.gen_start[j], self.gen_start[j + 1])

    def label(self, i: int) -> tuple:
        path = []
        while i > 0:
            path.append(int(self.ordinal[i]))
            i = int(self.parent[i])
        return tuple(reversed(path))

    def labels(self) -> dict:
        """Every node's path label mapped to its ``(N, D, U)`` attributes."""
        return {self.label(i): (int(self.N[i]), int(self.D[i]), int(self.U[i])) for i in range(self.size)}


@dataclass(frozen=True, eq=False)
class TreeWeights:
    """``mu^`` per arena node and ``X_j`` per generation."""

    mu_hat: np.ndarray
    per_generation: np.ndarray


@dataclass(frozen=True, eq=False)
class CouplingRun:
    """One simultaneous graph/tree construction.

    ``phi_map`` sends graph nodes to tree arena indices; use
    ``tree_side.label`` for path labels.
    """

    graph_side: ConstructionTrace
    tree_side: GenerationTree
    tree_weights: TreeWeights
    phi_map: dict
    tau_s: float
    source: int

    def phi_label(self, v: int) -> tuple:
        return self.tree_side.label(self.phi_map[v])


@dataclass
class CouplingReport:
    """Two-sample comparison of graph-side and tree-side occupancies."""

    statistic: float
    pvalue: float
    method: str
    graph_runs: int
    conditioned_samples: int
    tree_samples: int
    rejection_rate: float
    too_few_samples: bool
    graph_values: np.ndarray
    tree_values: np.ndarray
    m: int
    alpha: float

    def as_dict(self) -> dict:
        return {
            "ks_statistic": self.statistic, "p_value": self.pvalue, "method": self.method,
            "graph_runs": self.graph_runs, "conditioned_samples": self.conditioned_samples,
            "tree_samples": self.tree_samples, "conditioning_rejection_rate": self.rejection_rate,
            "too_few_conditioned_samples": self.too_few_samples, "m": self.m, "alpha": self.alpha,
        }


def tree_weights(tree: GenerationTree, alpha: float) -> TreeWeights:
    """``mu^`` by the parent recursion and ``X_j = sum U mu^`` per generation."""
    alpha = check_alpha(alpha)
    mu = np.zeros(tree.size)
    mu[0] = 1.0
    D = np.maximum(tree.D, 1).astype(np.float64)
    factor = (1.0 - alpha) * tree.U / D
    for j in range(1, tree.gen_start.size - 1):
        idx = tree.generation(j)
        par = tree.parent[idx]
        mu[idx] = mu[par] * factor[par]
    X = np.array([float((mu[tree.generation(j)] * tree.U[tree.generation(j)]).sum())
                  for j in range(tree.gen_start.size - 1)])
    return TreeWeights(mu, X)


def grow_tree(dist: AttributeDistributions, alpha: float, m: int, seed=None,
              node_cap: int = DEFAULT_NODE_CAP) -> tuple[GenerationTree, TreeWeights]:
    """Grow a tree to depth ``m``; only non-hub nodes get offspring.

    Raises
    ------
    TreeExplodedError
        If the tree would exceed ``node_cap`` nodes.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    rng = np.random.default_rng(seed)
    rn, rd = dist.sample_f_star(rng)
    arena = _TreeArena(rn, rd, 1, node_cap)
    for j in range(1, m + 1):
        arena.expand_alg2(arena.gen_start[j - 1], arena.gen_start[j], dist, rng, j)
        arena.close_generation()
    tree = arena.freeze(m)
    return tree, tree_weights(tree, alpha)


def tail_quantity(weights: TreeWeights, alpha: float, m: int) -> float:
    """``alpha * sum_{j=1}^{m-1} X_j + X_m``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    X = weights.per_generation
    if X.size <= m:
        raise ValueError(f"weights cover depth {X.size - 1}, need {m}")
    return float(alpha * X[1:m].sum() + X[m])


def simultaneous_construct(deg: DegreeSequence, hubs: HubPartition, alpha: float, m: int,
                           seed=None, complete_graph: bool = True,
                           node_cap: int = DEFAULT_NODE_CAP,
                           _ctx: _PairingContext | None = None,
                           _dist: AttributeDistributions | None = None) -> CouplingRun:
    """Build a graph and a tree together until the coupling breaks.

    Parameters
    ----------
    deg, hubs
        Degree sequence and hub indicator; the source is a uniform non-hub.
    alpha : float
    m : int
        Depth of the tree and number of lockstep iterations.
    seed : int, Generator or None
    complete_graph : bool
        Pair every remaining stub after the lockstep phase. If False the
        graph stops after iteration ``m``, which is all the depth-``m``
        occupancy needs.

    Returns
    -------
    CouplingRun
        ``tau_s`` is the iteration of the first draw that either hit a
        paired instub or joined a ``D`` node to a ``C``/``D`` node, or
        ``math.inf``.
    """
    alpha = check_alpha(alpha)
    if m < 0:
        raise ValueError("m must be non-negative")
    ctx = _ctx if _ctx is not None else _PairingContext(deg, hubs)
    dist = _dist if _dist is not None else build_distributions(deg, hubs)
    rng = np.random.default_rng(seed)
    s = _draw_source(ctx, "uniform_non_hub", rng)
    gb = _GraphBuild(ctx, s, rng)
    arena = _TreeArena(ctx.N[s], ctx.D[s], ctx.U[s], node_cap)
    phi = {s: 0}
    mapped = {0}
    tau = math.inf
    labels, owner, Dg = gb.labels, ctx.owner_list, ctx.D
    broke_at = None
    exhausted = False

    for mm in range(1, m + 1):
        prev = gb.layers[mm - 1]
        for pos, vp in enumerate(prev):
            i = phi[vp]
            for j in range(Dg[vp]):
                e = gb.draw()
                v = owner[e]
                gv = labels.get(v, LABEL_A)
                if e in gb.paired or (labels[vp] == LABEL_D and gv in (LABEL_C, LABEL_D)):
                    tau = mm
                    gb.m, gb.pos, gb.j, gb.pending = mm, pos, j, e
                    broke_at = (mm, pos, j, i)
                    break
                gb.pair(vp, e, mm)
                if gv == LABEL_A:
                    phi[v] = len(arena)
                    mapped.add(len(arena))
                arena.add(i, j + 1, ctx.N[v], ctx.D[v], int(ctx.U[v]))
            if broke_at:
                break
        if broke_at:
            break
        if gb.finished:
            arena.close_generation()
            break
        # offspring for tree nodes of the previous generation with no preimage
        lo, hi = arena.gen_start[mm - 1], arena.gen_start[mm]
        free = np.array([t for t in range(lo, hi) if t not in mapped], dtype=np.int64)
        if free.size:
            counts = np.asarray(arena.D, dtype=np.int64)[free]
            arena.add_sampled(free, np.ones(free.size, dtype=np.int64), counts, dist, rng, mm)
        arena.close_generation()
        if not gb.layers[mm]:
            exhausted = True
        gb.layers.append([])
        gb.m, gb.pos, gb.j = mm + 1, 0, 0

    if broke_at:
        mm, pos, j, i = broke_at
        # finish generation mm as in the plain tree construction
        if arena.U[i] and arena.D[i] > j:
            arena.add_sampled(np.array([i]), np.array([j + 1]), np.array([arena.D[i] - j]), dist, rng, mm)
        rest = np.array([phi[v] for v in gb.layers[mm - 1][pos + 1:]], dtype=np.int64)
        lo, hi = arena.gen_start[mm - 1], arena.gen_start[mm]
        free = np.array([t for t in range(lo, hi) if t not in mapped], dtype=np.int64)
        parents = np.concatenate([rest, free])
        if parents.size:
            U = np.asarray(arena.U, dtype=bool)[parents]
            D = np.asarray(arena.D, dtype=np.int64)[parents]
            sel = U & (D > 0)
            arena.add_sampled(parents[sel], np.ones(int(sel.sum()), dtype=np.int64), D[sel], dist, rng, mm)
        arena.close_generation()
        for jj in range(mm + 1, m + 1):
            arena.expand_alg2(arena.gen_start[jj - 1], arena.gen_start[jj], dist, rng, jj)
            arena.close_generation()
    while len(arena.gen_start) < m + 2:
        arena.close_generation()

    if complete_graph and not gb.finished:
        if exhausted and broke_at is None:
            gb._pair_unreached()
        else:
            gb.run()
    elif not complete_graph and broke_at is not None:
        gb.run(max_depth=m)
    tree = arena.freeze(m)
    return CouplingRun(gb.trace(), tree, tree_weights(tree, alpha), phi, tau, s)


def coupling_distribution_check(deg: DegreeSequence, hubs: HubPartition, alpha: float, m: int,
                                runs: int, seed=None, min_fraction: float = 0.5
                                ) -> CouplingReport:
    """Compare graph-side and tree-side depth-``m`` occupancies.

    The graph side keeps ``mu_s^(m)(V \\ K)`` from independent
    breadth-first constructions (non-hub source) with ``tau_g > m``; the
    tree side collects ``sum_{j<=m} X_j`` from independent trees. Runs with
    ``tau_g <= m`` are discarded, not reweighted.

    Parameters
    ----------
    runs : int
        Constructions per side, at least 100.
    min_fraction : float
        Below this share of retained graph runs the report sets
        ``too_few_samples``.
    """
    alpha = check_alpha(alpha)
    if runs < 100:
        raise ValueError("runs must be at least 100")
    ctx = _PairingContext(deg, hubs)
    dist = build_distributions(deg, hubs)
    g_streams, t_streams = np.random.SeedSequence(seed).spawn(2)
    graph_vals = []
    for ss in g_streams.spawn(runs):
        tr = construct_dcm(deg, hubs, "uniform_non_hub", seed=np.random.default_rng(ss),
                           max_depth=m, _ctx=ctx)
        if tr.tau_g > m:
            graph_vals.append(mu_truncated(tr.graph, hubs, tr.source, alpha, m)[0])
    tree_vals = []
    for ss in t_streams.spawn(runs):
        _, w = grow_tree(dist, alpha, m, np.random.default_rng(ss))
        tree_vals.append(float(w.per_generation[:m + 1].sum()))
    graph_vals = np.asarray(graph_vals)
    tree_vals = np.asarray(tree_vals)
    kept = graph_vals.size
    if kept == 0:
        logger.warning("no graph run survived conditioning on tau_g > %d", m)
        return CouplingReport(float("nan"), float("nan"), "none", runs, 0, runs, 1.0, True,
                              graph_vals, tree_vals, m, alpha)
    res = ks_2samp(graph_vals, tree_vals)
    return CouplingReport(res.statistic, res.pvalue, res.method, runs, kept, runs,
                          1.0 - kept / runs, kept < min_fraction * runs, graph_vals, tree_vals, m, alpha)


def coupling_break_rate(deg: DegreeSequence, hubs: HubPartition, alpha: float, m: int, runs: int,
                        seed=None) -> float:
    """Share of simultaneous constructions with ``tau_s <= m``."""
    ctx = _PairingContext(deg, hubs)
    dist = build_distributions(deg, hubs)
    breaks = 0
    for ss in np.random.SeedSequence(seed).spawn(runs):
        run = simultaneous_construct(deg, hubs, alpha, m, np.random.default_rng(ss),
                                     complete_graph=False, _ctx=ctx, _dist=dist)
        breaks += run.tau_s <= m
    return breaks / runs


def lemma1_constant(delta: float, p: float, zeta: float, rho: float, tau: float,
                    epsilon: float) -> tuple[float, str]:
    """Exponent ``c(epsilon)`` of the dimensionality tail bound.

    ``c = min(delta, ln(1/p) / (2 ln(zeta/p)),
    ((1 - p) epsilon)^2 / (2 rho ln(1/tau) ln(zeta)))``.

    Returns
    -------
    c : float
    branch : {"delta", "growth", "tail"}
        The term attaining the minimum (first one on ties).
    """
    if not 0 < delta < 1 or not 0 < p < 1 or zeta <= 1 or rho <= 1 or not 0 < tau < 1 or epsilon <= 0:
        raise ValueError("need delta, p, tau in (0, 1), zeta > 1, rho > 1 and epsilon > 0")
    terms = {
        "delta": float(delta),
        "growth": math.log(1 / p) / (2 * math.log(zeta / p)),
        "tail": ((1 - p) * epsilon) ** 2 / (2 * rho * math.log(1 / tau) * math.log(zeta)),
    }
    branch = min(terms, key=terms.get)
    return terms[branch], branch
