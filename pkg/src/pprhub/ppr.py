"""Personalized PageRank solvers.

``pi_v`` is the fixed point of ``x = alpha e_v + (1 - alpha) x P``. Forward
power iteration contracts the l1 distance to it by ``1 - alpha`` per step,
so the returned residual ``r`` certifies ``||x - pi_v||_1 <= r / alpha``.

The hub-restricted vector ``pi~_v`` is the stationary law of the walk that,
on top of the alpha-restart, jumps back to ``v`` whenever it stands on a
hub. It is computed with the masked operator ``P~`` (hub rows zeroed) plus
a restart term instead of materializing the dense restart column.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import ceil_guarded, check_alpha
from .errors import ConvergenceError
from .graph import DANGLING_POLICY, DirectedMultigraph, HubPartition

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class PprVector:
    """A PPR vector with its convergence record.

    Attributes
    ----------
    values : ndarray of float64
    alpha : float
    owner : int
    iterations : int
    residual : float
        ``||values - alpha e_v - (1 - alpha) values P||_1``.
    stderr : ndarray, optional
        Per-coordinate standard error, set by the Monte Carlo estimator.
    metadata : dict
    """

    values: np.ndarray
    alpha: float
    owner: int
    iterations: int
    residual: float
    stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def error_bound(self) -> float:
        """Upper bound on ``||values - pi_v||_1``."""
        return self.residual / self.alpha


@dataclass(frozen=True, eq=False)
class HubRestrictedPpr:
    """Hub-restricted PPR vector ``pi~_v`` and its hub mass."""

    values: np.ndarray
    hub_mass: float
    owner: int
    alpha: float
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True)
class AlphaSchedule:
    """Restart probability as a function of graph size.

    Parameters
    ----------
    mode : {"log_inverse", "claim1", "constant"}
        ``1 / ln n``; ``rho ln(1/tau) ln(zeta) / ln n``; or the fixed ``a``.
    a, rho, tau, zeta : float, optional
        Parameters of the chosen mode.
    """

    mode: str = "log_inverse"
    a: float | None = None
    rho: float | None = None
    tau: float | None = None
    zeta: float | None = None

    def __post_init__(self):
        if self.mode == "constant":
            if self.a is None:
                raise ValueError("constant schedule needs a")
            check_alpha(self.a)
        elif self.mode == "claim1":
            if None in (self.rho, self.tau, self.zeta):
                raise ValueError("claim1 schedule needs rho, tau and zeta")
            if not 0 < self.tau < 1 or self.zeta <= 1 or self.rho <= 0:
                raise ValueError("claim1 schedule needs 0 < tau < 1, zeta > 1, rho > 0")
        elif self.mode != "log_inverse":
            raise ValueError(f"unknown alpha mode {self.mode!r}")

    def value(self, n: int) -> float:
        """``alpha_n``; raises ValueError if it falls outside (0, 1)."""
        if self.mode == "constant":
            return float(self.a)
        if n < 2:
            raise ValueError("alpha schedule needs n >= 2")
        if self.mode == "log_inverse":
            alpha = 1.0 / math.log(n)
        else:
            alpha = self.rho * math.log(1.0 / self.tau) * math.log(self.zeta) / math.log(n)
        if not 0 < alpha < 1:
            raise ValueError(f"{self.mode} schedule gives alpha = {alpha:.4g} at n = {n}, outside (0, 1)")
        return alpha


def _check_node(g: DirectedMultigraph, v: int) -> int:
    v = int(v)
    if not 0 <= v < g.node_count:
        raise ValueError(f"node {v} out of range [0, {g.node_count})")
    return v


def _power_iterate(op_t, src, x, alpha, tol, max_iter, hub_idx=None):
    """Iterate ``x <- alpha e_src + (1 - alpha)(op x [+ hub mass on src])``.

    Works on a single vector (``src`` an int) or on the columns of a matrix
    (``src[c]`` the restart row of column ``c``). Returns the final iterate,
    the iteration count and the per-column residual of the returned iterate.
    """
    pos = src if x.ndim == 1 else (np.asarray(src), np.arange(len(src)))
    buf = np.empty_like(x)
    it = 0
    while True:
        y = op_t @ x
        if hub_idx is not None:
            y[pos] += x[hub_idx].sum(axis=0)
        y *= 1.0 - alpha
        y[pos] += alpha
        np.subtract(y, x, out=buf)
        res = np.abs(buf, out=buf).sum(axis=0)
        if np.all(res <= tol) or it >= max_iter:
            return x, it, res
        x = y
        it += 1


def ppr_exact(g: DirectedMultigraph, v: int, alpha: float, tol: float = 1e-10,
              max_iter: int = DEFAULT_MAX_ITER) -> PprVector:
    """Power-iteration PPR vector of ``v``.

    Parameters
    ----------
    g : DirectedMultigraph
    v : int
    alpha : float
        Restart probability in (0, 1).
    tol : float
        Target l1 residual.
    max_iter : int

    Returns
    -------
    PprVector

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations leave the residual above ``tol``; the
        exception carries the last iterate.

    Examples
    --------
    >>> from pprhub.graph import build_from_pairs
    >>> g = build_from_pairs([(0, 1), (1, 2), (2, 0)], 3)
    >>> np.round(ppr_exact(g, 0, 0.5).values * 7, 6).tolist()
    [4.0, 2.0, 1.0]
    """
    alpha = check_alpha(alpha)
    v = _check_node(g, v)
    if tol <= 0:
        raise ValueError("tol must be positive")
    e = np.zeros(g.node_count)
    e[v] = 1.0
    x, it, res = _power_iterate(g.transition_t, v, e, alpha, tol, max_iter)
    out = PprVector(x, alpha, v, it, float(res), metadata={"dangling": DANGLING_POLICY})
    if res > tol:
        raise ConvergenceError(f"PPR of node {v} did not reach tol {tol:g} in {max_iter} iterations "
                               f"(residual {float(res):.3g})", out)
    return out


def ppr_exact_many(g: DirectedMultigraph, sources, alpha: float, tol: float = 1e-10,
                   max_iter: int = DEFAULT_MAX_ITER, block: int = 64) -> np.ndarray:
    """PPR vectors of several sources, one row each.

    Sources are solved in column blocks of size ``block`` with sparse
    matrix-matrix products.

    Returns
    -------
    ndarray, shape (len(sources), n)
    """
    alpha = check_alpha(alpha)
    sources = np.asarray(sources, dtype=np.int64)
    out = np.empty((sources.size, g.node_count))
    for start in range(0, sources.size, block):
        chunk = sources[start:start + block]
        out[start:start + chunk.size] = _solve_block(g.transition_t, chunk, g.node_count,
                                                     alpha, tol, max_iter, None).T
    return out


def _solve_block(op_t, chunk, n, alpha, tol, max_iter, hub_idx):
    E = np.zeros((n, chunk.size))
    E[chunk, np.arange(chunk.size)] = 1.0
    X, it, res = _power_iterate(op_t, chunk, E, alpha, tol, max_iter, hub_idx)
    if np.any(res > tol):
        raise ConvergenceError(f"block solve did not reach tol {tol:g} in {max_iter} iterations")
    return X


def ppr_hub_restricted(g: DirectedMultigraph, hubs: HubPartition, v: int, alpha: float,
                       tol: float = 1e-10, max_iter: int = DEFAULT_MAX_ITER) -> HubRestrictedPpr:
    """Hub-restricted PPR vector ``pi~_v`` of a non-hub ``v``.

    Iterates ``x <- alpha e_v + (1 - alpha)(x P~ + x(K) e_v)``, a
    ``(1 - alpha)``-contraction whose fixed point is the stationary law of
    the chain that restarts at ``v`` on every hub visit.

    Raises
    ------
    ValueError
        If ``v`` is a hub.
    ConvergenceError
        As for :func:`ppr_exact`.
    """
    alpha = check_alpha(alpha)
    v = _check_node(g, v)
    if hubs.n != g.node_count:
        raise ValueError("hub partition and graph sizes differ")
    if hubs.is_hub(v):
        raise ValueError(f"node {v} is a hub; the hub-restricted vector needs a non-hub")
    e = np.zeros(g.node_count)
    e[v] = 1.0
    x, it, res = _power_iterate(g.masked_transition_t(hubs), v, e, alpha, tol, max_iter,
                                hubs.hub_list)
    out = HubRestrictedPpr(x, float(x[hubs.hub_list].sum()), v, alpha, it, float(res))
    if res > tol:
        raise ConvergenceError(f"hub-restricted PPR of node {v} did not reach tol {tol:g}", out)
    return out


def ppr_hub_restricted_many(g: DirectedMultigraph, hubs: HubPartition, sources, alpha: float,
                            tol: float = 1e-10, max_iter: int = DEFAULT_MAX_ITER,
                            block: int = 64):
    """Block version of :func:`ppr_hub_restricted`; yields one result per source."""
    alpha = check_alpha(alpha)
    sources = np.asarray(sources, dtype=np.int64)
    if sources.size and not hubs.indicator[sources].all():
        raise ValueError("hub-restricted vectors need non-hub sources")
    op_t = g.masked_transition_t(hubs)
    for start in range(0, sources.size, block):
        chunk = sources[start:start + block]
        X = _solve_block(op_t, chunk, g.node_count, alpha, tol, max_iter, hubs.hub_list)
        masses = X[hubs.hub_list].sum(axis=0)
        for col, v in enumerate(chunk):
            yield HubRestrictedPpr(X[:, col].copy(), float(masses[col]), int(v), alpha)


def mu_truncated(g: DirectedMultigraph, hubs: HubPartition, s: int, alpha: float, m: int
                 ) -> tuple[float, float]:
    """Discounted non-hub occupancy of the hub-avoiding walk up to ``m`` steps.

    Returns
    -------
    mass : float
        ``sum_{j=0}^{m} (1 - alpha)^j e_s P~^j 1_{V \\ K}``.
    tail : float
        ``(1 - alpha)^m e_s P~^m 1_{V \\ K}``.
    """
    alpha = check_alpha(alpha)
    s = _check_node(g, s)
    if m < 0:
        raise ValueError("m must be non-negative")
    if hubs.is_hub(s):
        raise ValueError(f"node {s} is a hub")
    op_t = g.masked_transition_t(hubs)
    keep = hubs.indicator
    y = np.zeros(g.node_count)
    y[s] = 1.0
    mass = tail = 1.0
    for _ in range(m):
        y = (1.0 - alpha) * (op_t @ y)
        tail = float(y[keep].sum())
        mass += tail
    return mass, tail


def bfs_ball(g: DirectedMultigraph, s: int, radius: int) -> np.ndarray:
    """Nodes within ``radius`` out-steps of ``s``, as a boolean mask."""
    seen = np.zeros(g.node_count, dtype=bool)
    seen[s] = True
    frontier = np.array([s], dtype=np.int64)
    P = g.transition
    for _ in range(radius):
        if frontier.size == 0:
            break
        nbrs = np.unique(P[frontier].indices)
        frontier = nbrs[~seen[nbrs]]
        seen[frontier] = True
    return seen


def neighborhood_mass(g: DirectedMultigraph, s: int, alpha: float, tau: float,
                      tol: float = 1e-10) -> tuple[int, float, int]:
    """PPR mass of the ``l``-step out-ball of ``s``, ``l = ceil(ln(1/tau)/alpha)``.

    Returns
    -------
    l : int
    mass : float
        ``pi_s`` summed over the ball; at least ``1 - (1 - alpha)^l``.
    size : int
        Number of nodes in the ball.
    """
    alpha = check_alpha(alpha)
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    radius = ceil_guarded(math.log(1.0 / tau) / alpha)
    ball = bfs_ball(g, _check_node(g, s), radius)
    pi = ppr_exact(g, s, alpha, tol=tol)
    return radius, float(pi.values[ball].sum()), int(ball.sum())


def ppr_residual(g: DirectedMultigraph, x: np.ndarray, v: int, alpha: float) -> float:
    """``||x - alpha e_v - (1 - alpha) x P||_1``."""
    r = x - (1.0 - alpha) * (g.transition_t @ x)
    r[v] -= alpha
    return float(np.abs(r).sum())


def ppr_monte_carlo(g: DirectedMultigraph, v: int, alpha: float, walks: int, seed=None,
                    estimator: str = "ratio", shard: int = 1 << 15) -> PprVector:
    """Renewal-reward estimate of ``pi_v`` from geometric-length walks.

    Each walk starts at ``v`` and visits ``X_0, ..., X_{L-1}`` with
    ``L ~ geometric(alpha)`` on ``{1, 2, ...}``.

    Parameters
    ----------
    estimator : {"ratio", "plain"}
        ``"ratio"`` divides total visits of each node by total walk length,
        which sums to one exactly; ``"plain"`` is ``alpha`` times the mean
        visit count, which is unbiased.
    shard : int
        Walks per random substream. Substreams are spawned from ``seed``,
        so the result does not depend on how shards are scheduled.

    Returns
    -------
    PprVector
        With ``stderr`` holding delta-method (``"ratio"``) or plain
        standard errors per coordinate.
    """
    alpha = check_alpha(alpha)
    v = _check_node(g, v)
    if walks < 1:
        raise ValueError("walks must be at least 1")
    if estimator not in ("ratio", "plain"):
        raise ValueError("estimator must be 'ratio' or 'plain'")
    n = g.node_count
    sizes = [min(shard, walks - k) for k in range(0, walks, shard)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    acc = np.zeros((3, n))  # per node: sum c, sum c^2, sum c L
    len_sum = len_sq = 0.0
    for size, ss in zip(sizes, streams):
        c1, c2, cl, lengths = _walk_shard(g, v, alpha, size, np.random.default_rng(ss))
        acc[0] += c1
        acc[1] += c2
        acc[2] += cl
        len_sum += lengths.sum()
        len_sq += float(lengths @ lengths)
    W = float(walks)
    if estimator == "plain":
        values = alpha * acc[0] / W
        var = np.maximum(alpha ** 2 * acc[1] / W - values ** 2, 0.0)
    else:
        values = acc[0] / len_sum
        mean_len = len_sum / W
        # per-walk Var(c - R L), delta method for the ratio R
        var = (acc[1] - 2 * values * acc[2] + values ** 2 * len_sq) / W
        var = np.maximum(var, 0.0) / mean_len ** 2
    stderr = np.sqrt(var / W)
    res = ppr_residual(g, values, v, alpha)
    return PprVector(values, alpha, v, walks, res, stderr,
                     {"dangling": DANGLING_POLICY, "estimator": estimator})


def _walk_shard(g, v, alpha, size, rng):
    n = g.node_count
    off, tgt, deg = g.out_offsets, g.out_targets, g.out_degrees
    pos = np.full(size, v, dtype=np.int64)
    ids = np.arange(size, dtype=np.int64)
    visits = []
    lengths = np.zeros(size, dtype=np.int64)
    while ids.size:
        visits.append(ids * n + pos)
        lengths[ids] += 1
        alive = rng.random(ids.size) >= alpha
        ids, pos = ids[alive], pos[alive]
        d = deg[pos]
        step = np.floor(rng.random(pos.size) * d).astype(np.int64)
        moving = d > 0
        pos = np.where(moving, tgt[np.minimum(off[pos] + step, tgt.size - 1)] if tgt.size else pos, pos)
    keys, counts = np.unique(np.concatenate(visits), return_counts=True)
    node = keys % n
    walk = keys // n
    counts = counts.astype(np.float64)
    c1 = np.bincount(node, weights=counts, minlength=n)
    c2 = np.bincount(node, weights=counts ** 2, minlength=n)
    cl = np.bincount(node, weights=counts * lengths[walk], minlength=n)
    return c1, c2, cl, lengths.astype(np.float64)
