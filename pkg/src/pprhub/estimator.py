"""Hub-based PPR estimation with certified l1 error.

For a non-hub ``v`` the estimate is ``alpha e_v + pi^_v`` with
``pi^_v = sum_k beta_v(k) pi_k`` and
``beta_v(k) = pi~_v(k) / (alpha + (1 - alpha) pi~_v(K))``. Its l1 error is
known in closed form from the hub mass ``pi~_v(K)`` alone, which gives the
certificate. Power-iteration bounds on the same error are available for
every node at once and feed the dimensionality curve and the histograms.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import check_alpha, iterations_for
from .errors import MissingHubVectorError
from .graph import DirectedMultigraph, HubPartition, zero_error_set
from .ppr import HubRestrictedPpr, PprVector, ppr_exact_many, ppr_hub_restricted_many

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12
DIMENSIONALITY_KIND = "upper bound on Delta_n(epsilon)"


@dataclass(frozen=True, eq=False)
class BetaWeights:
    """Combination weights of the hub vectors for one non-hub."""

    owner: int
    hubs: np.ndarray
    values: np.ndarray
    denom: float
    n: int

    @property
    def weights(self) -> dict:
        return dict(zip(self.hubs.tolist(), self.values.tolist()))


@dataclass(frozen=True)
class ErrorCertificate:
    """Exact l1 error of the hub estimate and its comparison with ``epsilon``.

    ``passes`` is the strict test ``hub_mass > threshold``, equivalent to
    ``certified_l1_bound < epsilon``. ``indeterminate`` flags hub masses
    within ``1e-12`` of the threshold.
    """

    owner: int
    hub_mass: float
    certified_l1_bound: float
    epsilon: float
    passes: bool
    threshold: float
    indeterminate: bool = False


@dataclass(frozen=True, eq=False)
class IterBoundState:
    """Power-iteration error bound after ``i`` steps.

    ``owner`` is a node index, or ``"aggregate"`` for the average over all
    non-hubs.
    """

    owner: object
    x: np.ndarray
    i: int
    bound: float
    gap_bound: float


@dataclass(frozen=True, eq=False)
class DimensionalityCurve:
    """``Delta(epsilon) = |K| + #{non-hubs whose error bound reaches epsilon}``."""

    epsilons: np.ndarray
    delta_values: np.ndarray
    hub_count: int
    n: int
    indeterminate: np.ndarray = None
    metadata: dict = field(default_factory=lambda: {"kind": DIMENSIONALITY_KIND})


@dataclass(frozen=True, eq=False)
class Histogram:
    """Normalized histogram of per-node error bounds.

    The first row is the degenerate bin ``[0, 0]`` holding exact zeros.
    """

    bin_left: np.ndarray
    bin_right: np.ndarray
    frequency: np.ndarray


@dataclass(eq=False)
class SchemeReport:
    """Outcome of estimating every PPR vector through the hubs."""

    estimated: np.ndarray
    computed_exactly: np.ndarray
    ppr_values_computed: int
    epsilon: float
    alpha: float
    hub_count: int
    n: int
    degenerate: bool
    indeterminate: np.ndarray
    vectors: dict | None = None

    @property
    def delta(self) -> int:
        return self.hub_count + int(self.computed_exactly.size)

    def as_dict(self) -> dict:
        return {
            "n": self.n, "hub_count": self.hub_count, "alpha": self.alpha,
            "epsilon": self.epsilon, "estimated": int(self.estimated.size),
            "computed_exactly": int(self.computed_exactly.size), "delta": self.delta,
            "ppr_values_computed": self.ppr_values_computed,
            "operation_count_bound_2n_delta": 2 * self.n * self.delta,
            "degenerate_empty_hub_set": self.degenerate,
            "indeterminate_certificates": int(self.indeterminate.size),
        }


def beta_weights(pr: HubRestrictedPpr, hubs: HubPartition, alpha: float) -> BetaWeights:
    """``beta_v(k) = pi~_v(k) / (alpha + (1 - alpha) pi~_v(K))``."""
    alpha = check_alpha(alpha)
    if hubs.is_hub(pr.owner):
        raise ValueError("beta weights are defined for non-hub owners")
    denom = alpha + (1.0 - alpha) * pr.hub_mass
    vals = pr.values[hubs.hub_list] / denom
    return BetaWeights(pr.owner, hubs.hub_list.copy(), vals, float(denom), pr.values.size)


def estimate_pi_hat(beta: BetaWeights, hub_vectors) -> np.ndarray:
    """``pi^_v = sum_k beta_v(k) pi_k``.

    Parameters
    ----------
    beta : BetaWeights
    hub_vectors : mapping
        Hub index to :class:`PprVector` or array; a :class:`HubVectorCache`
        also works.

    Raises
    ------
    MissingHubVectorError
        If a hub with positive weight has no vector.
    """
    out = np.zeros(beta.n)
    for k, b in zip(beta.hubs.tolist(), beta.values.tolist()):
        if b == 0.0:
            continue
        try:
            vec = hub_vectors[k]
        except (KeyError, IndexError):
            raise MissingHubVectorError(f"no PPR vector for hub {k}") from None
        out += b * np.asarray(vec.values if isinstance(vec, PprVector) else vec)
    return out


def certificate_threshold(alpha: float, epsilon: float) -> float:
    """Hub mass above which the estimate's l1 error is below ``epsilon``."""
    t = epsilon + alpha
    return alpha * (1.0 - t) / (epsilon + alpha * (2.0 - t))


def certify(pr: HubRestrictedPpr, alpha: float, epsilon: float) -> ErrorCertificate:
    """Certificate for the hub estimate of ``pr.owner``.

    The l1 error equals ``alpha ((1 - h) / (alpha + (1 - alpha) h) - 1)``
    with ``h = pi~_v(K)``; it is below ``epsilon`` iff ``h`` exceeds
    :func:`certificate_threshold`.
    """
    alpha = check_alpha(alpha)
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    h = float(pr.hub_mass)
    denom = alpha + (1.0 - alpha) * h
    bound = max(alpha * ((1.0 - h) / denom - 1.0), 0.0)
    thr = certificate_threshold(alpha, epsilon)
    return ErrorCertificate(pr.owner, h, bound, float(epsilon), bool(h > thr), thr,
                            bool(abs(h - thr) <= TIE_TOL))


def iter_error_bound(g: DirectedMultigraph, hubs: HubPartition, v: int, alpha: float,
                     tol: float = 1e-6, iterations: int | None = None,
                     early_exit: bool = True) -> IterBoundState:
    """Power-iteration upper bound on the estimate's l1 error at ``v``.

    Runs ``x <- alpha e_v + (1 - alpha) x P~`` from ``e_v`` for
    ``i* = ceil(log(tol) / log(1 - alpha))`` steps (or ``iterations``).
    ``x(V \\ K) - alpha`` then exceeds the true error by at most
    ``(1 - alpha)^i``.

    Notes
    -----
    With ``early_exit`` the loop stops as soon as the bound is exactly
    zero, which happens after one step for zero-error nodes.
    """
    alpha = check_alpha(alpha)
    if hubs.is_hub(v):
        raise ValueError(f"node {v} is a hub")
    steps = iterations_for(alpha, tol) if iterations is None else int(iterations)
    op_t = g.masked_transition_t(hubs)
    keep = hubs.indicator
    x = np.zeros(g.node_count)
    x[v] = 1.0
    bound, i = 1.0 - alpha, 0
    while i < steps:
        x = (1.0 - alpha) * (op_t @ x)
        x[v] += alpha
        i += 1
        bound = float(x[keep].sum()) - alpha
        if early_exit and bound == 0.0:
            break
    # a zero bound is exact since the true error is non-negative
    gap = 0.0 if bound <= 0.0 else (1.0 - alpha) ** i
    return IterBoundState(int(v), x, i, max(bound, 0.0), gap)


def avg_error_bound(g: DirectedMultigraph, hubs: HubPartition, alpha: float, tol: float = 1e-6,
                    iterations: int | None = None, early_exit: bool = True) -> IterBoundState:
    """Bound on the mean estimation error over all non-hubs.

    Same recurrence as :func:`iter_error_bound`, started from the uniform
    distribution on the non-hubs. By linearity the result equals the mean
    of the per-node bounds at the same ``i``.
    """
    alpha = check_alpha(alpha)
    keep = hubs.indicator
    count = int(keep.sum())
    if count == 0:
        raise ValueError("average error needs at least one non-hub")
    steps = iterations_for(alpha, tol) if iterations is None else int(iterations)
    op_t = g.masked_transition_t(hubs)
    u = keep / count
    x = u.astype(np.float64)
    bound, i = 1.0 - alpha, 0
    while i < steps:
        x = (1.0 - alpha) * (op_t @ x) + alpha * u
        i += 1
        bound = float(x[keep].sum()) - alpha
        if early_exit and bound == 0.0:
            break
    gap = 0.0 if bound <= 0.0 else (1.0 - alpha) ** i
    return IterBoundState("aggregate", x, i, max(bound, 0.0), gap)


def all_error_bounds(g: DirectedMultigraph, hubs: HubPartition, alpha: float, tol: float = 1e-6,
                     iterations: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Power-iteration error bounds of every non-hub in one recurrence.

    Iterates the adjoint ``y <- alpha u + (1 - alpha) P~ y`` from
    ``y = u = 1_{V \\ K}``; ``y(v) - alpha`` equals the bound
    :func:`iter_error_bound` returns for ``v`` after the same number of
    steps.

    Returns
    -------
    nodes : ndarray of int64
        The non-hubs.
    bounds : ndarray of float64
    """
    alpha = check_alpha(alpha)
    steps = iterations_for(alpha, tol) if iterations is None else int(iterations)
    op = g.masked_ops(hubs)[0]
    u = hubs.indicator.astype(np.float64)
    y = u.copy()
    for _ in range(steps):
        y = (1.0 - alpha) * (op @ y) + alpha * u
    nodes = hubs.non_hubs
    return nodes, np.maximum(y[nodes] - alpha, 0.0)


def _delta_counts(bounds: np.ndarray, epsilons: np.ndarray, hub_count: int):
    counted = np.array([int(np.count_nonzero((bounds >= e) & (bounds > 0))) for e in epsilons])
    ties = np.array([int(np.count_nonzero((np.abs(bounds - e) <= TIE_TOL) & (bounds > 0)))
                     for e in epsilons])
    return hub_count + counted, ties


def dimensionality_curve(g: DirectedMultigraph, hubs: HubPartition, alpha: float, epsilons,
                         tol: float = 1e-6) -> DimensionalityCurve:
    """``Delta(epsilon)`` from the certified per-node bounds.

    A non-hub counts at ``epsilon`` when its bound is ``>= epsilon``; nodes
    with a bound of exactly zero are never counted, so ``Delta(0)``
    excludes the zero-error set.
    """
    eps = np.asarray(epsilons, dtype=np.float64)
    if eps.ndim != 1 or np.any(np.diff(eps) < 0):
        raise ValueError("epsilons must be a sorted 1-d sequence")
    if hubs.non_hubs.size:
        _, bounds = all_error_bounds(g, hubs, alpha, tol)
    else:
        bounds = np.empty(0)
    delta, ties = _delta_counts(bounds, eps, hubs.hub_count)
    meta = {"kind": DIMENSIONALITY_KIND, "alpha": float(alpha), "tol": float(tol)}
    return DimensionalityCurve(eps, delta, hubs.hub_count, g.node_count, ties, meta)


def error_histogram(g: DirectedMultigraph, hubs: HubPartition, alpha: float, bins=20,
                    tol: float = 1e-6) -> Histogram:
    """Histogram of per-node error bounds, normalized by ``n``.

    Parameters
    ----------
    bins : int or sequence of float
        Number of equal bins on ``[0, 1 - alpha]`` or explicit edges.
        Positive values outside the edges fall into the first or last bin.

    Returns
    -------
    Histogram
        Row 0 is the zero bin ``[0, 0]``; it holds the nodes whose bound is
        exactly zero.
    """
    alpha = check_alpha(alpha)
    edges = np.linspace(0.0, 1.0 - alpha, int(bins) + 1) if np.isscalar(bins) else np.asarray(bins, float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing with at least two entries")
    bounds = all_error_bounds(g, hubs, alpha, tol)[1] if hubs.non_hubs.size else np.empty(0)
    zero = bounds == 0.0
    pos = bounds[~zero]
    idx = np.clip(np.searchsorted(edges, pos, side="right") - 1, 0, edges.size - 2)
    counts = np.bincount(idx, minlength=edges.size - 1)
    freq = np.concatenate([[zero.sum()], counts]) / g.node_count
    return Histogram(np.concatenate([[0.0], edges[:-1]]), np.concatenate([[0.0], edges[1:]]), freq)


class HubVectorCache:
    """Exact PPR vectors of all hubs, one row per hub.

    Backed by an ``.npy`` file opened as a memory map when ``path`` is
    given, so repeated estimation passes reuse the vectors without
    recomputing them.
    """

    def __init__(self, hub_list: np.ndarray, matrix: np.ndarray, meta: dict | None = None):
        self.hub_list = np.asarray(hub_list, dtype=np.int64)
        self.matrix = matrix
        self.meta = meta or {}
        self._row = {int(k): i for i, k in enumerate(self.hub_list)}

    def __getitem__(self, k: int) -> np.ndarray:
        return self.matrix[self._row[int(k)]]

    def __contains__(self, k) -> bool:
        return int(k) in self._row

    def __len__(self) -> int:
        return self.hub_list.size

    @classmethod
    def build(cls, g: DirectedMultigraph, hubs: HubPartition, alpha: float, tol: float = 1e-10,
              path: str | os.PathLike | None = None, block: int = 64) -> "HubVectorCache":
        """Compute (or reload) the hub vectors."""
        meta = {
            "n": g.node_count, "alpha": float(alpha), "tol": float(tol),
            "hubs_sha1": hashlib.sha1(hubs.hub_list.tobytes()).hexdigest(),
            "edges_sha1": hashlib.sha1(g.out_offsets.tobytes() + g.out_targets.tobytes()).hexdigest(),
        }
        if path is None:
            mat = ppr_exact_many(g, hubs.hub_list, alpha, tol, block=block)
            return cls(hubs.hub_list, mat, meta)
        path = Path(path)
        side = path.with_suffix(".json")
        if path.exists() and side.exists() and json.loads(side.read_text()) == meta:
            logger.info("reusing hub vectors from %s", path)
            return cls(hubs.hub_list, np.load(path, mmap_mode="r"), meta)
        shape = (hubs.hub_count, g.node_count)
        tmp = path.with_name(path.name + ".tmp")
        mm = np.lib.format.open_memmap(tmp, mode="w+", dtype=np.float64, shape=shape)
        for start in range(0, hubs.hub_count, block):
            chunk = hubs.hub_list[start:start + block]
            mm[start:start + chunk.size] = ppr_exact_many(g, chunk, alpha, tol, block=block)
        mm.flush()
        del mm
        os.replace(tmp, path)
        side.write_text(json.dumps(meta, sort_keys=True))
        return cls(hubs.hub_list, np.load(path, mmap_mode="r"), meta)


def full_scheme(g: DirectedMultigraph, hubs: HubPartition, alpha: float, epsilon: float,
                tol: float = 1e-10, cache_path: str | os.PathLike | None = None,
                return_vectors: bool = False, block: int = 64) -> SchemeReport:
    """Estimate every PPR vector, falling back to exact solves where needed.

    Hub vectors are computed exactly. Each non-hub whose certificate passes
    is estimated; the others (including indeterminate ties) are solved
    exactly. The operation count is
    ``n |K| + |K| |V \\ K| + n (Delta - |K|)``.
    """
    alpha = check_alpha(alpha)
    n, k = g.node_count, hubs.hub_count
    cache = HubVectorCache.build(g, hubs, alpha, tol, cache_path, block)
    estimated, exact, ties = [], [], []
    vectors = {} if return_vectors else None
    for pr in ppr_hub_restricted_many(g, hubs, hubs.non_hubs, alpha, tol, block=block):
        if epsilon >= 1.0:
            ok, tie = True, False
        else:
            cert = certify(pr, alpha, epsilon)
            ok, tie = cert.passes and not cert.indeterminate, cert.indeterminate
        if tie:
            ties.append(pr.owner)
        if ok:
            estimated.append(pr.owner)
            if return_vectors:
                est = estimate_pi_hat(beta_weights(pr, hubs, alpha), cache)
                est[pr.owner] += alpha
                vectors[pr.owner] = est
        else:
            exact.append(pr.owner)
    exact = np.asarray(exact, dtype=np.int64)
    if return_vectors:
        for v, row in zip(exact.tolist(), ppr_exact_many(g, exact, alpha, tol, block=block)):
            vectors[v] = row
        for kk in hubs.hub_list.tolist():
            vectors[kk] = np.array(cache[kk])
    count = n * k + k * (n - k) + n * exact.size
    return SchemeReport(np.asarray(estimated, dtype=np.int64), exact, int(count), float(epsilon),
                        alpha, k, n, k == 0, np.asarray(ties, dtype=np.int64), vectors)


def zero_error_nodes(g: DirectedMultigraph, hubs: HubPartition) -> np.ndarray:
    """Non-hubs whose hub estimate is exact under the dangling convention.

    This is :func:`pprhub.graph.zero_error_set` without the dangling
    non-hubs, which keep all their mass on themselves.
    """
    return zero_error_set(g, hubs, include_dangling=False)
