"""Immutable directed multigraphs in CSR layout.

A :class:`DirectedMultigraph` stores the out-adjacency of every node as a
sorted slice of ``out_targets``; repeated targets are parallel edges. The
row-stochastic transition matrix ``P(i, j) = M(i, j) / D_i`` and its
hub-masked variant are derived lazily and cached.

Dangling nodes (``D_v = 0``) are made absorbing, ``P(v, v) = 1``, so every
row of ``P`` sums to one. The convention is reported as
:data:`DANGLING_POLICY` in solver metadata; :func:`strip_dangling` is
available for experiments that prefer to remove such nodes.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GraphFormatError

logger = logging.getLogger(__name__)

DANGLING_POLICY = "self_loop"

_CACHE_MAGIC = b"PPRHUBG\x00"
_CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIIqqq")  # magic, version, flags, n, L, n_raw


def _as_index_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr


@dataclass(frozen=True, eq=False)
class DirectedMultigraph:
    """Directed multigraph with parallel edges and self-loops.

    Parameters
    ----------
    node_count : int
        Number of nodes ``n``; nodes are ``0..n-1``.
    out_offsets : ndarray of int64, shape (n + 1,)
        CSR row pointer; the out-edges of ``v`` are
        ``out_targets[out_offsets[v]:out_offsets[v + 1]]``.
    out_targets : ndarray of int64, shape (L,)
        Edge heads, sorted within each source. Duplicates are multi-edges.
    in_degrees, out_degrees : ndarray of int64, shape (n,)
        ``N_v`` and ``D_v``.

    Notes
    -----
    Use :func:`build_from_pairs` or :func:`load_edge_list` rather than the
    constructor; those guarantee the sorted layout. The constructor checks
    all structural invariants and raises ``ValueError`` on violation.
    """

    node_count: int
    out_offsets: np.ndarray
    out_targets: np.ndarray
    in_degrees: np.ndarray
    out_degrees: np.ndarray
    raw_ids: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        n = int(self.node_count)
        if n < 0:
            raise ValueError("node_count must be non-negative")
        object.__setattr__(self, "node_count", n)
        for name in ("out_offsets", "out_targets", "in_degrees", "out_degrees"):
            arr = _as_index_array(getattr(self, name), name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        off, tgt = self.out_offsets, self.out_targets
        if off.shape != (n + 1,) or off[0] != 0 or off[-1] != tgt.size:
            raise ValueError("out_offsets must have length n+1, start at 0 and end at L")
        if np.any(np.diff(off) < 0):
            raise ValueError("out_offsets must be non-decreasing")
        if self.in_degrees.shape != (n,) or self.out_degrees.shape != (n,):
            raise ValueError("degree arrays must have length n")
        if not np.array_equal(np.diff(off), self.out_degrees):
            raise ValueError("out_degrees disagree with out_offsets")
        if tgt.size and (tgt.min() < 0 or tgt.max() >= n):
            raise ValueError("edge target out of range")
        if not np.array_equal(np.bincount(tgt, minlength=n), self.in_degrees):
            raise ValueError("in_degrees disagree with out_targets")
        if self.raw_ids is not None:
            raw = _as_index_array(self.raw_ids, "raw_ids")
            if raw.shape != (n,):
                raise ValueError("raw_ids must have length n")
            raw.setflags(write=False)
            object.__setattr__(self, "raw_ids", raw)

    @property
    def n(self) -> int:
        return self.node_count

    @property
    def edge_count(self) -> int:
        """Total number of edges ``L_n`` counted with multiplicity."""
        return int(self.out_targets.size)

    def out_neighbors(self, v: int) -> np.ndarray:
        """Heads of the out-edges of ``v``, with multiplicity."""
        return self.out_targets[self.out_offsets[v]:self.out_offsets[v + 1]]

    def edge_sources(self) -> np.ndarray:
        """Tail of every edge, aligned with ``out_targets``."""
        return np.repeat(np.arange(self.node_count, dtype=np.int64), self.out_degrees)

    def edges(self) -> np.ndarray:
        """All edges as an ``(L, 2)`` array of ``(src, dst)`` rows."""
        return np.column_stack([self.edge_sources(), self.out_targets])

    @cached_property
    def dangling(self) -> np.ndarray:
        """Boolean mask of nodes with no out-edges."""
        return self.out_degrees == 0

    @cached_property
    def transition(self) -> sp.csr_matrix:
        """Row-stochastic transition matrix ``P`` with absorbing dangling nodes."""
        return self._transition_with_mask(None)

    @cached_property
    def transition_t(self) -> sp.csr_matrix:
        """``P.T`` in CSR form, used for row-vector products ``x P``."""
        return self.transition.T.tocsr()

    def masked_transition(self, indicator: np.ndarray) -> sp.csr_matrix:
        """``P~(i, j) = U_i P(i, j)``: rows of hubs are zeroed."""
        return self._transition_with_mask(np.asarray(indicator, dtype=bool))

    def _transition_with_mask(self, keep_rows: np.ndarray | None) -> sp.csr_matrix:
        n = self.node_count
        src = self.edge_sources()
        loops = np.flatnonzero(self.dangling)
        rows = np.concatenate([src, loops])
        cols = np.concatenate([self.out_targets, loops])
        data = np.concatenate([1.0 / self.out_degrees[src], np.ones(loops.size)])
        if keep_rows is not None:
            if keep_rows.shape != (n,):
                raise ValueError("indicator must have length n")
            data = data * keep_rows[rows]
        # duplicate (i, j) entries add up to M(i, j) / D_i
        mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        mat.sum_duplicates()
        mat.eliminate_zeros()
        return mat

    def masked_ops(self, hubs: "HubPartition") -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """``(P~, P~.T)`` in CSR form, cached per hub partition."""
        if hubs.n != self.node_count:
            raise ValueError("hub partition and graph sizes differ")
        key = hubs.fingerprint
        cache = self.__dict__.setdefault("_masked_cache", {})
        if key not in cache:
            if len(cache) >= 8:
                cache.clear()
            fwd = self.masked_transition(hubs.indicator)
            cache[key] = (fwd, fwd.T.tocsr())
        return cache[key]

    def masked_transition_t(self, hubs: "HubPartition") -> sp.csr_matrix:
        """``P~.T`` in CSR form, cached per hub partition."""
        return self.masked_ops(hubs)[1]


@dataclass(frozen=True, eq=False)
class HubPartition:
    """Split of the node set into hubs ``K_n`` and non-hubs.

    Parameters
    ----------
    indicator : ndarray of bool, shape (n,)
        ``U_v``; True marks a non-hub.
    hub_list : ndarray of int64
        Sorted hub indices, i.e. nodes with ``U_v = 0``.
    """

    indicator: np.ndarray
    hub_list: np.ndarray

    def __post_init__(self):
        ind = np.array(self.indicator)
        if ind.ndim != 1:
            raise ValueError("indicator must be one-dimensional")
        if ind.dtype != bool:
            if ind.size and not np.isin(ind, (0, 1)).all():
                raise ValueError("indicator entries must be 0 or 1")
            ind = ind.astype(bool)
        hubs = _as_index_array(self.hub_list, "hub_list")
        if np.unique(hubs).size != hubs.size:
            raise ValueError("hub_list contains duplicates")
        if not np.array_equal(np.sort(hubs), np.flatnonzero(~ind)):
            raise ValueError("hub_list and indicator do not describe the same partition")
        ind.setflags(write=False)
        hubs = np.sort(hubs)
        hubs.setflags(write=False)
        object.__setattr__(self, "indicator", ind)
        object.__setattr__(self, "hub_list", hubs)

    @classmethod
    def from_hubs(cls, hubs: Iterable[int], n: int) -> "HubPartition":
        """Partition with the given hub nodes."""
        hubs = np.asarray(list(hubs) if not isinstance(hubs, np.ndarray) else hubs, dtype=np.int64)
        if hubs.size and (hubs.min() < 0 or hubs.max() >= n):
            raise ValueError("hub index out of range")
        if np.unique(hubs).size != hubs.size:
            raise ValueError("hub list contains duplicates")
        ind = np.ones(n, dtype=bool)
        ind[hubs] = False
        return cls(ind, np.sort(hubs))

    @classmethod
    def from_indicator(cls, indicator) -> "HubPartition":
        ind = np.asarray(indicator).astype(bool)
        return cls(ind, np.flatnonzero(~ind))

    @classmethod
    def empty(cls, n: int) -> "HubPartition":
        return cls.from_hubs([], n)

    @property
    def n(self) -> int:
        return int(self.indicator.size)

    @property
    def hub_count(self) -> int:
        return int(self.hub_list.size)

    @cached_property
    def non_hubs(self) -> np.ndarray:
        return np.flatnonzero(self.indicator)

    @cached_property
    def fingerprint(self) -> bytes:
        return np.packbits(self.indicator).tobytes() + self.n.to_bytes(8, "little")

    def is_hub(self, v: int) -> bool:
        return not bool(self.indicator[v])


def build_from_pairs(edges: Sequence[tuple[int, int]] | np.ndarray, n: int,
                     raw_ids: np.ndarray | None = None) -> DirectedMultigraph:
    """Build a multigraph from ``(src, dst)`` pairs.

    Parameters
    ----------
    edges : sequence of pairs or ndarray of shape (L, 2)
        Edges with multiplicity; order is irrelevant.
    n : int
        Node count; every endpoint must lie in ``[0, n)``.
    raw_ids : ndarray, optional
        Original identifier of every dense node, kept for reporting.

    Returns
    -------
    DirectedMultigraph
        Targets sorted within each source.

    Examples
    --------
    >>> g = build_from_pairs([(0, 1), (1, 2), (2, 0)], 3)
    >>> g.out_degrees.tolist(), g.in_degrees.tolist()
    ([1, 1, 1], [1, 1, 1])
    """
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("edges must be a sequence of (src, dst) pairs")
    n = int(n)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = np.flatnonzero((arr < 0).any(axis=1) | (arr >= n).any(axis=1))[0]
        raise ValueError(f"edge {tuple(arr[bad])} has an endpoint outside [0, {n})")
    src, dst = arr[:, 0], arr[:, 1]
    order = np.lexsort((dst, src))
    out_deg = np.bincount(src, minlength=n).astype(np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(out_deg, out=offsets[1:])
    targets = dst[order]
    in_deg = np.bincount(dst, minlength=n).astype(np.int64)
    return DirectedMultigraph(n, offsets, targets, in_deg, out_deg, raw_ids)


def load_edge_list(path: str | os.PathLike, format: str = "snap_tsv"
                   ) -> tuple[DirectedMultigraph, np.ndarray]:
    """Read a whitespace-separated edge list.

    Lines starting with ``#`` and blank lines are skipped. Raw identifiers
    are densified to ``0..n-1`` in ascending raw-id order.

    Parameters
    ----------
    path : path-like
        Text file with one ``src dst`` pair per line.
    format : {"snap_tsv"}
        Only the SNAP layout is supported.

    Returns
    -------
    graph : DirectedMultigraph
    raw_ids : ndarray of int64
        ``raw_ids[v]`` is the original identifier of dense node ``v``.

    Raises
    ------
    GraphFormatError
        On a malformed line (the message carries its line number) or when
        the file has no edges.
    """
    if format != "snap_tsv":
        raise ValueError(f"unsupported edge-list format {format!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    pairs = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'src dst', got {stripped!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {stripped!r}") from None
    if not pairs:
        raise GraphFormatError(f"{path}: no edges found")
    raw = np.asarray(pairs, dtype=np.int64)
    raw_ids, dense = np.unique(raw.ravel(), return_inverse=True)
    dense = dense.reshape(-1, 2)
    logger.info("loaded %d edges over %d nodes from %s", len(dense), raw_ids.size, path)
    return build_from_pairs(dense, raw_ids.size, raw_ids=raw_ids), raw_ids


def zero_error_set(g: DirectedMultigraph, part: HubPartition, include_dangling: bool = True) -> np.ndarray:
    """Non-hubs whose every out-edge enters the hub set.

    Parameters
    ----------
    include_dangling : bool, default True
        Nodes without out-edges qualify vacuously. Under the self-loop
        convention for dangling nodes their estimation error is
        ``1 - alpha`` rather than zero, so pass False to get exactly the
        nodes the hub estimator reproduces without error.

    Returns
    -------
    ndarray of int64
        Sorted node indices.
    """
    if part.n != g.node_count:
        raise ValueError("hub partition and graph sizes differ")
    to_non_hub = part.indicator[g.out_targets]
    escapes = np.bincount(g.edge_sources()[to_non_hub], minlength=g.node_count)
    mask = part.indicator & (escapes == 0)
    if not include_dangling:
        mask &= ~g.dangling
    return np.flatnonzero(mask)


def strip_dangling(g: DirectedMultigraph) -> tuple[DirectedMultigraph, np.ndarray]:
    """Repeatedly delete nodes without out-edges.

    Returns
    -------
    graph : DirectedMultigraph
        Induced subgraph on the surviving nodes, densified.
    kept : ndarray of int64
        Original index of each surviving node.
    """
    keep = np.ones(g.node_count, dtype=bool)
    src, dst = g.edge_sources(), g.out_targets
    while True:
        live = keep[src] & keep[dst]
        deg = np.bincount(src[live], minlength=g.node_count)
        newly = keep & (deg == 0)
        if not newly.any():
            break
        keep &= ~newly
    kept = np.flatnonzero(keep)
    remap = np.full(g.node_count, -1, dtype=np.int64)
    remap[kept] = np.arange(kept.size)
    live = keep[src] & keep[dst]
    raw = g.raw_ids[kept] if g.raw_ids is not None else kept
    sub = build_from_pairs(np.column_stack([remap[src[live]], remap[dst[live]]]), kept.size, raw_ids=raw)
    return sub, kept


def save_binary(g: DirectedMultigraph, path: str | os.PathLike) -> None:
    """Write the versioned binary cache (little-endian int64 arrays)."""
    flags = 1 if g.raw_ids is not None else 0
    n_raw = g.node_count if flags else 0
    header = _HEADER.pack(_CACHE_MAGIC, _CACHE_VERSION, flags, g.node_count, g.edge_count, n_raw)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(g.out_offsets.astype("<i8").tobytes())
        fh.write(g.out_targets.astype("<i8").tobytes())
        if flags:
            fh.write(g.raw_ids.astype("<i8").tobytes())
    os.replace(tmp, path)


def load_binary(path: str | os.PathLike) -> DirectedMultigraph:
    """Read a graph written by :func:`save_binary`."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise GraphFormatError(f"{path}: truncated header")
    magic, version, flags, n, L, n_raw = _HEADER.unpack_from(data)
    if magic != _CACHE_MAGIC:
        raise GraphFormatError(f"{path}: not a graph cache file")
    if version != _CACHE_VERSION:
        raise GraphFormatError(f"{path}: unsupported cache version {version}")
    expected = _HEADER.size + 8 * (n + 1 + L + n_raw)
    if len(data) != expected:
        raise GraphFormatError(f"{path}: size {len(data)} does not match header ({expected})")
    body = np.frombuffer(data, dtype="<i8", offset=_HEADER.size).astype(np.int64)
    offsets, targets = body[:n + 1], body[n + 1:n + 1 + L]
    raw = body[n + 1 + L:] if flags & 1 else None
    out_deg = np.diff(offsets)
    in_deg = np.bincount(targets, minlength=n).astype(np.int64)
    return DirectedMultigraph(int(n), offsets, targets, in_deg, out_deg, raw)


def write_edge_list(g: DirectedMultigraph, path: str | os.PathLike, header: Sequence[str] = ()) -> None:
    """Write edges as ``src<TAB>dst`` lines in raw ids when available."""
    ids = g.raw_ids if g.raw_ids is not None else np.arange(g.node_count)
    edges = ids[g.edges()]
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        np.savetxt(fh, edges, fmt="%d", delimiter="\t")
