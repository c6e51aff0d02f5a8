"""Directed configuration model: degree sequences, stub pairing, hub choice.

The breadth-first pairing follows the labelled construction used in the
coupling argument. Node labels mean:

``A``
    not yet in the graph;
``B``
    a hub;
``C``
    a non-hub reachable from the source only through hubs;
``D``
    a non-hub reachable from the source along a hub-free path.

``tau_g`` is the first iteration at which an already paired instub is
drawn, or a ``D`` node is wired to a ``C``/``D`` node.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._util import ceil_guarded
from .graph import DirectedMultigraph, HubPartition, build_from_pairs
from .sampling import AliasTable

logger = logging.getLogger(__name__)

LABEL_A, LABEL_B, LABEL_C, LABEL_D = 0, 1, 2, 3
LABEL_NAMES = np.array(["A", "B", "C", "D"])

SOURCE_MODES = ("uniform_all", "uniform_non_hub")


@dataclass(frozen=True, eq=False)
class DegreeSequence:
    """Paired in/out degrees ``(N_v, D_v)`` with equal totals.

    Parameters
    ----------
    in_degrees, out_degrees : array_like of int
        Non-negative, same length, equal sums.
    """

    in_degrees: np.ndarray
    out_degrees: np.ndarray

    def __post_init__(self):
        N = np.array(self.in_degrees, dtype=np.int64)
        D = np.array(self.out_degrees, dtype=np.int64)
        if N.ndim != 1 or N.shape != D.shape:
            raise ValueError("in_degrees and out_degrees must be 1-d and equally long")
        if N.size == 0:
            raise ValueError("degree sequence is empty")
        if (N < 0).any() or (D < 0).any():
            raise ValueError("degrees must be non-negative")
        if N.sum() != D.sum():
            raise ValueError(f"unbalanced degree sequence: sum N = {N.sum()}, sum D = {D.sum()}")
        N.setflags(write=False)
        D.setflags(write=False)
        object.__setattr__(self, "in_degrees", N)
        object.__setattr__(self, "out_degrees", D)

    @property
    def n(self) -> int:
        return int(self.in_degrees.size)

    @property
    def total(self) -> int:
        """``L_n``, the number of stubs on each side."""
        return int(self.in_degrees.sum())

    @classmethod
    def from_graph(cls, g: DirectedMultigraph) -> "DegreeSequence":
        return cls(g.in_degrees, g.out_degrees)


@dataclass(frozen=True)
class AssumptionReport:
    """Empirical degree moments of a sequence and hub indicator."""

    eta1: float
    eta2: float
    eta3: float
    zeta_star: float
    lambda_star: float
    p_hat: float
    zeta: float
    lambda_: float

    def as_dict(self) -> dict:
        d = {k: float(v) for k, v in self.__dict__.items()}
        d["lambda"] = d.pop("lambda_")
        return d


@dataclass(frozen=True, eq=False)
class ConstructionTrace:
    """Outcome of one breadth-first stub-pairing run.

    Attributes
    ----------
    graph : DirectedMultigraph
        The paired edges. When ``complete`` is False only the stubs of
        nodes within ``max_depth - 1`` of the source are paired.
    source : int
    tau_g : int or float
        First coupling-break iteration, ``math.inf`` if none occurred.
    bfs_layers : list of ndarray
        ``A_0 = [source], A_1, ...`` in discovery order.
    final_labels : ndarray of str
        Label of every node, ``"A"`` for nodes never reached from the source.
    complete : bool
        Whether every stub was paired.
    resamples : int
        Number of draws that hit an already paired instub.
    """

    graph: DirectedMultigraph
    source: int
    tau_g: float
    bfs_layers: list
    final_labels: np.ndarray
    complete: bool
    resamples: int = 0

    def label(self, v: int) -> str:
        return str(self.final_labels[v])


def constant(c: int) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Out-degree model assigning ``c`` to every node."""
    if c < 0:
        raise ValueError("constant out-degree must be non-negative")

    def draw(rng, n):
        return np.full(n, int(c), dtype=np.int64)

    draw.description = f"constant({c})"
    return draw


def iid_from(values: Sequence[int], weights: Sequence[float] | None = None
             ) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Out-degree model drawing i.i.d. from a finite distribution."""
    values = np.asarray(values, dtype=np.int64)
    if (values < 0).any():
        raise ValueError("out-degree values must be non-negative")
    table = AliasTable(np.ones(values.size) if weights is None else weights)
    if len(table) != values.size:
        raise ValueError("values and weights differ in length")

    def draw(rng, n):
        return values[table.sample(rng, n)]

    draw.description = f"iid_from({values.size} values)"
    return draw


def power_law_weights(n: int, exponent: float) -> np.ndarray:
    """Unnormalized ``x**-exponent`` on ``x = 1..n``."""
    return np.arange(1, n + 1, dtype=np.float64) ** (-float(exponent))


def gen_power_law_degrees(n: int, exponent: float, out_degree_model=1, seed=None) -> DegreeSequence:
    """Power-law in-degrees with a chosen out-degree model, balanced.

    Parameters
    ----------
    n : int
        Number of nodes.
    exponent : float
        In-degrees are i.i.d. with ``P[N = x]`` proportional to
        ``x**-exponent`` on ``{1, ..., n}``.
    out_degree_model : int or callable, default 1
        An int ``c`` means every out-degree starts at ``c``; a callable
        ``f(rng, n)`` returns ``n`` draws (see :func:`constant`,
        :func:`iid_from`).
    seed : int or None

    Returns
    -------
    DegreeSequence
        After the draws, the side with the smaller total is incremented one
        unit at a time at uniformly chosen nodes until the totals agree.

    Notes
    -----
    With a constant out-degree of at least one no node is dangling, which
    the coupling experiments rely on.
    """
    if exponent <= 1:
        raise ValueError("exponent must exceed 1")
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    table = AliasTable(power_law_weights(n, exponent))
    N = table.sample(rng, n).astype(np.int64) + 1
    if callable(out_degree_model):
        D = np.asarray(out_degree_model(rng, n), dtype=np.int64)
    else:
        D = constant(int(out_degree_model))(rng, n)
    if D.shape != (n,) or (D < 0).any():
        raise ValueError("out-degree model must return n non-negative integers")
    gap = int(N.sum() - D.sum())
    if gap:
        bump = np.bincount(rng.integers(0, n, size=abs(gap)), minlength=n)
        if gap > 0:
            D = D + bump
        else:
            N = N + bump
    return DegreeSequence(N, D)


def hub_count(n: int, kappa: float) -> int:
    """``ceil(n**kappa)``, guarded against floating-point noise."""
    return min(int(n), ceil_guarded(float(n) ** float(kappa)))


def select_hubs_psi(deg: DegreeSequence, kappa: float) -> HubPartition:
    """The ``ceil(n**kappa)`` nodes of largest in-degree.

    Ties are broken by ascending node index.
    """
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    k = hub_count(deg.n, kappa)
    order = np.argsort(-deg.in_degrees, kind="stable")
    return HubPartition.from_hubs(np.sort(order[:k]), deg.n)


def select_hubs_top(deg: DegreeSequence, k: int) -> HubPartition:
    """The ``k`` nodes of largest in-degree, same tie-break as ψ."""
    order = np.argsort(-deg.in_degrees, kind="stable")
    return HubPartition.from_hubs(np.sort(order[:k]), deg.n)


def instub_hub_fraction(deg: DegreeSequence, hubs: HubPartition) -> float:
    """Share of instubs owned by hubs, ``sum_{v in K} N_v / L_n``."""
    if hubs.n != deg.n:
        raise ValueError("hub partition and degree sequence differ in length")
    if deg.total == 0:
        raise ValueError("degree sequence has no stubs")
    return float(deg.in_degrees[hubs.hub_list].sum() / deg.total)


def assumption_diagnostics(deg: DegreeSequence, hubs: HubPartition) -> AssumptionReport:
    """Empirical moments of the degree sequence.

    Returns
    -------
    AssumptionReport
        ``eta1 = sum N / n``, ``eta2 = sum N D / n``,
        ``eta3 = sum U N^2 / n``, ``zeta_star = sum U D / sum U``,
        ``lambda_star = sum U N / sum U``, ``p_hat = sum U N / sum N``,
        ``zeta = eta2 / eta1`` and ``lambda = eta3 / eta1``.
    """
    if hubs.n != deg.n:
        raise ValueError("hub partition and degree sequence differ in length")
    N = deg.in_degrees.astype(np.float64)
    D = deg.out_degrees.astype(np.float64)
    U = hubs.indicator.astype(np.float64)
    n = deg.n
    su, sn = U.sum(), N.sum()
    if su == 0:
        raise ZeroDivisionError("no non-hub nodes")
    if sn == 0:
        raise ZeroDivisionError("no stubs")
    eta1 = sn / n
    eta2 = float(N @ D) / n
    eta3 = float(U @ (N * N)) / n
    return AssumptionReport(
        eta1=eta1, eta2=eta2, eta3=eta3,
        zeta_star=float(U @ D) / su, lambda_star=float(U @ N) / su,
        p_hat=float(U @ N) / sn, zeta=eta2 / eta1, lambda_=eta3 / eta1,
    )


class _PairingContext:
    """Per-sequence lookup tables shared by many pairing runs."""

    def __init__(self, deg: DegreeSequence, hubs: HubPartition):
        if hubs.n != deg.n:
            raise ValueError("hub partition and degree sequence differ in length")
        self.deg = deg
        self.hubs = hubs
        self.n = deg.n
        self.L = deg.total
        self.N = deg.in_degrees.tolist()
        self.D = deg.out_degrees.tolist()
        self.U = hubs.indicator.tolist()
        self.owner = np.repeat(np.arange(deg.n), deg.in_degrees)
        self.owner_list = self.owner.tolist()
        self.non_hubs = hubs.non_hubs


class _GraphBuild:
    """Mutable state of one breadth-first pairing run.

    Labels and paired instubs live in a dict and a set so that runs stopped
    after a few iterations cost only what they explored.
    """

    def __init__(self, ctx: _PairingContext, source: int, rng: np.random.Generator):
        self.ctx = ctx
        self.rng = rng
        self.source = int(source)
        self.labels = {self.source: LABEL_D if ctx.U[source] else LABEL_B}
        self.paired: set[int] = set()
        self.adj: dict[int, list[int]] = {}
        self.src: list[int] = []
        self.dst: list[int] = []
        self.layers: list[list[int]] = [[self.source], []]
        self.tau = math.inf
        self.resamples = 0
        # cursor: iteration m, index into A_{m-1}, outstub j
        self.m, self.pos, self.j = 1, 0, 0
        self.pending: int | None = None
        self._buf: list[int] = []
        self._chunk = 32
        self.finished = ctx.L == 0

    def draw(self) -> int:
        if not self._buf:
            self._buf = self.rng.integers(0, self.ctx.L, size=self._chunk).tolist()
            self._buf.reverse()
            self._chunk = min(self._chunk * 2, 1 << 16)
        return self._buf.pop()

    def pair(self, vp: int, e: int, m: int) -> None:
        """Pair outstub of ``vp`` with instub ``e`` and update labels."""
        ctx = self.ctx
        v = ctx.owner_list[e]
        self.paired.add(e)
        self.src.append(vp)
        self.dst.append(v)
        self.adj.setdefault(vp, []).append(v)
        labels = self.labels
        gv = labels.get(v, LABEL_A)
        gvp = labels[vp]
        if gv == LABEL_A:
            self.layers[m].append(v)
        if gvp == LABEL_D and gv >= LABEL_C and self.tau == math.inf:
            self.tau = m
        if gv == LABEL_A:
            if not ctx.U[v]:
                labels[v] = LABEL_B
            elif gvp == LABEL_B:
                labels[v] = LABEL_C
            else:
                labels[v] = gvp
        elif gvp == LABEL_D and gv == LABEL_C:
            labels[v] = LABEL_D
            self._cascade(v)
        if len(self.paired) == ctx.L:
            self.finished = True

    def _cascade(self, v: int) -> None:
        # D nodes never have C out-neighbours, so the walk can stop at them
        labels, stack = self.labels, [v]
        while stack:
            u = stack.pop()
            for w in self.adj.get(u, ()):
                if labels.get(w) == LABEL_C:
                    labels[w] = LABEL_D
                    stack.append(w)

    def run(self, max_depth: int | None = None) -> None:
        """Continue breadth-first pairing from the cursor.

        Stops when all instubs are paired, when the explored component is
        exhausted, or after iteration ``max_depth``.
        """
        D = self.ctx.D
        paired = self.paired
        while not self.finished:
            m = self.m
            if max_depth is not None and m > max_depth:
                return
            prev = self.layers[m - 1]
            while self.pos < len(prev):
                vp = prev[self.pos]
                while self.j < D[vp]:
                    if self.pending is not None:
                        e, self.pending = self.pending, None
                    else:
                        e = self.draw()
                    if e in paired:
                        if self.tau == math.inf:
                            self.tau = m
                        while e in paired:
                            self.resamples += 1
                            e = self.draw()
                    self.pair(vp, e, m)
                    self.j += 1
                    if self.finished:
                        return
                self.pos += 1
                self.j = 0
            if not self.layers[m]:
                self._pair_unreached()
                return
            self.m, self.pos, self.j = m + 1, 0, 0
            self.layers.append([])

    def _pair_unreached(self) -> None:
        """Wire the stubs of nodes the source cannot reach.

        These pairings cannot change any label or ``tau``; a uniform
        matching of the leftover stubs has the same law as continuing the
        one-at-a-time draws.
        """
        ctx = self.ctx
        reached = np.zeros(ctx.n, dtype=bool)
        reached[np.fromiter(self.labels.keys(), dtype=np.int64)] = True
        D = ctx.deg.out_degrees
        rest = np.flatnonzero(~reached & (D > 0))
        if rest.size == 0:
            self.finished = True
            return
        tails = np.repeat(rest, D[rest])
        free = np.ones(ctx.L, dtype=bool)
        free[np.fromiter(self.paired, dtype=np.int64, count=len(self.paired))] = False
        heads = ctx.owner[self.rng.permutation(np.flatnonzero(free))]
        if heads.size != tails.size:
            raise AssertionError("stub counts disagree; degree sequence is unbalanced")
        self.src.extend(tails.tolist())
        self.dst.extend(heads.tolist())
        self.paired.update(range(ctx.L))
        self.finished = True

    def trace(self) -> ConstructionTrace:
        ctx = self.ctx
        labels = np.zeros(ctx.n, dtype=np.int64)
        if self.labels:
            keys = np.fromiter(self.labels.keys(), dtype=np.int64)
            labels[keys] = np.fromiter(self.labels.values(), dtype=np.int64)
        layers = [np.asarray(a, dtype=np.int64) for a in self.layers if a]
        g = build_from_pairs(np.column_stack([np.asarray(self.src, dtype=np.int64),
                                              np.asarray(self.dst, dtype=np.int64)]), ctx.n)
        return ConstructionTrace(g, self.source, self.tau, layers, LABEL_NAMES[labels],
                                 self.finished, self.resamples)


def _draw_source(ctx: _PairingContext, mode: str, rng: np.random.Generator) -> int:
    if mode == "uniform_all":
        return int(rng.integers(0, ctx.n))
    if mode == "uniform_non_hub":
        if ctx.non_hubs.size == 0:
            raise ValueError("uniform_non_hub needs at least one non-hub node")
        return int(ctx.non_hubs[rng.integers(0, ctx.non_hubs.size)])
    raise ValueError(f"unknown source_mode {mode!r}; expected one of {SOURCE_MODES}")


def construct_dcm(deg: DegreeSequence, hubs: HubPartition, source_mode: str = "uniform_all",
                  seed=None, max_depth: int | None = None, source: int | None = None,
                  _ctx: _PairingContext | None = None) -> ConstructionTrace:
    """Breadth-first configuration-model construction with labels.

    Parameters
    ----------
    deg : DegreeSequence
    hubs : HubPartition
    source_mode : {"uniform_all", "uniform_non_hub"}
        Law of the source node.
    seed : int, Generator or None
    max_depth : int, optional
        Stop after this many breadth-first iterations. The returned graph
        then holds only the stubs paired so far.
    source : int, optional
        Fix the source instead of drawing it.

    Returns
    -------
    ConstructionTrace

    Notes
    -----
    Each outstub first draws an instub uniformly from all ``L_n``; a
    paired hit sets ``tau_g`` and is redrawn until an unpaired instub
    appears. Once the source's component is exhausted the remaining stubs
    are matched uniformly at random.
    """
    ctx = _ctx if _ctx is not None else _PairingContext(deg, hubs)
    rng = np.random.default_rng(seed)
    s = _draw_source(ctx, source_mode, rng) if source is None else int(source)
    state = _GraphBuild(ctx, s, rng)
    state.run(max_depth)
    return state.trace()


def sample_dcm_graph(deg: DegreeSequence, seed=None) -> DirectedMultigraph:
    """Configuration-model graph from a uniform random stub matching.

    Has the same law as the graph produced by :func:`construct_dcm`,
    without labels, in vectorized time.
    """
    rng = np.random.default_rng(seed)
    tails = np.repeat(np.arange(deg.n), deg.out_degrees)
    heads = rng.permutation(np.repeat(np.arange(deg.n), deg.in_degrees))
    return build_from_pairs(np.column_stack([tails, heads]), deg.n)


def save_degrees(deg: DegreeSequence, path: str | os.PathLike, header: Sequence[str] = ()) -> None:
    """Write ``N_v D_v`` per line, or an ``.npz`` cache if the suffix says so."""
    path = os.fspath(path)
    if path.endswith(".npz"):
        np.savez(path, in_degrees=deg.in_degrees, out_degrees=deg.out_degrees)
        return
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        np.savetxt(fh, np.column_stack([deg.in_degrees, deg.out_degrees]), fmt="%d")


def load_degrees(path: str | os.PathLike) -> DegreeSequence:
    """Inverse of :func:`save_degrees`; raises ValueError if unbalanced."""
    path = os.fspath(path)
    if path.endswith(".npz"):
        with np.load(path) as data:
            return DegreeSequence(data["in_degrees"], data["out_degrees"])
    arr = np.loadtxt(path, dtype=np.int64, comments="#", ndmin=2)
    if arr.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns 'N D'")
    return DegreeSequence(arr[:, 0], arr[:, 1])
