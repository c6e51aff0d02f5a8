"""Command-line experiment harness.

Every subcommand reads its parameters from flags, optionally seeded from a
flat ``key = value`` config file (``--config``); flags win over the file.
Outputs are CSV/JSON files carrying a provenance header. Exit codes: 0 on
success, 2 on invalid input, 3 on numerical failure, with a JSON
diagnostic on stderr for the failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .branching import (build_distributions, coupling_break_rate, coupling_distribution_check,
                        grow_tree, tail_quantity)
from .dcm import (DegreeSequence, assumption_diagnostics, construct_dcm, gen_power_law_degrees,
                  hub_count, instub_hub_fraction, load_degrees, save_degrees, select_hubs_psi,
                  select_hubs_top, sample_dcm_graph)
from .errors import ConvergenceError, TreeExplodedError
from .estimator import (DIMENSIONALITY_KIND, avg_error_bound, certify, dimensionality_curve,
                        error_histogram, full_scheme, zero_error_nodes)
from .graph import (DANGLING_POLICY, DirectedMultigraph, HubPartition, load_binary, load_edge_list,
                    save_binary, write_edge_list, zero_error_set)
from .io import provenance, save_vector, write_csv, write_json
from .ppr import DEFAULT_MAX_ITER, AlphaSchedule, ppr_exact, ppr_hub_restricted_many, ppr_monte_carlo

logger = logging.getLogger(__name__)

WORKERS_ENV = "PPRHUB_WORKERS"
COMMANDS = ("generate", "fig1", "errors", "coupling", "ppr", "estimate", "certify", "tree")
_NOT_CONFIG = {"config", "output", "workers", "command", "verbose"}


class UsageError(ValueError):
    """Invalid command-line or config input."""


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(float(t)) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# -- parser -----------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=".", help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes for independent cells (default: ${WORKERS_ENV} or 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def _generator(p):
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--exponent", type=float, default=2.0)
    p.add_argument("--out-degree", type=int, default=1,
                   help="constant initial out-degree before balancing")
    p.add_argument("--degrees", help="two-column 'N D' file instead of generating")


def _graph(p):
    _generator(p)
    p.add_argument("--graph", help="SNAP edge list, or a .bin cache written by 'generate'")


def _hubs(p):
    p.add_argument("--kappa", type=float, default=0.8)
    p.add_argument("--hub-file", help="explicit hub ids, one per line")


def _alpha(p):
    p.add_argument("--alpha-mode", choices=("log_inverse", "claim1", "constant"), default=None,
                   help="default: constant if --alpha is given, else log_inverse")
    p.add_argument("--alpha", type=float, default=None, help="value for --alpha-mode constant")
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--zeta", type=float, default=None, help="default: empirical zeta of the input")
    p.add_argument("--tol", type=float, default=1e-6)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pprhub", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pprhub {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("generate", help="power-law degree sequence and configuration-model graph")
    _common(p), _generator(p)
    p.add_argument("--kappa", type=float, default=0.8)
    p.add_argument("--construction", choices=("matching", "bfs"), default="matching")

    p = sub.add_parser("fig1", help="instub share of the hubs across a size ladder")
    _common(p)
    p.add_argument("--n-ladder", type=_ints, default=_ints("1000,10000,100000"))
    p.add_argument("--kappa-ladder", type=_floats, default=_floats("0.6,0.7,0.8"))
    p.add_argument("--replicates", type=int, default=3)
    p.add_argument("--exponent", type=float, default=2.0)
    p.add_argument("--out-degree", type=int, default=1)

    p = sub.add_parser("errors", help="error histogram, dimensionality curve, average error")
    _common(p), _graph(p), _hubs(p), _alpha(p)
    p.add_argument("--epsilons", type=_floats, default=None,
                   help="default: 21 points evenly spaced on [0, 1 - alpha]")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--kappa-ladder", type=_floats, default=None)

    p = sub.add_parser("coupling", help="graph/tree coupling: KS test and break-rate trend")
    _common(p), _generator(p), _alpha(p)
    p.add_argument("--kappa", type=float, default=0.8)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--n-ladder", type=_ints, default=_ints("1000,10000"))

    p = sub.add_parser("ppr", help="PPR vector of one node")
    _common(p), _graph(p), _alpha(p)
    p.add_argument("--node", type=int, required=False, default=None, help="node id (raw id for edge lists)")
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--walks", type=int, default=100_000)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help="power-iteration cap")

    p = sub.add_parser("estimate", help="estimate all PPR vectors through the hubs")
    _common(p), _graph(p), _hubs(p), _alpha(p)
    p.add_argument("--epsilon", type=float, default=0.1)

    p = sub.add_parser("certify", help="error certificates of non-hub nodes")
    _common(p), _graph(p), _hubs(p), _alpha(p)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--nodes", type=_ints, default=None, help="default: every non-hub")

    p = sub.add_parser("tree", help="grow branching-process trees")
    _common(p), _generator(p), _alpha(p)
    p.add_argument("--kappa", type=float, default=0.8)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--trees", type=int, default=1000)
    return parser


def parse_args(argv):
    argv = list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    config = read_config(known.config) if known.config else {}
    if config.get("command") and not any(a in COMMANDS for a in argv):
        argv = [config["command"]] + argv
    parser = build_parser()
    if config:
        for action in parser._subparsers._group_actions:
            for name, sp in action.choices.items():
                dests = {a.dest for a in sp._actions}
                sp.set_defaults(**{k: v for k, v in config.items() if k in dests})
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise UsageError("no command given")
    unknown = set(config) - set(vars(args)) - {"command"}
    if unknown:
        raise UsageError(f"unknown config keys for '{args.command}': {sorted(unknown)}")
    return args


# -- shared helpers -----------------------------------------------------------

def _resolved_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _map(fn, cells, workers):
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def _degrees(args) -> DegreeSequence:
    if getattr(args, "degrees", None):
        return load_degrees(args.degrees)
    return gen_power_law_degrees(args.n, args.exponent, args.out_degree, seed=args.seed)


def _graph_input(args) -> DirectedMultigraph:
    if getattr(args, "graph", None):
        if str(args.graph).endswith(".bin"):
            return load_binary(args.graph)
        return load_edge_list(args.graph)[0]
    return sample_dcm_graph(_degrees(args), seed=args.seed + 1)


def _to_dense(g: DirectedMultigraph, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if g.raw_ids is None:
        if ids.size and (ids.min() < 0 or ids.max() >= g.node_count):
            raise UsageError("node id out of range")
        return ids
    pos = np.searchsorted(g.raw_ids, ids)
    pos = np.minimum(pos, g.node_count - 1)
    if ids.size and not np.array_equal(g.raw_ids[pos], ids):
        raise UsageError(f"unknown node ids: {ids[g.raw_ids[pos] != ids][:5].tolist()}")
    return pos


def _raw(g: DirectedMultigraph, dense) -> np.ndarray:
    dense = np.asarray(dense, dtype=np.int64)
    return g.raw_ids[dense] if g.raw_ids is not None else dense


def _hub_partition(args, g: DirectedMultigraph, kappa=None) -> HubPartition:
    if getattr(args, "hub_file", None) and kappa is None:
        ids = np.loadtxt(args.hub_file, dtype=np.int64, comments="#", ndmin=1)
        return HubPartition.from_hubs(_to_dense(g, ids), g.node_count)
    kappa = args.kappa if kappa is None else kappa
    return _psi(DegreeSequence.from_graph(g), kappa)


def _psi(deg: DegreeSequence, kappa: float) -> HubPartition:
    # kappa = 0 is the harness shorthand for an empty hub set
    if kappa == 0:
        return HubPartition.empty(deg.n)
    return select_hubs_psi(deg, kappa)


def _schedule(args, deg: DegreeSequence) -> AlphaSchedule:
    if args.alpha_mode is None:
        args.alpha_mode = "constant" if args.alpha is not None else "log_inverse"
    if args.alpha_mode == "constant":
        if args.alpha is None:
            raise UsageError("--alpha-mode constant needs --alpha")
        return AlphaSchedule("constant", a=args.alpha)
    if args.alpha_mode == "claim1":
        zeta = args.zeta
        if zeta is None:
            zeta = assumption_diagnostics(deg, HubPartition.empty(deg.n)).zeta
        return AlphaSchedule("claim1", rho=args.rho, tau=args.tau, zeta=zeta)
    return AlphaSchedule("log_inverse")


def _alpha_value(args, deg: DegreeSequence) -> float:
    return _schedule(args, deg).value(deg.n)


# -- commands ------------------------------------------------------------------

def cmd_generate(args, prov, out: Path) -> dict:
    deg = _degrees(args)
    if args.construction == "bfs":
        g = construct_dcm(deg, HubPartition.empty(deg.n), "uniform_all", seed=args.seed + 1).graph
    else:
        g = sample_dcm_graph(deg, seed=args.seed + 1)
    hubs = _psi(deg, args.kappa)
    header = [f"pprhub {__version__} command=generate", f"config_sha256={prov['config_sha256']} seed={args.seed}"]
    save_degrees(deg, out / "degrees.txt", header)
    write_edge_list(g, out / "graph.tsv", header)
    save_binary(g, out / "graph.bin")
    vals, counts = np.unique(deg.in_degrees, return_counts=True)
    write_csv(out / "indegree_hist.csv", ["in_degree", "count", "fraction"],
              zip(vals.tolist(), counts.tolist(), counts / deg.n), prov)
    report = {"n": deg.n, "L": deg.total, "hub_count": hubs.hub_count, "kappa": args.kappa,
              "instub_hub_fraction": instub_hub_fraction(deg, hubs),
              "dangling_nodes": int((deg.out_degrees == 0).sum()),
              "assumption_diagnostics": assumption_diagnostics(deg, hubs).as_dict()}
    write_json(out / "generate.json", report, prov)
    return report


def _fig1_cell(cell):
    n, rep, seed, exponent, out_degree, kappas = cell
    deg = gen_power_law_degrees(n, exponent, out_degree, seed=np.random.SeedSequence([seed, n, rep]))
    rows = []
    for kappa in kappas:
        k = hub_count(n, kappa) if kappa < 1 else n
        hubs = select_hubs_top(deg, k)
        rows.append((n, kappa, rep, k, instub_hub_fraction(deg, hubs)))
    return rows


def cmd_fig1(args, prov, out: Path) -> dict:
    ladder = list(args.n_ladder)
    if ladder != sorted(ladder) or not ladder:
        raise UsageError("--n-ladder must be non-empty and sorted")
    if any(not 0 < k <= 1 for k in args.kappa_ladder):
        raise UsageError("kappa values must lie in (0, 1]; 1 means every node is a hub")
    cells = [(n, r, args.seed, args.exponent, args.out_degree, tuple(args.kappa_ladder))
             for n in ladder for r in range(args.replicates)]
    rows = [row for chunk in _map(_fig1_cell, cells, _workers(args)) for row in chunk]
    rows.sort(key=lambda r: (r[1], r[0], r[2]))
    write_csv(out / "fig1.csv", ["n", "kappa", "replicate", "hub_count", "instub_hub_fraction"], rows, prov)
    summary = []
    for kappa in args.kappa_ladder:
        sel = [r for r in rows if r[1] == kappa]
        ns = np.array(sorted({r[0] for r in sel}), dtype=float)
        means = np.array([np.mean([r[4] for r in sel if r[0] == n]) for n in ns])
        slope = float(np.polyfit(np.log(ns), means, 1)[0]) if ns.size > 1 else 0.0
        summary.append((kappa, slope, float(means.min()), float(means.max())))
    write_csv(out / "fig1_summary.csv", ["kappa", "slope_vs_log_n", "min_mean_fraction", "max_mean_fraction"],
              summary, prov)
    return {"rows": len(rows)}


def cmd_errors(args, prov, out: Path) -> dict:
    g = _graph_input(args)
    deg = DegreeSequence.from_graph(g)
    alpha = _alpha_value(args, deg)
    hubs = _hub_partition(args, g)
    eps = args.epsilons if args.epsilons is not None else np.linspace(0.0, 1.0 - alpha, 21).tolist()
    hist = error_histogram(g, hubs, alpha, args.bins, args.tol)
    write_csv(out / "histogram.csv", ["bin_left", "bin_right", "frequency"],
              zip(hist.bin_left, hist.bin_right, hist.frequency), prov)
    curve = dimensionality_curve(g, hubs, alpha, sorted(eps), args.tol)
    write_csv(out / "dimensionality.csv", ["epsilon", "delta", "delta_over_n", "indeterminate"],
              zip(curve.epsilons, curve.delta_values.tolist(), curve.delta_values / g.node_count,
                  curve.indeterminate.tolist()), prov)
    ladder = args.kappa_ladder if args.kappa_ladder else [None]
    avg_rows = []
    for kappa in ladder:
        h = hubs if kappa is None else _hub_partition(args, g, kappa)
        if h.non_hubs.size == 0:
            continue
        st = avg_error_bound(g, h, alpha, args.tol)
        avg_rows.append((args.kappa if kappa is None else kappa, h.hub_count, st.bound, st.i))
    write_csv(out / "avg_error.csv", ["kappa", "hub_count", "avg_error_bound", "iterations"], avg_rows, prov)
    probe = (1.0 - alpha) / 3.0
    probe_curve = dimensionality_curve(g, hubs, alpha, [probe], args.tol)
    report = {"n": g.node_count, "L": g.edge_count, "hub_count": hubs.hub_count, "alpha": alpha,
              "zero_error_nodes": int(zero_error_nodes(g, hubs).size),
              "structural_zero_error_nodes": int(zero_error_set(g, hubs).size),
              "delta_at_one_third_of_1_minus_alpha": int(probe_curve.delta_values[0]),
              "delta_over_n_at_one_third_of_1_minus_alpha": float(probe_curve.delta_values[0] / g.node_count),
              "average_error_bound": avg_error_bound(g, hubs, alpha, args.tol).bound
              if hubs.non_hubs.size else None,
              "dimensionality_kind": DIMENSIONALITY_KIND, "dangling": DANGLING_POLICY,
              "dangling_nodes": int(g.dangling.sum())}
    write_json(out / "errors.json", report, prov)
    return report


def _break_rate_cell(cell):
    n, exponent, out_degree, kappa, m, runs, seed, alpha = cell
    deg = gen_power_law_degrees(n, exponent, out_degree, seed=np.random.SeedSequence([seed, n]))
    hubs = _psi(deg, kappa)
    zeta = assumption_diagnostics(deg, hubs).zeta
    rate = coupling_break_rate(deg, hubs, alpha, m, runs, seed=[seed, n, 1])
    return (n, m, runs, rate, zeta, zeta ** m / math.sqrt(n), alpha)


def cmd_coupling(args, prov, out: Path) -> dict:
    deg = _degrees(args)
    hubs = _psi(deg, args.kappa)
    alpha = _alpha_value(args, deg)
    rep = coupling_distribution_check(deg, hubs, alpha, args.m, args.runs, seed=args.seed)
    body = rep.as_dict()
    body.update({"n": deg.n, "kappa": args.kappa, "p_hat": assumption_diagnostics(deg, hubs).p_hat})
    write_json(out / "coupling.json", body, prov)
    samples = [(i, "graph", v) for i, v in enumerate(rep.graph_values.tolist())]
    samples += [(i, "tree", v) for i, v in enumerate(rep.tree_values.tolist())]
    write_csv(out / "coupling_samples.csv", ["run_id", "side", "value"], samples, prov)
    schedule = _schedule(args, deg)
    cells = [(n, args.exponent, args.out_degree, args.kappa, args.m, args.runs, args.seed, schedule.value(n))
             for n in args.n_ladder]
    rows = _map(_break_rate_cell, cells, _workers(args))
    write_csv(out / "tau_trend.csv", ["n", "m", "runs", "break_rate", "zeta", "zeta_m_over_sqrt_n", "alpha"],
              rows, prov)
    return body


def cmd_ppr(args, prov, out: Path) -> dict:
    g = _graph_input(args)
    alpha = _alpha_value(args, DegreeSequence.from_graph(g))
    node = args.node
    if node is None:
        node = int(_raw(g, [0])[0])
    v = int(_to_dense(g, [node])[0])
    if args.method == "mc":
        pr = ppr_monte_carlo(g, v, alpha, args.walks, seed=args.seed)
    else:
        pr = ppr_exact(g, v, alpha, tol=args.tol, max_iter=args.max_iter)
    save_vector(pr, out / f"ppr_{node}", g.raw_ids, prov)
    return {"node": node, "alpha": alpha, "residual": pr.residual, "iterations": pr.iterations}


def cmd_estimate(args, prov, out: Path) -> dict:
    g = _graph_input(args)
    alpha = _alpha_value(args, DegreeSequence.from_graph(g))
    hubs = _hub_partition(args, g)
    rep = full_scheme(g, hubs, alpha, args.epsilon, args.tol, cache_path=out / "hub_vectors.npy")
    body = rep.as_dict()
    body["estimated_nodes"] = _raw(g, rep.estimated).tolist()
    body["computed_exactly_nodes"] = _raw(g, rep.computed_exactly).tolist()
    write_json(out / "scheme.json", body, prov)
    return rep.as_dict()


def cmd_certify(args, prov, out: Path) -> dict:
    g = _graph_input(args)
    alpha = _alpha_value(args, DegreeSequence.from_graph(g))
    hubs = _hub_partition(args, g)
    nodes = hubs.non_hubs if args.nodes is None else _to_dense(g, args.nodes)
    if np.any(~hubs.indicator[nodes]):
        raise UsageError("certificates are defined for non-hub nodes only")
    rows = []
    for pr in ppr_hub_restricted_many(g, hubs, nodes, alpha, args.tol):
        c = certify(pr, alpha, args.epsilon)
        rows.append((int(_raw(g, [c.owner])[0]), c.hub_mass, c.certified_l1_bound, c.epsilon,
                     int(c.passes), int(c.indeterminate)))
    write_csv(out / "certificates.csv",
              ["node", "hub_mass", "certified_l1_bound", "epsilon", "passes", "indeterminate"], rows, prov)
    return {"nodes": len(rows), "passing": int(sum(r[4] for r in rows))}


def cmd_tree(args, prov, out: Path) -> dict:
    deg = _degrees(args)
    hubs = _psi(deg, args.kappa)
    alpha = _alpha_value(args, deg)
    dist = build_distributions(deg, hubs)
    rows, norm, tails = [], [], []
    scale = (1.0 - alpha) * dist.p_hat
    for t, ss in enumerate(np.random.SeedSequence(args.seed).spawn(args.trees)):
        tree, w = grow_tree(dist, alpha, args.m, np.random.default_rng(ss))
        X = w.per_generation
        for j, x in enumerate(X.tolist()):
            rows.append((t, j, x, x / scale ** j, tree.generation(j).size))
        norm.append(X / scale ** np.arange(X.size))
        if args.m >= 1:
            tails.append(tail_quantity(w, alpha, args.m))
    write_csv(out / "tree.csv", ["tree_id", "generation", "X", "X_normalized", "nodes"], rows, prov)
    norm = np.array(norm)
    report = {"trees": args.trees, "m": args.m, "alpha": alpha, "p_hat": dist.p_hat,
              "normalized_mean": norm.mean(axis=0).tolist(),
              "normalized_stderr": (norm.std(axis=0, ddof=1) / math.sqrt(len(norm))).tolist()
              if len(norm) > 1 else None,
              "tail_quantity_mean": float(np.mean(tails)) if tails else None}
    write_json(out / "tree.json", report, prov)
    return report


_HANDLERS = {"generate": cmd_generate, "fig1": cmd_fig1, "errors": cmd_errors, "coupling": cmd_coupling,
             "ppr": cmd_ppr, "estimate": cmd_estimate, "certify": cmd_certify, "tree": cmd_tree}


def _fail(code: int, kind: str, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return 2
    except (UsageError, ValueError, OSError) as exc:
        return _fail(2, "validation", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail(2, "validation", exc)
    prov = provenance(_resolved_config(args), args.command)
    try:
        result = _HANDLERS[args.command](args, prov, out)
    except (ConvergenceError, TreeExplodedError, FloatingPointError) as exc:
        return _fail(3, "numerical", exc)
    except (ValueError, OSError, KeyError) as exc:
        return _fail(2, "validation", exc)
    sys.stdout.write(json.dumps(result, default=float, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
