"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``PASS``/``FAIL`` line. Graph cases for the first
five criteria come from seeded builders so the neighborhood-mass check can
replay them.
"""

import math
import os
import time
from collections import deque

import numpy as np
import pytest

from conftest import dense_ppr_all, exact_estimation_error, random_hubs, random_multigraph
from pprhub.branching import build_distributions, coupling_distribution_check, grow_tree, simultaneous_construct
from pprhub.dcm import (DegreeSequence, construct_dcm, gen_power_law_degrees, hub_count, instub_hub_fraction,
                        sample_dcm_graph, select_hubs_psi, select_hubs_top)
from pprhub.estimator import (avg_error_bound, beta_weights, certify, dimensionality_curve,
                              error_histogram, estimate_pi_hat, iter_error_bound, zero_error_nodes)
from pprhub.graph import load_edge_list
from pprhub.ppr import (AlphaSchedule, bfs_ball, mu_truncated, ppr_exact, ppr_exact_many, ppr_hub_restricted,
                        ppr_monte_carlo)

ALPHAS = (0.05, 0.2, 0.5)
TAU = 0.1


@pytest.fixture
def verdict(capsys):
    def emit(number, name, ok, detail, started, budget):
        elapsed = time.perf_counter() - started
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number} [{name}] {detail} "
                  f"runtime={elapsed:.1f}s budget={budget:.0f}s")
        assert ok, detail
    return emit


# -- seeded case builders -------------------------------------------------------------------

def decomposition_cases():
    rng = np.random.default_rng(1001)
    for _ in range(100):
        n = int(rng.integers(20, 81))
        g = random_multigraph(rng, n)
        yield g, random_hubs(rng, n), float(rng.choice(ALPHAS))


def certificate_cases():
    rng = np.random.default_rng(1002)
    for _ in range(200):
        n = int(rng.integers(10, 61))
        g = random_multigraph(rng, n)
        hubs = random_hubs(rng, n)
        yield g, hubs, int(rng.choice(hubs.non_hubs)), float(rng.choice(ALPHAS)), rng


def sandwich_cases():
    rng = np.random.default_rng(1003)
    for _ in range(50):
        n = int(rng.integers(10, 61))
        g = random_multigraph(rng, n)
        yield g, random_hubs(rng, n), float(rng.choice(ALPHAS))


def linearity_cases():
    rng = np.random.default_rng(1004)
    for _ in range(20):
        n = int(rng.integers(10, 61))
        g = random_multigraph(rng, n)
        yield g, random_hubs(rng, n), float(rng.choice(ALPHAS))


def construction_cases():
    for seed in range(100):
        deg = gen_power_law_degrees(500, 2.0, seed=seed)
        hubs = select_hubs_psi(deg, 0.8)
        yield construct_dcm(deg, hubs, "uniform_all", seed=10_000 + seed), hubs, deg


def hub_free_reach(g, hubs, s):
    seen, queue = {s}, deque([s])
    while queue:
        u = queue.popleft()
        for w in g.out_neighbors(u).tolist():
            if w not in seen and not hubs.is_hub(w):
                seen.add(w)
                queue.append(w)
    return seen


# -- criteria -------------------------------------------------------------------------------------

def test_criterion_01_decomposition(verdict):
    # [DERIVED] pi_v = alpha 1_{V\K} pi~_v / (alpha + (1 - alpha) h) + sum_k beta_v(k) pi_k
    t0 = time.perf_counter()
    worst = 0.0
    for g, hubs, alpha in decomposition_cases():
        hub_vecs = dict(zip(hubs.hub_list.tolist(), ppr_exact_many(g, hubs.hub_list, alpha, tol=1e-10)))
        exact = ppr_exact_many(g, hubs.non_hubs, alpha, tol=1e-10)
        for row, v in zip(exact, hubs.non_hubs.tolist()):
            pr = ppr_hub_restricted(g, hubs, v, alpha, tol=1e-10)
            beta = beta_weights(pr, hubs, alpha)
            recon = alpha * hubs.indicator * pr.values / beta.denom + estimate_pi_hat(beta, hub_vecs)
            worst = max(worst, float(np.abs(recon - row).max()))
    verdict(1, "decomposition exactness", worst <= 1e-8, f"max_abs_dev={worst:.2e} tol=1e-08", t0, 60)


def test_criterion_02_certificate(verdict):
    # [DERIVED] certificate vs dense l1 error
    t0 = time.perf_counter()
    disagree = 0
    for g, hubs, v, alpha, rng in certificate_cases():
        err = exact_estimation_error(g, hubs, v, alpha)
        eps = float(rng.uniform(0, 1 - alpha))
        while abs(eps - err) < 1e-9:
            eps = float(rng.uniform(0, 1 - alpha))
        pr = ppr_hub_restricted(g, hubs, v, alpha, tol=1e-12)
        disagree += certify(pr, alpha, eps).passes != (err < eps)
    verdict(2, "certificate equivalence", disagree == 0, f"disagreements={disagree}/200", t0, 60)


def test_criterion_03_sandwich(verdict):
    # [DERIVED] true error <= bound <= true error + tol, bound <= 1 - alpha, zero on V_{n,0}
    t0 = time.perf_counter()
    tol = 1e-6
    bad = []
    for gi, (g, hubs, alpha) in enumerate(sandwich_cases()):
        pis = dense_ppr_all(g, alpha)
        zero = set(zero_error_nodes(g, hubs).tolist())
        for v in hubs.non_hubs.tolist():
            true = exact_estimation_error(g, hubs, v, alpha, pis)
            b = iter_error_bound(g, hubs, v, alpha, tol=tol).bound
            if not (true - 1e-12 <= b <= true + tol and b <= 1 - alpha + 1e-12):
                bad.append((gi, v, true, b))
            if v in zero and b != 0.0:
                bad.append((gi, v, "zero-set", b))
    verdict(3, "bound sandwich", not bad, f"violations={len(bad)} first={bad[:1]}", t0, 60)


def test_criterion_04_linearity(verdict):
    # [DERIVED] aggregate iterate is the mean of per-node iterates at equal i
    t0 = time.perf_counter()
    worst = 0.0
    for g, hubs, alpha in linearity_cases():
        for i in (1, 3, 10, 40):
            agg = avg_error_bound(g, hubs, alpha, iterations=i, early_exit=False)
            per = [iter_error_bound(g, hubs, v, alpha, iterations=i, early_exit=False).bound
                   for v in hubs.non_hubs.tolist()]
            worst = max(worst, abs(agg.bound - float(np.mean(per))))
    verdict(4, "average-error linearity", worst <= 1e-12, f"max_abs_dev={worst:.2e} tol=1e-12", t0, 30)


def test_criterion_05_construction(verdict):
    # [DERIVED] degrees match exactly and label D equals the hub-avoiding BFS reach
    t0 = time.perf_counter()
    deg_bad = lab_bad = 0
    for tr, hubs, deg in construction_cases():
        g = tr.graph
        deg_bad += not (np.array_equal(g.in_degrees, deg.in_degrees)
                        and np.array_equal(g.out_degrees, deg.out_degrees))
        d_nodes = set(np.flatnonzero(tr.final_labels == "D").tolist())
        expect = hub_free_reach(g, hubs, tr.source) if not hubs.is_hub(tr.source) else set()
        lab_bad += d_nodes != expect
    verdict(5, "degree preservation and labels", deg_bad == 0 and lab_bad == 0,
            f"degree_mismatch={deg_bad}/100 label_mismatch={lab_bad}/100", t0, 60)


def test_criterion_06_deterministic_coupling(verdict):
    # [DERIVED] graph-side occupancy equals the tree-side sum whenever tau_s > m
    t0 = time.perf_counter()
    n = 2000
    deg = gen_power_law_degrees(n, 2.0, seed=6)
    hubs = select_hubs_psi(deg, 0.8)
    alpha = AlphaSchedule().value(n)
    worst, checked = 0.0, 0
    for r, ss in enumerate(np.random.SeedSequence(6006).spawn(200)):
        m = 1 + r % 3
        run = simultaneous_construct(deg, hubs, alpha, m, seed=np.random.default_rng(ss))
        if run.tau_s > m:
            graph_side = mu_truncated(run.graph_side.graph, hubs, run.source, alpha, m)[0]
            worst = max(worst, abs(graph_side - float(run.tree_weights.per_generation[:m + 1].sum())))
            checked += 1
    verdict(6, "deterministic coupling", checked > 0 and worst <= 1e-12,
            f"runs_with_tau_s_gt_m={checked}/200 max_abs_dev={worst:.2e} tol=1e-12", t0, 120)


def test_criterion_07_distributional_coupling(verdict):
    # [PAPER] KS between conditioned graph samples and tree samples
    t0 = time.perf_counter()
    n = 10_000
    deg = gen_power_law_degrees(n, 2.0, seed=7)
    hubs = select_hubs_psi(deg, 0.8)
    alpha = AlphaSchedule().value(n)
    pvals = [coupling_distribution_check(deg, hubs, alpha, 2, 500, seed=70_000 + rep).pvalue
             for rep in range(10)]
    good = sum(p > 0.01 for p in pvals)
    verdict(7, "distributional coupling", good >= 9,
            f"reps_with_p_gt_0.01={good}/10 min_p={min(pvals):.3g}", t0, 600)


def test_criterion_08_martingale(verdict):
    # [DERIVED] E[X_j] = ((1 - alpha) p_hat)^j
    t0 = time.perf_counter()
    n = 10_000
    deg = gen_power_law_degrees(n, 2.0, seed=8)
    dist = build_distributions(deg, select_hubs_psi(deg, 0.8))
    alpha = AlphaSchedule().value(n)
    rows = np.array([grow_tree(dist, alpha, 3, np.random.default_rng(ss))[1].per_generation
                     for ss in np.random.SeedSequence(8008).spawn(10_000)])
    norm = rows / ((1 - alpha) * dist.p_hat) ** np.arange(4)
    z = [(norm[:, j].mean() - 1) / (norm[:, j].std(ddof=1) / math.sqrt(len(norm))) for j in (1, 2, 3)]
    verdict(8, "martingale mean", all(abs(x) <= 3 for x in z),
            "z=" + ",".join(f"{x:+.2f}" for x in z) + " limit=3", t0, 60)


def mc_sigma(g, v, alpha, walks):
    """Exact delta-method standard error of the ratio estimator.

    With ``G[u, w]`` the expected visits to ``w`` of a walk started at ``u``
    and ``c`` the visit counts of one walk from ``v``,
    ``E[c_u c_w] = E c_u G[u, w] + E c_w G[w, u] - [u = w] E c_u``.
    """
    G = dense_ppr_all(g, alpha) / alpha
    ec = G[v]
    M = ec[:, None] * G + (ec[:, None] * G).T - np.diag(ec)
    pi = alpha * ec
    el2 = (2 - alpha) / alpha ** 2
    var = (np.diag(M) - 2 * pi * M.sum(axis=1) + pi ** 2 * el2) * alpha ** 2
    return np.sqrt(np.maximum(var, 0.0) / walks)


def test_criterion_09_monte_carlo(verdict):
    # [DERIVED] renewal-reward estimate within 4 sigma of power iteration
    t0 = time.perf_counter()
    rng = np.random.default_rng(1009)
    walks, bad, coords = 100_000, 0, 0
    for trial in range(20):
        n = int(rng.integers(20, 81))
        g = random_multigraph(rng, n)
        v = int(rng.integers(n))
        alpha = float(rng.choice(ALPHAS))
        exact = ppr_exact(g, v, alpha, tol=1e-12).values
        est = ppr_monte_carlo(g, v, alpha, walks, seed=[1009, trial]).values
        sigma = mc_sigma(g, v, alpha, walks)
        bad += int(np.sum(np.abs(est - exact) > 4 * sigma + 1e-12))
        coords += n
    verdict(9, "Monte Carlo oracle", bad == 0, f"coordinates_outside_4sigma={bad}/{coords}", t0, 120)


def test_criterion_10_fig1(verdict):
    # [PAPER] the hubs keep a constant share of the instubs
    t0 = time.perf_counter()
    details, ok = [], True
    for kappa in (0.6, 0.7, 0.8):
        fr = []
        for n in (10 ** 3, 10 ** 4, 10 ** 5):
            deg = gen_power_law_degrees(n, 2.0, seed=[10, n])
            fr.append(instub_hub_fraction(deg, select_hubs_top(deg, hub_count(n, kappa))))
        ok &= max(fr) <= 2 * min(fr) and min(fr) > 0.05 and max(fr) < 0.95
        details.append(f"k{kappa}:" + "/".join(f"{f:.3f}" for f in fr))
    verdict(10, "instub hub fraction trend", ok, " ".join(details), t0, 300)


def test_criterion_11_average_error(verdict):
    # [PAPER] average certified bound falls along the size ladder
    t0 = time.perf_counter()
    medians = []
    for n in (10 ** 3, 10 ** 4, 10 ** 5):
        alpha = AlphaSchedule().value(n)
        vals = []
        for seed in range(5):
            deg = gen_power_law_degrees(n, 2.0, seed=[11, n, seed])
            g = sample_dcm_graph(deg, seed=[11, n, seed, 1])
            vals.append(avg_error_bound(g, select_hubs_psi(deg, 0.8), alpha, tol=1e-6).bound)
        medians.append(float(np.median(vals)))
    ok = medians[0] > medians[1] > medians[2]
    verdict(11, "average error trend", ok, "medians=" + "/".join(f"{m:.4f}" for m in medians), t0, 900)


def test_criterion_12_neighborhood(verdict):
    # [DERIVED] pi_s(ball of radius l) >= 1 - (1 - alpha)^l on every graph of criteria 1-5
    t0 = time.perf_counter()
    worst, checked = math.inf, 0

    def check(g, sources, alpha):
        nonlocal worst, checked
        radius = math.ceil(math.log(1 / TAU) / alpha)
        pis = ppr_exact_many(g, sources, alpha, tol=1e-12)
        for s, pi in zip(sources, pis):
            slack = pi[bfs_ball(g, int(s), radius)].sum() - (1 - (1 - alpha) ** radius)
            worst = min(worst, float(slack))
            checked += 1

    for g, hubs, alpha in decomposition_cases():
        check(g, hubs.non_hubs, alpha)
    for g, hubs, v, alpha, _ in certificate_cases():
        check(g, [v], alpha)
    for g, hubs, alpha in sandwich_cases():
        check(g, hubs.non_hubs, alpha)
    for g, hubs, alpha in linearity_cases():
        check(g, hubs.non_hubs, alpha)
    for tr, hubs, deg in construction_cases():
        check(tr.graph, [tr.source], AlphaSchedule().value(deg.n))
    verdict(12, "neighborhood mass", worst >= -1e-9, f"sources={checked} min_slack={worst:.2e}", t0, 300)


@pytest.mark.skipif(not os.environ.get("PPRHUB_POKEC"), reason="set PPRHUB_POKEC to a soc-Pokec edge list")
def test_criterion_13_pokec(verdict):
    # [PAPER] dataset-gated dimensionality check
    t0 = time.perf_counter()
    g = load_edge_list(os.environ["PPRHUB_POKEC"])[0]
    n = g.node_count
    alpha = AlphaSchedule().value(n)
    hubs = select_hubs_psi(DegreeSequence.from_graph(g), 0.8)
    frac = dimensionality_curve(g, hubs, alpha, [(1 - alpha) / 3]).delta_values[0] / n
    hist = error_histogram(g, hubs, alpha)
    spikes = hist.frequency[0] > 0 and hist.frequency[-1] > 0
    verdict(13, "soc-Pokec dimensionality", abs(frac - 0.09) <= 0.03 and spikes,
            f"delta_over_n={frac:.4f} target=0.09+-0.03 spikes={spikes}", t0, math.inf)
