"""Desk-scale acceptance criteria; one PASS/FAIL line per criterion is echoed at the end of the run."""

import itertools
import math

import numpy as np
import pytest

from dcrl.ges import LocalScorer, bdeu_local, ges, score_dag
from dcrl.graphs import LatentDag, d_separated, dag_to_cpdag, markov_equivalent
from dcrl.identcheck import generic_block_condition, strict_condition, subset_condition
from dcrl.model import BayesNetLaw, DenseLaw, ModelParams, conditional_loglik, densify
from dcrl.pipeline import BenchSpec, bench
from dcrl.saem import gibbs_sweep, make_state
from dcrl.spectral import link_scale_data
from dcrl.synth import benchmark_dag, build_q, make_rng, sample_cpts, sample_latents

import conftest
from conftest import all_dags
from test_graphs import _ci_holds, _dsep_signature, _mec_partition
from test_identcheck import COUNTEREXAMPLE

pytestmark = pytest.mark.slow

# reference composite SHD means per (dag, N) at f(N) = N, Gaussian, Q1
REFERENCE_K5 = {
    "Chain-5": {1000: 0.38, 5000: 0.02, 10_000: 0},
    "Tree-5": {1000: 0.47, 5000: 0.07, 10_000: 0},
    "Model-5": {1000: 1.42, 5000: 0.06, 10_000: 0},
}


def record(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def k5_grid():
    spec = BenchSpec(dags=tuple(REFERENCE_K5), ns=(1000, 5000, 10_000), replicates=20, seed=2024)
    rows, summary = bench(spec)
    return rows, {(s["dag"], s["n"]): s for s in summary}


def test_criterion_01_k5_grid(k5_grid):
    _, cells = k5_grid
    parts, ok = [], True
    for (dag, n), s in sorted(cells.items()):
        ref = REFERENCE_K5[dag][n]
        cell_ok = s["failures"] == 0 and s["mean_shd"] <= ref + 1.0 and (n != 10_000 or s["mean_shd"] <= 0.5)
        ok &= cell_ok
        parts.append(f"{dag}/{n}={s['mean_shd']:.2f}(ref {ref})")
    assert record(1, ok, "K=5 Gaussian Q1 grid, 20 reps, mean SHD (reference): " + ", ".join(parts))


def test_criterion_02_larger_designs():
    cells = {}
    for dag, q, ref in [("Model-7", "Q1", 0), ("Model-8", "Q2", 0.002)]:
        spec = BenchSpec(dags=(dag,), q_kinds=(q,), ns=(7000,), replicates=10, seed=2024)
        s = bench(spec)[1][0]
        cells[(dag, q, ref)] = s
    ok = all(s["failures"] == 0 and s["mean_shd"] <= 0.5 for s in cells.values())
    detail = ", ".join(f"{d}/{q}/7000={s['mean_shd']:.2f}(ref {r})" for (d, q, r), s in cells.items())
    assert record(2, ok, "K=7/8 Gaussian spot checks, 10 reps, bound 0.5: " + detail)


def test_criterion_03_monotone_in_n(k5_grid):
    _, cells = k5_grid
    lo, hi = cells[("Chain-5", 1000)]["mean_shd"], cells[("Chain-5", 10_000)]["mean_shd"]
    assert record(3, hi <= lo + 0.5, f"Chain-5 mean SHD N=10000 {hi:.2f} <= N=1000 {lo:.2f} + 0.5")


def test_criterion_04_gibbs_oracle():
    rng = np.random.default_rng(44)
    k, j, n = 3, 6, 10
    b = np.hstack([rng.normal(0, 0.5, (j, 1)), rng.normal(0, 1.0, (j, k))])
    params = ModelParams(DenseLaw(rng.dirichlet(np.full(2 ** k, 2.0))), b, np.full(j, 0.8), ("gaussian",) * j)
    z = rng.integers(0, 2, size=(n, k))
    x = b[:, 0] + z @ b[:, 1:].T + rng.normal(0, math.sqrt(0.8), (n, j))
    post = conditional_loglik(params, x) + np.log(params.law.probs)
    post = np.exp(post - post.max(axis=1, keepdims=True))
    post /= post.sum(axis=1, keepdims=True)
    state = make_state(np.zeros((n, k)), params.b, params.law.probs)
    y = link_scale_data(x, params.families)
    g = make_rng(4)
    burn, sweeps = 500, 100_000
    counts = np.zeros((n, 2 ** k))
    for t in range(burn + sweeps):
        gibbs_sweep(state, params, y, g)
        if t >= burn:
            counts[np.arange(n), state.codes] += 1
    tv = 0.5 * np.abs(counts / sweeps - post).sum(axis=1)
    assert record(4, tv.max() <= 0.02, f"K=3 J=6 Gibbs vs exact posterior, max TV over 10 subjects {tv.max():.4f}")


def test_criterion_05_ges_oracle():
    hits = {}
    for name in ("Chain-5", "Tree-5", "Model-5"):
        g = benchmark_dag(name)
        truth = dag_to_cpdag(g)
        hits[name] = 0
        for seed in range(20):
            law = sample_cpts(g, make_rng(seed))
            z = sample_latents(law, 10_000, make_rng(seed, 1))
            hits[name] += ges(z) == truth
    ok = all(h >= 18 for h in hits.values())
    assert record(5, ok, "GES+BDeu MEC recovery at N=10000: "
                  + ", ".join(f"{k} {v}/20" for k, v in hits.items()))


def test_criterion_06_bdeu_properties():
    worst = 0.0
    for k in (2, 3, 4):
        rng = np.random.default_rng(60 + k)
        d = (rng.random((500, k)) < rng.uniform(0.2, 0.8, size=k)).astype(int)
        d[:, -1] ^= d[:, 0] & (rng.random(500) < 0.4)
        scorer = LocalScorer(d)
        classes = {}
        for g in all_dags(k):
            classes.setdefault(dag_to_cpdag(g), []).append(score_dag(g, scorer=scorer))
        worst = max(worst, max(max(v) - min(v) for v in classes.values()))
    closed = abs(bdeu_local(0, (), np.array([[1], [1], [1], [0]])) - math.log(5 / 128))
    g = LatentDag(3, frozenset({(0, 1), (1, 2), (0, 2)}))
    law = BayesNetLaw(g, {0: [0.4], 1: [0.3, 0.7], 2: [0.2, 0.4, 0.6, 0.8]})
    gaps = {}
    for n in (1_000, 10_000, 100_000):
        d = sample_latents(law, n, make_rng(n, 6))
        gaps[n] = abs(score_dag(g, d, "bdeu") - score_dag(g, d, "bic"))
    ok = worst <= 1e-9 and closed <= 1e-9 and gaps[100_000] <= 2 * gaps[1_000] + 5
    assert record(6, ok, f"(a) max MEC score spread {worst:.1e}; (b) closed-form error {closed:.1e}; "
                  f"(c) BDeu-BIC gap {gaps[1_000]:.2f} / {gaps[10_000]:.2f} / {gaps[100_000]:.2f}")


def test_criterion_07_q_recovery(k5_grid):
    rows, _ = k5_grid
    sel = [r for r in rows if r["dag"] == "Chain-5" and r["n"] == 5000]
    rate = np.mean([r["q_match"] for r in sel])
    assert record(7, len(sel) == 20 and rate >= 0.9,
                  f"Gaussian K=5 Q1 N=5000 exact aligned Q in {int(round(rate * len(sel)))}/{len(sel)}")


def test_criterion_08_graph_layer():
    mismatch = 0
    for k in (3, 4):
        dags = all_dags(k)
        by_cpdag = _mec_partition(dags, dag_to_cpdag)
        mismatch += by_cpdag != _mec_partition(dags, _dsep_signature)
        reps = [dags[min(c)] for c in by_cpdag]
        for g in dags:
            cp = dag_to_cpdag(g)
            mismatch += sum(markov_equivalent(g, r) != (dag_to_cpdag(r) == cp) for r in reps)
    rng = np.random.default_rng(88)
    ci_bad = 0
    for _ in range(50):
        k = int(rng.integers(2, 5))
        pool = all_dags(k)
        g = pool[int(rng.integers(len(pool)))]
        law = BayesNetLaw(g, {v: rng.uniform(0.05, 0.95, size=2 ** len(g.parents(v))) for v in range(k)})
        p = densify(law)
        for a, b in itertools.combinations(range(k), 2):
            rest = [v for v in range(k) if v not in (a, b)]
            for r in range(len(rest) + 1):
                for c in itertools.combinations(rest, r):
                    ci_bad += d_separated(g, {a}, {b}, set(c)) != _ci_holds(p, k, a, b, c)
    ok = mismatch == 0 and ci_bad == 0
    assert record(8, ok, f"exhaustive 3/4-node MEC mismatches {mismatch}; d-separation vs CI disagreements {ci_bad}")


def test_criterion_09_identifiability():
    designs_ok = all(strict_condition(build_q(kind, k))[0] and generic_block_condition(build_q(kind, k))[0]
                     for kind in ("Q1", "Q2") for k in (5, 7, 8, 10, 13))
    ok_sub, pair = subset_condition(COUNTEREXAMPLE)
    ok = designs_ok and not ok_sub and tuple(pair) == (1, 3)
    assert record(9, ok, f"Q1/Q2 strict+generic {designs_ok}; counterexample subset fails with pair {pair}")


def test_criterion_10_family_ordering():
    means = {}
    for fam in ("gaussian", "poisson", "bernoulli"):
        spec = BenchSpec(dags=("Chain-10",), families=(fam,), ns=(7000,), replicates=10, seed=2024)
        means[fam] = bench(spec)[1][0]["mean_shd"]
    finite = all(np.isfinite(v) for v in means.values())
    ordered = means["gaussian"] <= means["poisson"] + 2.0 and means["poisson"] <= means["bernoulli"] + 2.0
    assert record(10, finite and ordered, "Chain-10 Q1 N=7000 mean SHD "
                  + ", ".join(f"{k} {v:.2f}" for k, v in means.items()) + " (ordering with 2.0 slack)")
