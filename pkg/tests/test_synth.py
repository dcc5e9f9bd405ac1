import numpy as np
import pytest
from hypothesis import given, strategies as st

from dcrl.graphs import LatentDag
from dcrl.identcheck import strict_condition, subset_condition
from dcrl.model import BayesNetLaw, DenseLaw, ModelParams, all_states, check_monotone_sums, densify, state_codes
from dcrl.synth import (DAG_NAMES, SimDesign, assign_betas, benchmark_dag, build_q, make_rng, sample_cpts,
                        sample_latents, sample_observed, simulate)


def one_based(g):
    return {(a + 1, b + 1) for a, b in g.edges}


def test_benchmark_dags():
    assert one_based(benchmark_dag("Chain-5")) == {(1, 2), (2, 3), (3, 4), (4, 5)}
    assert one_based(benchmark_dag("Model-5")) == {(1, 2), (3, 4), (5, 4)}
    assert one_based(benchmark_dag("Model-8")) == {(1, 2), (1, 3), (2, 4), (2, 5), (3, 6), (3, 7), (5, 8), (6, 8)}
    assert {n: benchmark_dag(n).k for n in DAG_NAMES} == {
        "Chain-5": 5, "Tree-5": 5, "Model-5": 5, "Chain-10": 10, "Tree-10": 10,
        "Model-7": 7, "Model-8": 8, "Model-13": 13}
    with pytest.raises(ValueError):
        benchmark_dag("Chain-6")


def test_build_q_counts():
    assert build_q("Q1", 10).sum() == 48
    assert build_q("Q2", 10).sum() == 64
    assert build_q("Q1", 5).sum() == 23
    assert build_q("Q1", 7).shape == (21, 7)
    with pytest.raises(ValueError):
        build_q("Q3", 5)
    with pytest.raises(ValueError):
        build_q("Q1", 2)


@pytest.mark.parametrize("kind", ["Q1", "Q2"])
@pytest.mark.parametrize("k", [3, 5, 7, 8, 10, 13])
def test_designs_identifiable(kind, k):
    q = build_q(kind, k)
    assert strict_condition(q)[0]
    assert subset_condition(q)[0]


@given(st.integers(0, 2 ** 40), st.sampled_from(DAG_NAMES))
def test_cpt_ranges(seed, name):
    g = benchmark_dag(name)
    law = sample_cpts(g, make_rng(seed))
    for v in range(g.k):
        t = law.cpts[v]
        assert np.all((t > 0) & (t < 1))
        npa = len(g.parents(v))
        if npa == 0:
            assert 0.3 <= t[0] <= 0.35 or 0.65 <= t[0] <= 0.7
        elif npa == 1:
            assert t[0] == pytest.approx(1 - t[1])
            assert 0.3 <= t[1] <= 0.35 or 0.65 <= t[1] <= 0.7
        else:
            assert 0.2 <= t[0] <= 0.25 and 0.6 <= t[3] <= 0.65
            assert 0.35 <= t[1] <= 0.4 and 0.77 <= t[2] <= 0.82
    assert np.all(densify(law) > 0)


def test_betas():
    q = build_q("Q1", 5)
    b, g = assign_betas(q, "gaussian")
    assert np.allclose(b[1], [-1, 1, 1, 1, 0, 0]) and np.allclose(g, 1)
    b, g = assign_betas(q, "bernoulli")
    assert np.allclose(b[5], [1, 2, 0, 0, 0, 0]) and np.allclose(g, 0)
    assert np.allclose(b[0], [1, 1, 1, 0, 0, 0])
    assert check_monotone_sums(b).all()
    with pytest.raises(ValueError):
        assign_betas(np.zeros((2, 2), dtype=int), "gaussian")


def test_sample_latents_frequencies():
    law = sample_cpts(benchmark_dag("Tree-5"), make_rng(4))
    n = 100_000
    z = sample_latents(law, n, make_rng(4, 9))
    freq = np.bincount(state_codes(z), minlength=32) / n
    p = densify(law)
    assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-12)
    assert sample_latents(law, 0, make_rng(1)).shape == (0, 5)
    assert np.array_equal(sample_latents(law, 50, make_rng(8)), sample_latents(law, 50, make_rng(8)))


def test_sample_observed_moments():
    n = 100_000
    law = DenseLaw(np.array([1.0 - 1e-12, 1e-12]))
    z = np.zeros((n, 1), dtype=np.int8)
    fams = ("bernoulli", "gaussian", "poisson", "lognormal")
    b = np.array([[0.0, 1.0], [0.5, 1.0], [np.log(2), 1.0], [0.2, 1.0]])
    x = sample_observed(z, ModelParams(law, b, np.array([0.0, 1.0, 0.0, 0.5]), fams), make_rng(2))
    assert abs(x[:, 0].mean() - 0.5) < 4 * 0.5 / np.sqrt(n)
    assert abs(x[:, 1].var() - 1.0) < 0.02 and abs(x[:, 1].mean() - 0.5) < 0.02
    assert abs(x[:, 2].mean() - 2.0) < 4 * np.sqrt(2 / n)
    assert abs(np.log(x[:, 3]).mean() - 0.2) < 0.01 and abs(np.log(x[:, 3]).var() - 0.5) < 0.01


def test_simulate_reproducible():
    a = simulate(SimDesign("Model-5", "Q2", "poisson", 300, 11))
    b = simulate(SimDesign("Model-5", "Q2", "poisson", 300, 11))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.z, b.z)
    c = simulate(SimDesign("Model-5", "Q2", "poisson", 300, 12))
    assert not np.array_equal(a.x, c.x)
    assert a.x.shape == (300, 15) and np.all(a.x >= 0)
