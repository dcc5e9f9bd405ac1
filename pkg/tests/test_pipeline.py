import csv
import warnings

import numpy as np
import pytest

from dcrl.graphs import Cpdag, dag_to_cpdag
from dcrl.model import DenseLaw, ModelParams, densify, state_codes
from dcrl.pipeline import (BenchSpec, PipelineConfig, RunResult, SamplingRule, bench, evaluate, relabel_cpdag,
                           replicate_seed, resample_latents, run_pipeline)
from dcrl.saem import SaemConfig, permute_law
from dcrl.synth import SimDesign, make_rng, simulate

QUICK = SaemConfig(max_iter=80)


def truth_as_result(sim, cpdag=None, q=None, params=None):
    return RunResult(params or sim.params, sim.q if q is None else q, cpdag or dag_to_cpdag(sim.dag),
                     None, np.zeros((0, sim.dag.k), dtype=np.int8), {}, 0)


def test_sampling_rule():
    ns = [1000, 5000, 10_000]
    assert SamplingRule()(1234) == 1234
    assert SamplingRule("multiple", 3.0)(1000) == 3000
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert SamplingRule().validate(ns)
        assert SamplingRule("multiple", 3.0).validate(ns)
    square = SamplingRule("table", table={n: n * n for n in ns})
    with pytest.warns(RuntimeWarning):
        assert not square.validate(ns)
    with pytest.raises(KeyError):
        square(7)
    with pytest.raises(ValueError):
        SamplingRule("table", table={10: 5, 20: 5})
    with pytest.raises(ValueError):
        SamplingRule("multiple", 0.0)
    with pytest.raises(ValueError):
        SamplingRule("cubic")


def test_resample_shapes_and_degenerate():
    p = np.zeros(8)
    p[5] = 1.0
    z = resample_latents(p, 400, make_rng(1))
    assert z.shape == (400, 3) and np.all(z == [1, 0, 1])
    assert resample_latents(np.full(4, 0.25), 0, make_rng(1)).shape == (0, 2)
    with pytest.raises(ValueError):
        resample_latents(np.full(3, 1 / 3), 5, make_rng(1))
    with pytest.raises(ValueError):
        resample_latents(np.array([0.5, 0.6]), 5, make_rng(1))


def test_resample_frequencies():
    p = make_rng(3).dirichlet(np.ones(8))
    m = 1_000_000
    freq = np.bincount(state_codes(resample_latents(p, m, make_rng(4))), minlength=8) / m
    assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / m))


def test_default_rule_gives_n_rows_and_is_deterministic():
    sim = simulate(SimDesign("Chain-5", "Q1", "gaussian", 400, 2))
    cfg = PipelineConfig(saem=QUICK, seed=7)
    a = run_pipeline(sim.x, 5, sim.params.families, cfg)
    b = run_pipeline(sim.x, 5, sim.params.families, cfg)
    assert a.z_resampled.shape == (400, 5)
    assert np.array_equal(a.z_resampled, b.z_resampled)
    assert np.array_equal(a.params.b, b.params.b) and np.array_equal(a.q, b.q)
    assert a.cpdag == b.cpdag
    assert set(a.timings) == {"estimate", "resample", "discover"}
    c = run_pipeline(sim.x, 5, sim.params.families, PipelineConfig(saem=QUICK, seed=7,
                                                                   sampling=SamplingRule("multiple", 2.0)))
    assert c.z_resampled.shape == (800, 5)


def test_single_latent():
    rng = make_rng(11)
    z = rng.integers(0, 2, size=600)
    x = -1.0 + 2.0 * z[:, None] + rng.normal(size=(600, 3))
    res = run_pipeline(x, 1, "gaussian", PipelineConfig(saem=QUICK))
    assert res.cpdag == Cpdag(1, frozenset(), frozenset())
    assert res.q.shape == (3, 1)


def test_evaluate_perfect_and_missing_edge():
    sim = simulate(SimDesign("Model-5", "Q1", "gaussian", 10, 0))
    m = evaluate(truth_as_result(sim), sim.params, sim.dag, sim.q)
    assert m["shd"] == 0 and m["q_match"] and m["q_hamming"] == 0
    assert m["b_max_error"] == 0 and m["p_l1_error"] == pytest.approx(0, abs=1e-12)
    full = dag_to_cpdag(sim.dag)
    assert (2, 3) in full.directed
    missing = Cpdag(full.k, full.directed - {(2, 3)}, full.undirected)
    m = evaluate(truth_as_result(sim, cpdag=missing), sim.params, sim.dag, sim.q)
    assert m["shd"] == 1 and m["latent_shd"] == 1 and m["q_match"]


@pytest.mark.parametrize("perm", [[2, 0, 4, 1, 3], [4, 3, 2, 1, 0], [1, 2, 3, 4, 0]])
def test_evaluate_permuted_truth(perm):
    sim = simulate(SimDesign("Tree-5", "Q2", "gaussian", 10, 1))
    perm = np.array(perm)
    b = sim.params.b.copy()
    b[:, 1:] = sim.params.b[:, 1:][:, perm]
    # estimated latent c is true latent perm[c]
    law = DenseLaw(permute_law(densify(sim.params.law), perm))
    est = ModelParams(law, b, sim.params.gamma, sim.params.families)
    g = relabel_cpdag(dag_to_cpdag(sim.dag), [int(v) for v in np.argsort(perm)])
    res = truth_as_result(sim, cpdag=g, q=sim.q[:, perm], params=est)
    m = evaluate(res, sim.params, sim.dag, sim.q)
    assert m["shd"] == 0 and m["q_match"]
    assert m["b_max_error"] == pytest.approx(0, abs=1e-12)
    assert m["p_l1_error"] == pytest.approx(0, abs=1e-12)
    assert res.shd == 0 and res.q_exact_match


def test_evaluate_dimension_mismatch():
    sim = simulate(SimDesign("Chain-5", "Q1", "gaussian", 10, 0))
    with pytest.raises(ValueError):
        evaluate(truth_as_result(sim), sim.params, sim.dag, sim.q[:, :4])


def test_bench_outputs(tmp_path):
    spec = BenchSpec(dags=("Chain-5", "Chain-6"), ns=(300,), replicates=2, seed=3, saem=QUICK)
    rows, summary = bench(spec, str(tmp_path))
    assert [r["replicate"] for r in rows] == [0, 1, 0, 1]
    assert replicate_seed(3, 1) == 2
    with open(tmp_path / "results.csv") as fh:
        table = list(csv.DictReader(fh))
    assert list(table[0]) == ["dag", "q", "family", "n", "replicate", "shd", "q_match", "seconds"]
    assert len(table) == 4
    cells = {s["dag"]: s for s in summary}
    assert cells["Chain-6"]["failures"] == 2 and np.isnan(cells["Chain-6"]["mean_shd"])
    assert cells["Chain-5"]["successes"] == 2 and cells["Chain-5"]["mean_shd"] >= 0
    assert "Chain-6" in (tmp_path / "failures.txt").read_text()
    assert (tmp_path / "summary.csv").exists()


def test_bench_parallel_matches_serial():
    spec = BenchSpec(ns=(300,), replicates=2, seed=5, saem=QUICK)
    serial, _ = bench(spec)
    spec.n_jobs = 2
    parallel, _ = bench(spec)
    assert [r["shd"] for r in serial] == [r["shd"] for r in parallel]
    assert [r["q_match"] for r in serial] == [r["q_match"] for r in parallel]
