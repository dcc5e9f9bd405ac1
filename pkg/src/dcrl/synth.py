"""Benchmark designs and samplers for the simulation studies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import LatentDag, topological_order
from .model import BayesNetLaw, Family, ModelParams, as_family, as_qmatrix

# 1-based edges as drawn in the benchmark figures
_DAG_EDGES = {
    "Chain-5": (5, [(1, 2), (2, 3), (3, 4), (4, 5)]),
    "Tree-5": (5, [(1, 2), (1, 3), (2, 4), (2, 5)]),
    "Model-5": (5, [(1, 2), (3, 4), (5, 4)]),
    "Chain-10": (10, [(i, i + 1) for i in range(1, 10)]),
    "Tree-10": (10, [(1, 2), (1, 3), (2, 4), (2, 5), (3, 6), (3, 7), (4, 8), (4, 9), (5, 10)]),
    "Model-7": (7, [(1, 2), (1, 3), (2, 4), (2, 5), (3, 5), (3, 4), (4, 6), (5, 7)]),
    "Model-8": (8, [(1, 2), (1, 3), (2, 4), (2, 5), (3, 6), (3, 7), (5, 8), (6, 8)]),
    "Model-13": (13, [(1, 2), (1, 3), (2, 4), (2, 5), (3, 6), (3, 7),
                      (4, 8), (4, 9), (4, 10), (5, 8), (5, 9), (5, 10),
                      (6, 11), (6, 12), (6, 13), (7, 11), (7, 12), (7, 13)]),
}

DAG_NAMES = tuple(_DAG_EDGES)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream)])))


def benchmark_dag(name: str) -> LatentDag:
    if name not in _DAG_EDGES:
        raise ValueError(f"unknown benchmark DAG {name!r}; choose from {', '.join(DAG_NAMES)}")
    k, edges = _DAG_EDGES[name]
    return LatentDag(k, frozenset((a - 1, b - 1) for a, b in edges))


def build_q(kind: str, k: int) -> np.ndarray:
    """Banded Q' (tridiagonal for Q1, pentadiagonal for Q2) over two identities."""
    kind = kind.upper()
    width = {"Q1": 1, "Q2": 2}.get(kind)
    if width is None:
        raise ValueError(f"unknown Q design {kind!r}")
    if k < 3:
        raise ValueError("banded designs need k >= 3")
    idx = np.arange(k)
    band = (np.abs(idx[:, None] - idx[None, :]) <= width).astype(np.int8)
    eye = np.eye(k, dtype=np.int8)
    return np.vstack([band, eye, eye])


def _two_ranges(rng, lo, hi):
    a, b = (lo if rng.random() < 0.5 else hi)
    return rng.uniform(a, b)


def sample_cpts(dag: LatentDag, rng, randomize_mixed: bool = False) -> BayesNetLaw:
    """Draw CPTs with the balanced ranges of the simulation designs.

    For two-parent nodes the mixed configuration (0,1) gets the [0.35, 0.4]
    draw and (1,0) the [0.77, 0.82] draw unless ``randomize_mixed`` is set.
    """
    cpts = {}
    for v in range(dag.k):
        pa = dag.parents(v)
        if len(pa) == 0:
            cpts[v] = np.array([_two_ranges(rng, (0.3, 0.35), (0.65, 0.7))])
        elif len(pa) == 1:
            p1 = _two_ranges(rng, (0.3, 0.35), (0.65, 0.7))
            cpts[v] = np.array([1.0 - p1, p1])
        elif len(pa) == 2:
            p00 = rng.uniform(0.2, 0.25)
            p11 = rng.uniform(0.6, 0.65)
            low = rng.uniform(0.35, 0.4)
            high = rng.uniform(0.77, 0.82)
            if randomize_mixed and rng.random() < 0.5:
                low, high = high, low
            cpts[v] = np.array([p00, low, high, p11])
        else:
            raise ValueError(f"node {v} has {len(pa)} parents; designs support at most two")
    return BayesNetLaw(dag, cpts)


def assign_betas(q, family):
    """Intercepts and slopes per the simulation design; unit dispersion.

    Lognormal items reuse the Gaussian values on the log scale.
    """
    q = as_qmatrix(q)
    family = as_family(family)
    sums = q.sum(axis=1)
    if np.any(sums == 0):
        raise ValueError("every row of Q needs at least one 1")
    gaussian_like = family in (Family.GAUSSIAN, Family.LOGNORMAL)
    intercept, total = (-1.0, 3.0) if gaussian_like else (1.0, 2.0)
    b = np.zeros((q.shape[0], q.shape[1] + 1))
    b[:, 0] = intercept
    b[:, 1:] = q * (total / sums)[:, None]
    gamma = np.ones(q.shape[0]) if family.has_dispersion else np.zeros(q.shape[0])
    return b, gamma


def sample_latents(law: BayesNetLaw, n: int, rng) -> np.ndarray:
    z = np.zeros((n, law.k), dtype=np.int8)
    for v in topological_order(law.dag):
        p1 = law.cpts[v][law.parent_config(v, z)] if n else np.zeros(0)
        z[:, v] = rng.random(n) < p1
    return z


def sample_observed(z, params: ModelParams, rng) -> np.ndarray:
    z = np.asarray(z)
    eta = params.b[:, 0] + z @ params.b[:, 1:].T
    x = np.empty(eta.shape)
    for j, fam in enumerate(params.families):
        e = eta[:, j]
        if fam is Family.GAUSSIAN:
            x[:, j] = e + np.sqrt(params.gamma[j]) * rng.standard_normal(e.size)
        elif fam is Family.LOGNORMAL:
            x[:, j] = np.exp(e + np.sqrt(params.gamma[j]) * rng.standard_normal(e.size))
        elif fam is Family.POISSON:
            x[:, j] = rng.poisson(np.exp(e))
        else:
            x[:, j] = rng.random(e.size) < fam.mean(e)
    return x


@dataclass
class SimDesign:
    dag_name: str = "Chain-5"
    q_kind: str = "Q1"
    family: str = "gaussian"
    n: int = 1000
    seed: int = 0


@dataclass
class Simulation:
    design: SimDesign
    dag: LatentDag
    q: np.ndarray
    params: ModelParams
    z: np.ndarray
    x: np.ndarray


def simulate(design: SimDesign) -> Simulation:
    """Draw a ground-truth model and a dataset; deterministic in ``design.seed``."""
    rng = make_rng(design.seed, 0)
    dag = benchmark_dag(design.dag_name)
    q = build_q(design.q_kind, dag.k)
    law = sample_cpts(dag, rng)
    b, gamma = assign_betas(q, design.family)
    params = ModelParams(law, b, gamma, (as_family(design.family),) * q.shape[0])
    z = sample_latents(law, design.n, rng)
    x = sample_observed(z, params, rng)
    return Simulation(design, dag, q, params, z, x)
