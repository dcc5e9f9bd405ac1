"""Greedy equivalence search over binary latent data with BDeu or BIC scores."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .graphs import Cpdag, LatentDag, consistent_extension, dag_to_cpdag

GAIN_TOL = 1e-10


def _as_binary(data) -> np.ndarray:
    d = np.asarray(data)
    if d.ndim != 2:
        raise ValueError("data must be an N x K matrix")
    if d.size and not np.isin(d, (0, 1)).all():
        raise ValueError("data must be binary 0/1")
    return d.astype(np.int64)


def family_counts(data, v: int, parents) -> np.ndarray:
    """Contingency table N[u, k]: parent configuration u (first parent = MSB), state k."""
    d = _as_binary(data)
    pa = sorted(parents)
    if v in pa:
        raise ValueError("parents must exclude v")
    code = np.zeros(d.shape[0], dtype=np.int64)
    for p in pa:
        code = 2 * code + d[:, p]
    q = 2 ** len(pa)
    return np.bincount(2 * code + d[:, v], minlength=2 * q).reshape(q, 2).astype(float)


def bdeu_from_counts(counts, ess: float = 1.0) -> float:
    counts = np.asarray(counts, dtype=float)
    q, r = counts.shape
    a_uk = ess / (q * r)
    a_u = ess / q
    n_u = counts.sum(axis=1)
    return float(np.sum(gammaln(a_u) - gammaln(a_u + n_u))
                 + np.sum(gammaln(a_uk + counts) - gammaln(a_uk)))


def bic_from_counts(counts, n: int | None = None) -> float:
    counts = np.asarray(counts, dtype=float)
    q, r = counts.shape
    n = counts.sum() if n is None else n
    n_u = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, counts * np.log(counts / np.where(n_u > 0, n_u, 1.0)), 0.0)
    penalty = 0.5 * q * (r - 1) * math.log(n) if n > 0 else 0.0
    return float(terms.sum() - penalty)


def bdeu_local(v: int, parents, data, ess: float = 1.0) -> float:
    if ess <= 0:
        raise ValueError("ess must be positive")
    return bdeu_from_counts(family_counts(data, v, parents), ess)


def bic_local(v: int, parents, data) -> float:
    d = _as_binary(data)
    return bic_from_counts(family_counts(d, v, parents), d.shape[0])


class LocalScorer:
    """Cached local scores keyed by ``(node, parent set)``."""

    def __init__(self, data, kind: str = "bdeu", ess: float = 1.0):
        if kind not in ("bdeu", "bic"):
            raise ValueError(f"unknown score {kind!r}")
        if ess <= 0:
            raise ValueError("ess must be positive")
        self.data = _as_binary(data)
        self.kind = kind
        self.ess = ess
        self.cache: dict = {}

    @property
    def k(self) -> int:
        return self.data.shape[1]

    def __call__(self, v: int, parents) -> float:
        key = (v, frozenset(parents))
        hit = self.cache.get(key)
        if hit is None:
            counts = family_counts(self.data, v, key[1])
            if self.kind == "bdeu":
                hit = bdeu_from_counts(counts, self.ess)
            else:
                hit = bic_from_counts(counts, self.data.shape[0])
            self.cache[key] = hit
        return hit


def score_dag(dag: LatentDag, data=None, kind: str = "bdeu", ess: float = 1.0, scorer=None) -> float:
    scorer = scorer or LocalScorer(data, kind, ess)
    return float(sum(scorer(v, dag.parents(v)) for v in range(dag.k)))


# ---------------------------------------------------------------- search state

@dataclass
class _Pdag:
    k: int
    directed: set
    undirected: set

    @classmethod
    def from_cpdag(cls, g: Cpdag):
        return cls(g.k, set(g.directed), set(g.undirected))

    def to_cpdag(self) -> Cpdag:
        return Cpdag(self.k, frozenset(self.directed), frozenset(self.undirected))

    def parents(self, v):
        return {a for a, b in self.directed if b == v}

    def neighbors(self, v):
        return {a if b == v else b for a, b in self.undirected if v in (a, b)}

    def adjacent(self, u, v):
        return ((u, v) in self.directed or (v, u) in self.directed
                or (min(u, v), max(u, v)) in self.undirected)

    def is_clique(self, nodes):
        return all(self.adjacent(a, b) for a, b in itertools.combinations(nodes, 2))

    def semi_directed_blocked(self, y, x, blockers) -> bool:
        """True if every semi-directed path y ~> x passes through ``blockers``."""
        seen = {y}
        stack = [y]
        while stack:
            u = stack.pop()
            nxt = self.neighbors(u) | {b for a, b in self.directed if a == u}
            for w in nxt:
                if w == x:
                    return False
                if w in seen or w in blockers:
                    continue
                seen.add(w)
                stack.append(w)
        return True


@dataclass(frozen=True)
class Operator:
    kind: str  # "insert" or "delete"
    x: int
    y: int
    subset: tuple  # T for insert, H for delete
    gain: float

    def key(self):
        return (self.x, self.y, len(self.subset), self.subset)


def _insert_ops(g: _Pdag, score):
    for x, y in itertools.permutations(range(g.k), 2):
        if g.adjacent(x, y):
            continue
        ny = g.neighbors(y)
        na = {t for t in ny if g.adjacent(t, x)}
        cand = sorted(t for t in ny if not g.adjacent(t, x))
        pa = g.parents(y)
        for size in range(len(cand) + 1):
            for t in itertools.combinations(cand, size):
                s = na | set(t)
                if not g.is_clique(s):
                    continue
                if not g.semi_directed_blocked(y, x, s):
                    continue
                base = s | pa
                gain = score(y, base | {x}) - score(y, base)
                yield Operator("insert", x, y, t, gain)


def _delete_ops(g: _Pdag, score):
    for x, y in itertools.permutations(range(g.k), 2):
        und = (min(x, y), max(x, y)) in g.undirected
        if not ((x, y) in g.directed or und):
            continue
        na = sorted(t for t in g.neighbors(y) if g.adjacent(t, x))
        pa = g.parents(y)
        for size in range(len(na) + 1):
            for h in itertools.combinations(na, size):
                rest = set(na) - set(h)
                if not g.is_clique(rest):
                    continue
                base = rest | (pa - {x})
                gain = score(y, base) - score(y, base | {x})
                yield Operator("delete", x, y, h, gain)


def _best(ops):
    best = None
    for op in ops:
        if op.gain <= GAIN_TOL:
            continue
        if best is None or op.gain > best.gain + 1e-12 or (
                abs(op.gain - best.gain) <= 1e-12 and op.key() < best.key()):
            best = op
    return best


def _apply(g: _Pdag, op: Operator) -> _Pdag:
    directed = set(g.directed)
    undirected = set(g.undirected)
    x, y = op.x, op.y
    if op.kind == "insert":
        directed.add((x, y))
        for t in op.subset:
            undirected.discard((min(t, y), max(t, y)))
            directed.add((t, y))
    else:
        directed.discard((x, y))
        undirected.discard((min(x, y), max(x, y)))
        for h in op.subset:
            if (min(y, h), max(y, h)) in undirected:
                undirected.discard((min(y, h), max(y, h)))
                directed.add((y, h))
            if (min(x, h), max(x, h)) in undirected:
                undirected.discard((min(x, h), max(x, h)))
                directed.add((x, h))
    pdag = Cpdag(g.k, frozenset(directed), frozenset(undirected))
    # completing via a consistent extension gives the CPDAG of the new class
    return _Pdag.from_cpdag(dag_to_cpdag(consistent_extension(pdag)))


@dataclass
class GesResult:
    cpdag: Cpdag
    score: float
    trace: list = field(default_factory=list)  # (phase, x, y, subset, gain, score)


def run_ges(data, kind: str = "bdeu", ess: float = 1.0, max_steps: int | None = None) -> GesResult:
    scorer = LocalScorer(data, kind, ess)
    k = scorer.k
    if k < 1 or scorer.data.shape[0] < 1:
        raise ValueError("need K >= 1 and N >= 1")
    g = _Pdag(k, set(), set())
    total = sum(scorer(v, ()) for v in range(k))
    trace = []
    steps = 0
    for phase, gen in (("forward", _insert_ops), ("backward", _delete_ops)):
        while max_steps is None or steps < max_steps:
            op = _best(gen(g, scorer))
            if op is None:
                break
            g = _apply(g, op)
            total = score_dag(consistent_extension(g.to_cpdag()), scorer=scorer)
            trace.append((phase, op.x, op.y, op.subset, op.gain, total))
            steps += 1
    return GesResult(g.to_cpdag(), float(total), trace)


def ges(data, kind: str = "bdeu", ess: float = 1.0) -> Cpdag:
    return run_ges(data, kind, ess).cpdag
