"""Graph primitives over latent nodes: DAGs, CPDAGs, composite graphs.

Nodes are integers ``0..k-1``. Directed edges are ``(parent, child)`` pairs and
undirected edges are stored as sorted ``(a, b)`` pairs with ``a < b``.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np


class GraphInputError(ValueError):
    pass


class InconsistentGraphError(ValueError):
    """Raised when a PDAG admits no consistent DAG extension."""


def _pair(a, b):
    return (a, b) if a < b else (b, a)


def _check_labels(edges, k):
    for a, b in edges:
        if not (0 <= a < k and 0 <= b < k):
            raise GraphInputError(f"edge ({a}, {b}) out of range for k={k}")
        if a == b:
            raise GraphInputError(f"self-loop on node {a}")


def is_acyclic(edges, k: int) -> bool:
    edges = {(int(a), int(b)) for a, b in edges}
    _check_labels(edges, k)
    return _kahn(edges, k) is not None


def _kahn(edges, k):
    indeg = [0] * k
    children = [[] for _ in range(k)]
    for a, b in edges:
        indeg[b] += 1
        children[a].append(b)
    heap = [v for v in range(k) if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    return order if len(order) == k else None


@dataclass(frozen=True)
class LatentDag:
    k: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.k < 1:
            raise GraphInputError("k must be positive")
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        _check_labels(edges, self.k)
        if _kahn(edges, self.k) is None:
            raise GraphInputError("edge set contains a directed cycle")
        object.__setattr__(self, "edges", edges)

    def parents(self, v: int) -> frozenset:
        return frozenset(a for a, b in self.edges if b == v)

    def children(self, v: int) -> frozenset:
        return frozenset(b for a, b in self.edges if a == v)

    def skeleton(self) -> frozenset:
        return frozenset(_pair(a, b) for a, b in self.edges)

    def adjacency(self) -> np.ndarray:
        m = np.zeros((self.k, self.k), dtype=np.int8)
        for a, b in self.edges:
            m[a, b] = 1
        return m


@dataclass(frozen=True)
class Cpdag:
    """Partially directed graph; also used for intermediate PDAGs."""

    k: int
    directed: frozenset = field(default_factory=frozenset)
    undirected: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        directed = frozenset((int(a), int(b)) for a, b in self.directed)
        undirected = frozenset(_pair(int(a), int(b)) for a, b in self.undirected)
        _check_labels(directed | undirected, self.k)
        if {_pair(a, b) for a, b in directed} & undirected:
            raise GraphInputError("a node pair is both directed and undirected")
        if len({_pair(a, b) for a, b in directed}) != len(directed):
            raise GraphInputError("a node pair carries both orientations")
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)

    def skeleton(self) -> frozenset:
        return frozenset(_pair(a, b) for a, b in self.directed) | self.undirected

    def n_edges(self) -> int:
        return len(self.directed) + len(self.undirected)

    def parents(self, v: int) -> set:
        return {a for a, b in self.directed if b == v}

    def neighbors(self, v: int) -> set:
        """Undirected neighbours."""
        return {a if b == v else b for a, b in self.undirected if v in (a, b)}

    def adjacent(self, v: int) -> set:
        out = self.neighbors(v)
        for a, b in self.directed:
            if a == v:
                out.add(b)
            elif b == v:
                out.add(a)
        return out

    def status(self) -> dict:
        """Map each adjacent pair ``(a, b)``, ``a < b`` to its edge status."""
        st = {p: "-" for p in self.undirected}
        for a, b in self.directed:
            st[_pair(a, b)] = "->" if a < b else "<-"
        return st


@dataclass(frozen=True)
class CompositeGraph:
    latent: Cpdag
    q: np.ndarray = field(compare=False)

    def __post_init__(self):
        q = np.asarray(self.q)
        if q.ndim != 2 or q.shape[1] != self.latent.k:
            raise GraphInputError("Q must have one column per latent node")
        object.__setattr__(self, "q", (q != 0).astype(np.int8))

    @property
    def q_edges(self) -> list:
        js, ks = np.nonzero(self.q)
        return sorted((int(k), int(j)) for j, k in zip(js, ks))

    def n_edges(self) -> int:
        return self.latent.n_edges() + int(self.q.sum())

    def __eq__(self, other):
        return (isinstance(other, CompositeGraph) and self.latent == other.latent
                and self.q.shape == other.q.shape and bool(np.all(self.q == other.q)))

    __hash__ = None


def topological_order(dag: LatentDag) -> tuple:
    """Topological order with the lowest available label first."""
    return tuple(_kahn(dag.edges, dag.k))


def d_separated(dag: LatentDag, a, b, c) -> bool:
    a, b, c = set(a), set(b), set(c)
    if a & b or a & c or b & c:
        raise GraphInputError("node sets must be pairwise disjoint")
    for v in a | b | c:
        if not 0 <= v < dag.k:
            raise GraphInputError(f"node {v} out of range")
    if not a or not b:
        return True
    # ancestral moral graph criterion
    anc = set(a | b | c)
    stack = list(anc)
    while stack:
        v = stack.pop()
        for p in dag.parents(v):
            if p not in anc:
                anc.add(p)
                stack.append(p)
    nbrs = {v: set() for v in anc}
    for x, y in dag.edges:
        if x in anc and y in anc:
            nbrs[x].add(y)
            nbrs[y].add(x)
    for v in anc:
        pa = [p for p in dag.parents(v)]
        for p1, p2 in itertools.combinations(pa, 2):
            nbrs[p1].add(p2)
            nbrs[p2].add(p1)
    seen = set(a)
    stack = list(a)
    while stack:
        v = stack.pop()
        for w in nbrs[v]:
            if w in c or w in seen:
                continue
            if w in b:
                return False
            seen.add(w)
            stack.append(w)
    return True


def v_structures(dag: LatentDag) -> frozenset:
    """Triples ``(a, c, b)`` with ``a -> c <- b``, ``a < b``, a and b non-adjacent."""
    skel = dag.skeleton()
    out = set()
    for c in range(dag.k):
        for a, b in itertools.combinations(sorted(dag.parents(c)), 2):
            if (a, b) not in skel:
                out.add((a, c, b))
    return frozenset(out)


def markov_equivalent(g1: LatentDag, g2: LatentDag) -> bool:
    if g1.k != g2.k:
        raise GraphInputError("graphs have different node counts")
    return g1.skeleton() == g2.skeleton() and v_structures(g1) == v_structures(g2)


def _ordered_edges(dag: LatentDag) -> list:
    pos = {v: i for i, v in enumerate(topological_order(dag))}
    # lowest child first; within a child, highest-ordered parent first
    return sorted(dag.edges, key=lambda e: (pos[e[1]], -pos[e[0]]))


def dag_to_cpdag(dag: LatentDag) -> Cpdag:
    """Label each edge compelled or reversible (order-edges / find-compelled)."""
    order = _ordered_edges(dag)
    label = {e: None for e in order}
    parents = {v: dag.parents(v) for v in range(dag.k)}
    for x, y in order:
        if label[(x, y)] is not None:
            continue
        done = False
        for w in sorted(parents[x]):
            if label[(w, x)] != "c":
                continue
            if w not in parents[y]:
                for p in parents[y]:
                    label[(p, y)] = "c"
                done = True
                break
            label[(w, y)] = "c"
        if done:
            continue
        tag = "c" if any(z != x and z not in parents[x] for z in parents[y]) else "r"
        for p in parents[y]:
            if label[(p, y)] is None:
                label[(p, y)] = tag
    directed = {e for e, t in label.items() if t == "c"}
    undirected = {_pair(*e) for e, t in label.items() if t == "r"}
    return Cpdag(dag.k, frozenset(directed), frozenset(undirected))


def consistent_extension(pdag: Cpdag) -> LatentDag:
    """A DAG with the same skeleton and v-structures as the PDAG (Dor-Tarsi)."""
    directed = set(pdag.directed)
    undirected = set(pdag.undirected)
    alive = set(range(pdag.k))
    result = set(directed)
    while alive:
        chosen = None
        for x in sorted(alive):
            if any(a == x and b in alive for a, b in directed):
                continue  # x has an outgoing directed edge
            und = [a if b == x else b for a, b in undirected if x in (a, b) and a in alive and b in alive]
            adj = set(und)
            adj |= {a for a, b in directed if b == x and a in alive}
            ok = True
            for y in und:
                others = adj - {y}
                ya = {a if b == y else b for a, b in undirected if y in (a, b)}
                ya |= {b for a, b in directed if a == y} | {a for a, b in directed if b == y}
                if not others <= ya:
                    ok = False
                    break
            if ok:
                chosen = x
                for y in und:
                    result.add((y, x))
                break
        if chosen is None:
            raise InconsistentGraphError("PDAG has no consistent extension")
        alive.discard(chosen)
    if not is_acyclic(result, pdag.k):
        raise InconsistentGraphError("PDAG has no consistent extension")
    return LatentDag(pdag.k, frozenset(result))


def pdag_to_cpdag(pdag: Cpdag) -> Cpdag:
    return dag_to_cpdag(consistent_extension(pdag))


def meek_closure(pdag: Cpdag) -> Cpdag:
    """Apply Meek rules R1-R4 until no undirected edge can be oriented."""
    consistent_extension(pdag)
    directed = set(pdag.directed)
    undirected = set(pdag.undirected)

    def adj(u, v):
        return (u, v) in directed or (v, u) in directed or _pair(u, v) in undirected

    def und(u, v):
        return _pair(u, v) in undirected

    changed = True
    while changed:
        changed = False
        for e in sorted(undirected):
            for a, b in (e, e[::-1]):
                if _fires(a, b, pdag.k, directed, und, adj):
                    undirected.discard(e)
                    directed.add((a, b))
                    changed = True
                    break
            if changed:
                break
    out = Cpdag(pdag.k, frozenset(directed), frozenset(undirected))
    if not is_acyclic(out.directed, out.k):
        raise InconsistentGraphError("orientation produced a directed cycle")
    return out


def _fires(a, b, k, directed, und, adj):
    """Whether some Meek rule orients the undirected edge a - b as a -> b."""
    nodes = range(k)
    # R1: c -> a, a - b, c not adjacent b
    for c in nodes:
        if (c, a) in directed and c != b and not adj(c, b):
            return True
    # R2: a -> c -> b
    for c in nodes:
        if (a, c) in directed and (c, b) in directed:
            return True
    # R3: a - c -> b, a - d -> b, c and d non-adjacent
    cs = [c for c in nodes if und(a, c) and (c, b) in directed]
    for c, d in itertools.combinations(cs, 2):
        if not adj(c, d):
            return True
    # R4: a - d, d -> c -> b, a adjacent c, d not adjacent b
    for d in nodes:
        if d in (a, b) or not und(a, d) or adj(d, b):
            continue
        for c in nodes:
            if (d, c) in directed and (c, b) in directed and adj(a, c):
                return True
    return False


def composite_graph(g: Cpdag, q) -> CompositeGraph:
    q = np.asarray(q)
    if q.ndim != 2 or q.shape[1] != g.k:
        raise GraphInputError(f"Q has {q.shape[-1]} columns, latent graph has {g.k} nodes")
    return CompositeGraph(g, q)


def shd(g1, g2) -> int:
    """Number of node pairs whose edge status differs (reversal counts once)."""
    if isinstance(g1, LatentDag):
        g1 = Cpdag(g1.k, g1.edges)
    if isinstance(g2, LatentDag):
        g2 = Cpdag(g2.k, g2.edges)
    if isinstance(g1, CompositeGraph) != isinstance(g2, CompositeGraph):
        raise GraphInputError("cannot compare a composite graph with a latent graph")
    extra = 0
    if isinstance(g1, CompositeGraph):
        if g1.q.shape != g2.q.shape:
            raise GraphInputError("composite graphs have different node sets")
        extra = int(np.sum(g1.q != g2.q))
        g1, g2 = g1.latent, g2.latent
    if g1.k != g2.k:
        raise GraphInputError("graphs have different node sets")
    s1, s2 = g1.status(), g2.status()
    return extra + sum(1 for p in set(s1) | set(s2) if s1.get(p) != s2.get(p))


def to_json(g) -> dict:
    if isinstance(g, LatentDag):
        return {"k": g.k, "directed": sorted(map(list, g.edges)), "undirected": []}
    if isinstance(g, Cpdag):
        return {"k": g.k, "directed": sorted(map(list, g.directed)),
                "undirected": sorted(map(list, g.undirected))}
    if isinstance(g, CompositeGraph):
        out = to_json(g.latent)
        out["q_edges"] = [list(e) for e in g.q_edges]
        out["n_items"] = int(g.q.shape[0])
        return out
    raise TypeError(f"cannot serialise {type(g).__name__}")


def from_json(obj: dict):
    """Inverse of :func:`to_json`; returns a Cpdag, or a CompositeGraph if ``q_edges`` is present."""
    g = Cpdag(int(obj["k"]), frozenset(map(tuple, obj.get("directed", []))),
              frozenset(map(tuple, obj.get("undirected", []))))
    if "q_edges" not in obj:
        return g
    n_items = obj.get("n_items")
    if n_items is None:
        n_items = 1 + max((j for _, j in obj["q_edges"]), default=-1)
    q = np.zeros((int(n_items), g.k), dtype=np.int8)
    for k, j in obj["q_edges"]:
        q[j, k] = 1
    return CompositeGraph(g, q)
