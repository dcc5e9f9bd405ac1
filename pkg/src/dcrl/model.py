"""Generative model: response families, latent laws, and exact likelihoods."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln, logsumexp

from .graphs import LatentDag, topological_order

DENSE_CAP = 20


class CapacityError(ValueError):
    pass


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    BERNOULLI = "bernoulli"
    LOGNORMAL = "lognormal"

    @property
    def has_dispersion(self) -> bool:
        return self in (Family.GAUSSIAN, Family.LOGNORMAL)

    @property
    def code(self) -> int:
        return _FAMILY_CODES[self]

    def mean(self, eta):
        """Mean parameter g(eta) on the family's natural scale."""
        eta = np.asarray(eta, dtype=float)
        if self is Family.POISSON:
            return np.exp(eta)
        if self is Family.BERNOULLI:
            return expit(eta)
        return eta


_FAMILY_CODES = {Family.GAUSSIAN: 0, Family.POISSON: 1, Family.BERNOULLI: 2, Family.LOGNORMAL: 3}


def as_family(f) -> Family:
    return f if isinstance(f, Family) else Family(str(f).lower())


def as_families(fams, j=None) -> tuple:
    if isinstance(fams, (str, Family)):
        if j is None:
            raise ValueError("item count needed to broadcast a single family")
        fams = [fams] * j
    return tuple(as_family(f) for f in fams)


def as_qmatrix(q) -> np.ndarray:
    q = np.asarray(q)
    if q.ndim != 2:
        raise ValueError("Q must be two-dimensional")
    if not np.isin(q, (0, 1)).all():
        raise ValueError("Q entries must be 0 or 1")
    return q.astype(np.int8)


def all_states(k: int) -> np.ndarray:
    """All of {0,1}^k in lexicographic order, first coordinate most significant."""
    codes = np.arange(2 ** k)
    shifts = np.arange(k - 1, -1, -1)
    return ((codes[:, None] >> shifts) & 1).astype(np.int8)


def state_codes(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.int64)
    k = z.shape[-1]
    return z @ (1 << np.arange(k - 1, -1, -1, dtype=np.int64))


def linear_predictor(b_row, z) -> float:
    """Intercept plus main effects; ``z`` may be one state or a matrix of states."""
    b_row = np.asarray(b_row, dtype=float)
    z = np.asarray(z, dtype=float)
    if b_row.ndim != 1 or b_row.size != z.shape[-1] + 1:
        raise ValueError(f"coefficient vector of length {b_row.size} does not match K={z.shape[-1]}")
    out = b_row[0] + z @ b_row[1:]
    return float(out) if np.ndim(out) == 0 else out


def log_density(family, eta, gamma, x):
    """Elementwise log-density of ``x`` given linear predictor ``eta``.

    Raises ``ValueError`` for ``x`` outside the family's support and for a
    non-positive dispersion where one is needed.
    """
    family = as_family(family)
    eta = np.asarray(eta, dtype=float)
    x = np.asarray(x, dtype=float)
    if family.has_dispersion and np.any(np.asarray(gamma) <= 0):
        raise ValueError(f"{family.value} requires gamma > 0")
    if family is Family.POISSON:
        if np.any(x < 0) or np.any(x != np.round(x)):
            raise ValueError("Poisson responses must be nonnegative integers")
    elif family is Family.BERNOULLI:
        if not np.isin(x, (0.0, 1.0)).all():
            raise ValueError("Bernoulli responses must be 0 or 1")
    elif family is Family.LOGNORMAL:
        if np.any(x <= 0):
            raise ValueError("lognormal responses must be positive")
    out = _logpdf(family, eta, gamma, x)
    return float(out) if out.ndim == 0 else out


def _logpdf(family: Family, eta, gamma, x):
    """Unchecked log-density; used in inner loops."""
    if family is Family.GAUSSIAN:
        return -0.5 * np.log(2 * np.pi * gamma) - (x - eta) ** 2 / (2 * gamma)
    if family is Family.POISSON:
        return x * eta - np.exp(eta) - gammaln(x + 1)
    if family is Family.BERNOULLI:
        return x * eta - np.logaddexp(0.0, eta)
    lx = np.log(x)
    return -lx - 0.5 * np.log(2 * np.pi * gamma) - (lx - eta) ** 2 / (2 * gamma)


@dataclass(frozen=True, eq=False)
class BayesNetLaw:
    """Bayesian-network latent law.

    ``cpts[v][u]`` is P(Z_v = 1 | parent configuration u), where u encodes the
    parents of v (sorted ascending) as a binary integer, first parent most
    significant.
    """

    dag: LatentDag
    cpts: dict

    def __post_init__(self):
        cpts = {}
        for v in range(self.dag.k):
            t = np.asarray(self.cpts[v], dtype=float).reshape(-1)
            if t.size != 2 ** len(self.dag.parents(v)):
                raise ValueError(f"CPT of node {v} has {t.size} entries, expected {2 ** len(self.dag.parents(v))}")
            if np.any(t <= 0) or np.any(t >= 1):
                raise ValueError("CPT entries must lie strictly inside (0, 1)")
            cpts[v] = t
        object.__setattr__(self, "cpts", cpts)

    @property
    def k(self) -> int:
        return self.dag.k

    def parent_config(self, v: int, z) -> np.ndarray:
        pa = sorted(self.dag.parents(v))
        z = np.atleast_2d(np.asarray(z, dtype=np.int64))
        if not pa:
            return np.zeros(z.shape[0], dtype=np.int64)
        return z[:, pa] @ (1 << np.arange(len(pa) - 1, -1, -1, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class DenseLaw:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        k = int(np.log2(p.size))
        if 2 ** k != p.size:
            raise ValueError("dense law length must be a power of two")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("dense law must be nonnegative and sum to one")
        object.__setattr__(self, "probs", p)

    @property
    def k(self) -> int:
        return int(np.log2(self.probs.size))


def latent_prob(law, z) -> float:
    z = np.asarray(z, dtype=np.int64)
    if isinstance(law, DenseLaw):
        return float(law.probs[state_codes(z)])
    out = 1.0
    for v in topological_order(law.dag):
        p1 = law.cpts[v][law.parent_config(v, z)[0]]
        out *= p1 if z[v] == 1 else 1.0 - p1
    return float(out)


def densify(law, cap: int = DENSE_CAP) -> np.ndarray:
    if law.k > cap:
        raise CapacityError(f"K={law.k} exceeds the dense cap {cap}")
    if isinstance(law, DenseLaw):
        return law.probs.copy()
    states = all_states(law.k)
    p = np.ones(states.shape[0])
    for v in range(law.k):
        p1 = law.cpts[v][law.parent_config(v, states)]
        p *= np.where(states[:, v] == 1, p1, 1.0 - p1)
    return p


@dataclass(frozen=True, eq=False)
class ModelParams:
    law: object
    b: np.ndarray
    gamma: np.ndarray
    families: tuple = field(default=())

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        fams = as_families(self.families, b.shape[0])
        if b.ndim != 2 or b.shape[1] != self.law.k + 1:
            raise ValueError(f"B must be J x (K+1) = ? x {self.law.k + 1}, got {b.shape}")
        if gamma.size != b.shape[0] or len(fams) != b.shape[0]:
            raise ValueError("gamma and families need one entry per item")
        for f, g in zip(fams, gamma):
            if f.has_dispersion and g <= 0:
                raise ValueError(f"{f.value} item needs gamma > 0")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "families", fams)

    @property
    def k(self) -> int:
        return self.law.k

    @property
    def j(self) -> int:
        return self.b.shape[0]

    def support(self, tol: float = 0.0) -> np.ndarray:
        return (np.abs(self.b[:, 1:]) > tol).astype(np.int8)


def eta_table(b) -> np.ndarray:
    """Linear predictors for every latent state: a 2^K x J matrix."""
    b = np.asarray(b, dtype=float)
    states = all_states(b.shape[1] - 1)
    return b[:, 0] + states @ b[:, 1:].T


def conditional_loglik(params: ModelParams, x) -> np.ndarray:
    """log P(X_i | Z = z) for every row i and every state z (N x 2^K)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eta = eta_table(params.b)
    out = np.zeros((x.shape[0], eta.shape[0]))
    for j, fam in enumerate(params.families):
        out += _logpdf(fam, eta[None, :, j], params.gamma[j], x[:, j:j + 1])
    return out


def marginal_loglik(params: ModelParams, x, cap: int = DENSE_CAP) -> float:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    if params.k > cap:
        raise CapacityError(f"K={params.k} exceeds the dense cap {cap}")
    x = np.atleast_2d(x)
    for j, fam in enumerate(params.families):
        log_density(fam, 0.0, params.gamma[j] if fam.has_dispersion else 1.0, x[:, j])
    logp = np.log(densify(params.law, cap))
    return float(logsumexp(conditional_loglik(params, x) + logp, axis=1).sum())


def check_monotone_sums(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    return b[:, 1:].sum(axis=0) > 0


def params_to_json(params: ModelParams) -> dict:
    law = params.law
    if isinstance(law, BayesNetLaw):
        law_obj = {"dag": {"k": law.k, "directed": sorted(map(list, law.dag.edges)), "undirected": []},
                   "cpts": {str(v): law.cpts[v].tolist() for v in range(law.k)}}
    else:
        law_obj = {"dense": law.probs.tolist()}
    return {"families": [f.value for f in params.families], "B": params.b.tolist(),
            "gamma": params.gamma.tolist(), "law": law_obj}


def params_from_json(obj: dict) -> ModelParams:
    law_obj = obj["law"]
    if "dense" in law_obj:
        law = DenseLaw(np.asarray(law_obj["dense"], dtype=float))
    else:
        d = law_obj["dag"]
        dag = LatentDag(int(d["k"]), frozenset(map(tuple, d["directed"])))
        law = BayesNetLaw(dag, {int(v): np.asarray(t) for v, t in law_obj["cpts"].items()})
    return ModelParams(law, np.asarray(obj["B"], dtype=float), np.asarray(obj["gamma"], dtype=float),
                       tuple(obj["families"]))
