"""Penalized Gibbs-SAEM estimation of (p, B, gamma) and the measurement graph Q.

The stochastic-approximation surrogate F_j is never stored as a function:
for the four response families the complete-data log-likelihood of item j is
affine in per-configuration aggregates (weighted count n_z, sum of responses,
sum of squared responses), so smoothing those aggregates smooths F_j exactly.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import expit, gammaln

from . import _kernels
from .model import (CapacityError, DENSE_CAP, DenseLaw, Family, ModelParams, all_states,
                    as_families, as_qmatrix, densify, state_codes)
from .spectral import InitConfig, link_scale_data, spectral_init

log = logging.getLogger(__name__)

P_FLOOR = 1e-12


@dataclass
class PenaltySpec:
    kind: str = "scad"
    lam: float = 1.0
    tau: float = 0.1
    scad_a: float = 3.7

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("scad", "tlp"):
            raise ValueError(f"unknown penalty {self.kind!r}")
        if self.lam < 0 or self.tau <= 0 or self.scad_a <= 2:
            raise ValueError("need lam >= 0, tau > 0 and scad_a > 2")

    def pieces(self) -> np.ndarray:
        """Piecewise-quadratic description on |b|: rows (lo, hi, c2, c1, c0)."""
        lam, tau = self.lam, self.tau
        if self.kind == "tlp":
            return np.array([[0.0, tau, 0.0, lam / tau, 0.0],
                             [tau, np.inf, 0.0, 0.0, lam]])
        a = self.scad_a
        ls = tau / a
        c = lam / (ls ** 2 * (a + 1) / 2)  # rescales the SCAD plateau to lam
        return np.array([
            [0.0, ls, 0.0, c * ls, 0.0],
            [ls, tau, -c / (2 * (a - 1)), c * a * ls / (a - 1), -c * ls ** 2 / (2 * (a - 1))],
            [tau, np.inf, 0.0, 0.0, lam],
        ])

    def value(self, b) -> np.ndarray:
        t = np.abs(np.asarray(b, dtype=float))
        out = np.zeros_like(t)
        for lo, hi, c2, c1, c0 in self.pieces():
            sel = (t > lo) & (t <= hi) if lo > 0 else (t <= hi)
            out = np.where(sel, c2 * t * t + c1 * t + c0, out)
        return out


def default_tuning(n: int, j: int) -> tuple:
    """(lambda_N, tau_N) = (0.5 sqrt(N log J), log N / sqrt(N))."""
    return 0.5 * np.sqrt(n * np.log(max(j, 2))), np.log(n) / np.sqrt(n)


@dataclass
class StepSchedule:
    burn_in: int = 100
    alpha: float = 0.7

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0.5, 1]")

    def __call__(self, t: int) -> float:
        return 1.0 if t <= self.burn_in else float((t - self.burn_in) ** -self.alpha)


@dataclass
class SaemConfig:
    penalty: str = "scad"
    lam: float | None = None
    tau: float | None = None
    scad_a: float = 3.7
    burn_in: int = 100
    alpha: float = 0.7
    max_iter: int = 600
    tol: float = 1e-4
    patience: int = 5
    init: str = "spectral"
    init_config: InitConfig = field(default_factory=InitConfig)
    zero_tol: float = 1e-8
    cap: int = DENSE_CAP


@dataclass
class SuffStats:
    """Configuration-keyed aggregates: n (2^K), s1 and s2 (2^K x J)."""

    n: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    @property
    def k(self) -> int:
        return int(np.log2(self.n.size))

    @property
    def total(self) -> float:
        return float(self.n.sum())


def batch_suffstats(codes, y, k: int) -> SuffStats:
    """Aggregates of one latent draw; ``y`` is the data on the link scale."""
    size = 2 ** k
    n = np.bincount(codes, minlength=size).astype(float)
    s1 = np.column_stack([np.bincount(codes, weights=y[:, j], minlength=size) for j in range(y.shape[1])])
    s2 = np.column_stack([np.bincount(codes, weights=y[:, j] ** 2, minlength=size) for j in range(y.shape[1])])
    return SuffStats(n, s1, s2)


def update_suffstats(stats: SuffStats | None, batch: SuffStats, theta: float) -> SuffStats:
    if stats is None:  # F^[0] = 0
        return SuffStats(theta * batch.n, theta * batch.s1, theta * batch.s2)
    return SuffStats((1 - theta) * stats.n + theta * batch.n,
                     (1 - theta) * stats.s1 + theta * batch.s1,
                     (1 - theta) * stats.s2 + theta * batch.s2)


def update_latent_law(p, empirical_p, theta: float) -> np.ndarray:
    p = (1 - theta) * np.asarray(p, dtype=float) + theta * np.asarray(empirical_p, dtype=float)
    p = np.maximum(p, P_FLOOR)
    return p / p.sum()


def data_constants(x, families) -> np.ndarray:
    """Parts of sum_i log P(x_ij | z) that do not depend on (z, beta, gamma)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[1])
    for j, f in enumerate(as_families(families, x.shape[1])):
        if f is Family.POISSON:
            out[j] = -gammaln(x[:, j] + 1).sum()
        elif f is Family.LOGNORMAL:
            out[j] = -np.log(x[:, j]).sum()
    return out


def surrogate_loglik(stats: SuffStats, j: int, family, beta, gamma, const: float = 0.0) -> float:
    """F_j(beta, gamma) reconstructed from the aggregates."""
    family = as_families([family])[0]
    design = np.hstack([np.ones((stats.n.size, 1)), all_states(stats.k)])
    eta = design @ np.asarray(beta, dtype=float)
    n, s1, s2 = stats.n, stats.s1[:, j], stats.s2[:, j]
    if family.has_dispersion:
        rss = np.sum(s2 - 2 * eta * s1 + n * eta ** 2)
        return float(-0.5 * n.sum() * np.log(2 * np.pi * gamma) - rss / (2 * gamma) + const)
    if family is Family.POISSON:
        return float(np.sum(s1 * eta - n * np.exp(eta)) + const)
    return float(np.sum(s1 * eta - n * np.logaddexp(0.0, eta)) + const)


# ---------------------------------------------------------------- E-step

@dataclass
class SaemState:
    p: np.ndarray
    z: np.ndarray
    codes: np.ndarray
    psi: np.ndarray
    stats: SuffStats | None = None
    iter: int = 0


def compute_psi(z, b) -> np.ndarray:
    return b[:, 0] + np.asarray(z, dtype=float) @ b[:, 1:].T


def make_state(z, b, p) -> SaemState:
    z = np.ascontiguousarray(z, dtype=np.int8)
    return SaemState(p=np.asarray(p, dtype=float), z=z, codes=state_codes(z),
                     psi=compute_psi(z, b))


def _family_codes(families) -> np.ndarray:
    return np.array([f.code for f in families], dtype=np.int64)


def gibbs_logodds(i: int, k: int, state: SaemState, params: ModelParams, y) -> float:
    """log P(Z_ik = 1 | Z_i,-k, X_i) - log P(Z_ik = 0 | ...); ``y`` on the link scale."""
    kk = params.k
    w = 1 << (kk - 1 - k)
    c1 = int(state.codes[i]) | w
    c0 = c1 ^ w
    logp = np.log(state.p)
    d = logp[c1] - logp[c0]
    gamma = np.where(params.gamma > 0, params.gamma, 1.0)
    d += _kernels.flip_loglik_delta(np.asarray(y[i], dtype=float), state.psi[i],
                                    np.ascontiguousarray(params.b[:, k + 1]), int(state.z[i, k]),
                                    _family_codes(params.families), gamma)
    return float(d)


def gibbs_sweep(state: SaemState, params: ModelParams, y, rng) -> SaemState:
    """One pass over every subject, coordinates in a fresh random order per subject."""
    n, k = state.z.shape
    perm = rng.permuted(np.tile(np.arange(k, dtype=np.int64), (n, 1)), axis=1)
    u = rng.random((n, k))
    gamma = np.where(params.gamma > 0, params.gamma, 1.0)
    _kernels.gibbs_sweep_kernel(np.ascontiguousarray(y, dtype=float), _family_codes(params.families), gamma,
                                np.ascontiguousarray(params.b[:, 1:].T), np.log(state.p),
                                state.z, state.codes, state.psi, perm, u)
    return state


# ---------------------------------------------------------------- M-step

def _design(k):
    return np.hstack([np.ones((2 ** k, 1)), all_states(k)])


def _penalized_mask(k):
    mask = np.ones(k + 1, dtype=np.bool_)
    mask[0] = False
    return mask


def _mstep_dispersion(stats, items, penalty, beta, gamma, design):
    k = stats.k
    gram = design.T @ (stats.n[:, None] * design)
    cross = design.T @ stats.s1[:, items]  # (K+1) x J'
    s2 = stats.s2[:, items].sum(axis=0)
    total = stats.total
    pieces = penalty.pieces()
    mask = _penalized_mask(k)
    beta = beta.copy()
    gamma = gamma.copy()

    def rss(bj, jj):
        return s2[jj] - 2 * bj @ cross[:, jj] + bj @ gram @ bj

    for jj in range(len(items)):
        g = gamma[jj] if gamma[jj] > 0 else max(rss(beta[jj], jj) / total, 1e-6)
        for _ in range(50):
            _kernels.penalized_cd(gram / g, cross[:, jj] / g, beta[jj], mask, pieces, 1000, 1e-10)
            g_new = max(rss(beta[jj], jj) / total, 1e-8)
            done = abs(g_new - g) <= 1e-10 * (1 + g)
            g = g_new
            if done:
                break
        gamma[jj] = g
    return beta, gamma, np.zeros(len(items), dtype=bool)


def _glm_objective(fam, s1, n, eta, beta, penalty):
    if fam is Family.POISSON:
        ll = s1 @ eta - n @ np.exp(np.minimum(eta, 50.0))
    else:
        ll = s1 @ eta - n @ np.logaddexp(0.0, eta)
    return ll - penalty.value(beta[1:]).sum()


def _mstep_glm(stats, items, fam, penalty, beta, design, max_iter=100):
    keep = stats.n > 1e-12
    d = design[keep]
    n = stats.n[keep]
    pieces = penalty.pieces()
    mask = _penalized_mask(stats.k)
    beta = beta.copy()
    failed = np.zeros(len(items), dtype=bool)
    for jj, j in enumerate(items):
        s1 = stats.s1[keep, j]
        b = beta[jj]
        obj = _glm_objective(fam, s1, n, d @ b, b, penalty)
        for _ in range(max_iter):
            eta = d @ b
            if fam is Family.POISSON:
                mu = np.exp(np.minimum(eta, 50.0))
                var = mu
            else:
                mu = expit(eta)
                var = mu * (1 - mu)
            hess = d.T @ ((n * var)[:, None] * d) + 1e-10 * np.eye(d.shape[1])
            grad = d.T @ (s1 - n * mu)
            cand = b.copy()
            _kernels.penalized_cd(hess, grad + hess @ b, cand, mask, pieces, 1000, 1e-10)
            step = 1.0
            while True:
                trial = b + step * (cand - b)
                new_obj = _glm_objective(fam, s1, n, d @ trial, trial, penalty)
                if new_obj >= obj - 1e-12 * (1 + abs(obj)):
                    break
                step /= 2
                if step < 1e-4:
                    trial = None
                    break
            if trial is None:
                failed[jj] = True
                break
            moved = np.max(np.abs(trial - b))
            b, obj = trial, new_obj
            if moved < 1e-8:
                break
        beta[jj] = b
    return beta, failed


def mstep_all(stats: SuffStats, families, penalty: PenaltySpec, b, gamma):
    """Penalized M-step for every item; returns (B, gamma, failed-flags)."""
    fams = as_families(families, b.shape[0])
    design = _design(stats.k)
    b_new = np.array(b, dtype=float, copy=True)
    g_new = np.array(gamma, dtype=float, copy=True)
    failed = np.zeros(b.shape[0], dtype=bool)
    for fam in set(fams):
        items = [j for j, f in enumerate(fams) if f is fam]
        if fam.has_dispersion:
            bb, gg, ff = _mstep_dispersion(stats, items, penalty, b_new[items], g_new[items], design)
            g_new[items] = gg
        else:
            bb, ff = _mstep_glm(stats, items, fam, penalty, b_new[items], design)
            g_new[items] = 0.0
        b_new[items] = bb
        failed[items] = ff
    if failed.any():
        warnings.warn(f"IRLS failed to improve items {np.nonzero(failed)[0].tolist()}; kept previous values",
                      RuntimeWarning)
    return b_new, g_new, failed


def mstep_item(stats: SuffStats, j: int, family, penalty: PenaltySpec, current_beta, current_gamma=0.0):
    """Penalized M-step for item ``j``; returns (beta_j, gamma_j)."""
    family = as_families([family])[0]
    if stats.total <= 0:
        raise ValueError("statistics carry no weight")
    sub = SuffStats(stats.n, stats.s1[:, [j]], stats.s2[:, [j]])
    b, g, _ = mstep_all(sub, [family], penalty, np.atleast_2d(current_beta),
                        np.atleast_1d(float(current_gamma)))
    return b[0], float(g[0])


def threshold_q(b, zero_tol: float = 1e-8) -> np.ndarray:
    return (np.abs(np.asarray(b, dtype=float)[:, 1:]) > zero_tol).astype(np.int8)


# ---------------------------------------------------------------- driver

@dataclass
class FitResult:
    params: ModelParams
    q: np.ndarray
    z: np.ndarray
    diagnostics: dict


def penalty_from_config(config: SaemConfig, n: int, j: int) -> PenaltySpec:
    lam0, tau0 = default_tuning(n, j)
    return PenaltySpec(config.penalty, config.lam if config.lam is not None else lam0,
                       config.tau if config.tau is not None else tau0, config.scad_a)


def random_init(y, k: int, families, rng):
    n, j = y.shape
    z = (rng.random((n, k)) < 0.5).astype(np.int8)
    b = np.zeros((j, k + 1))
    b[:, 1:] = np.abs(rng.normal(0.0, 0.1, size=(j, k)))
    fams = as_families(families, j)
    for jj, f in enumerate(fams):
        col = y[:, jj]
        if f is Family.POISSON:
            b[jj, 0] = np.log(max(col.mean(), 1e-3))
        elif f is Family.BERNOULLI:
            m = np.clip(col.mean(), 1e-3, 1 - 1e-3)
            b[jj, 0] = np.log(m / (1 - m))
        else:
            b[jj, 0] = col.mean()
    gamma = np.array([max(y[:, jj].var(), 1e-3) if f.has_dispersion else 0.0 for jj, f in enumerate(fams)])
    return z, b, gamma, np.full(2 ** k, 2.0 ** -k)


def _flip_to_positive(b, p, k):
    """Relabel latent levels so every column of slopes has a positive sum."""
    b = b.copy()
    states = all_states(k)
    flipped = []
    for kk in range(k):
        if b[:, kk + 1].sum() < 0:
            b[:, 0] += b[:, kk + 1]
            b[:, kk + 1] = -b[:, kk + 1]
            s = states.copy()
            s[:, kk] = 1 - s[:, kk]
            p = p[state_codes(s)]
            flipped.append(kk)
    return b, p, flipped


def fit(x, k: int, families, config: SaemConfig | None = None, rng=None, start=None) -> FitResult:
    """Run penalized Gibbs-SAEM.

    ``start`` optionally supplies an initial point ``(z, b, gamma, p)`` and
    bypasses ``config.init``.
    """
    config = config or SaemConfig()
    rng = rng if rng is not None else np.random.default_rng()
    x = np.asarray(x, dtype=float)
    n, j = x.shape
    if k > config.cap:
        raise CapacityError(f"K={k} exceeds the dense cap {config.cap}")
    fams = as_families(families, j)
    y = link_scale_data(x, fams)
    penalty = penalty_from_config(config, n, j)
    schedule = StepSchedule(config.burn_in, config.alpha)
    consts = data_constants(x, fams)

    init_used = config.init if start is None else "given"
    if start is not None:
        z, b, gamma, p = (np.array(a, copy=True) for a in start)
    elif config.init == "spectral":
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                init = spectral_init(x, k, fams, config.init_config)
            z, b, gamma, p = init.z0, init.b0, init.gamma0, init.p0
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as err:
            log.warning("spectral initialisation failed (%s); using random start", err)
            init_used = "random"
            z, b, gamma, p = random_init(y, k, fams, rng)
    elif config.init == "random":
        z, b, gamma, p = random_init(y, k, fams, rng)
    else:
        raise ValueError(f"unknown init {config.init!r}")
    gamma = np.where([f.has_dispersion for f in fams], np.maximum(gamma, 1e-6), 0.0)
    p = update_latent_law(p, p, 1.0)

    state = make_state(z, b, p)
    params = ModelParams(DenseLaw(p), b, np.where(gamma > 0, gamma, 0.0), fams)
    trace_delta, trace_obj = [], []
    calm = 0
    converged = False
    any_failed = False
    for t in range(1, config.max_iter + 1):
        theta = schedule(t)
        gibbs_sweep(state, params, y, rng)
        empirical = np.bincount(state.codes, minlength=2 ** k) / n
        p_new = update_latent_law(state.p, empirical, theta)
        state.stats = update_suffstats(state.stats, batch_suffstats(state.codes, y, k), theta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            b_new, g_new, failed = mstep_all(state.stats, fams, penalty, b, gamma)
        any_failed |= bool(failed.any())
        delta = max(np.max(np.abs(p_new - state.p)), np.max(np.abs(b_new - b)), np.max(np.abs(g_new - gamma)))
        state.p, b, gamma = p_new, b_new, g_new
        state.psi = compute_psi(state.z, b)
        state.iter = t
        params = ModelParams(DenseLaw(state.p / state.p.sum()), b, gamma, fams)
        obj = sum(surrogate_loglik(state.stats, jj, fams[jj], b[jj], gamma[jj] if gamma[jj] > 0 else 1.0,
                                   consts[jj] * state.stats.total / n) for jj in range(j))
        obj -= penalty.value(b[:, 1:]).sum()
        trace_delta.append(float(delta))
        trace_obj.append(float(obj))
        if t > config.burn_in:
            calm = calm + 1 if delta < config.tol else 0
            if calm >= config.patience:
                converged = True
                break

    b, p, flipped = _flip_to_positive(b, state.p, k)
    params = ModelParams(DenseLaw(p / p.sum()), b, gamma, fams)
    z_final = state.z.copy()
    if flipped:
        z_final[:, flipped] = 1 - z_final[:, flipped]
    diagnostics = {
        "converged": converged,
        "n_iter": state.iter,
        "init": init_used,
        "lambda": penalty.lam,
        "tau": penalty.tau,
        "penalty": penalty.kind,
        "mstep_failures": any_failed,
        "flipped_latents": flipped,
        "delta_trace": trace_delta,
        "objective_trace": trace_obj,
    }
    return FitResult(params, threshold_q(b, config.zero_tol), z_final, diagnostics)


# ---------------------------------------------------------------- alignment

def _best_permutation(cost):
    """Lexicographically smallest assignment among those of minimum total cost."""
    k = cost.shape[0]
    r, c = linear_sum_assignment(cost)
    best = cost[r, c].sum()
    sigma = []
    used = set()
    for row in range(k):
        for col in range(k):
            if col in used:
                continue
            rows_left = [i for i in range(row + 1, k)]
            cols_left = [jj for jj in range(k) if jj not in used and jj != col]
            rest = 0.0
            if rows_left:
                sub = cost[np.ix_(rows_left, cols_left)]
                rr, cc = linear_sum_assignment(sub)
                rest = sub[rr, cc].sum()
            prefix = sum(cost[i, sigma[i]] for i in range(row))
            if prefix + cost[row, col] + rest <= best + 1e-9:
                sigma.append(col)
                used.add(col)
                break
    return np.array(sigma)


def permute_law(p, sigma) -> np.ndarray:
    """Law of the relabelled latents Z'_k = Z_sigma(k)."""
    k = len(sigma)
    states = all_states(k)
    est = np.zeros_like(states)
    est[:, sigma] = states
    return np.asarray(p)[state_codes(est)]


def align_permutation(q_est, q_true, params: ModelParams | None = None):
    """Match estimated latent labels to the truth by Hamming distance between Q columns.

    Returns ``(sigma, q_aligned, params_aligned)`` where truth column k is paired
    with estimated column ``sigma[k]``.
    """
    q_est = as_qmatrix(q_est)
    q_true = as_qmatrix(q_true)
    if q_est.shape != q_true.shape:
        raise ValueError("Q matrices differ in shape")
    cost = (q_true[:, :, None] != q_est[:, None, :]).sum(axis=0).astype(float)
    sigma = _best_permutation(cost)
    q_al = q_est[:, sigma]
    aligned = None
    if params is not None:
        b = params.b.copy()
        b[:, 1:] = params.b[:, 1:][:, sigma]
        aligned = ModelParams(DenseLaw(permute_law(densify(params.law), sigma)), b, params.gamma, params.families)
    return sigma, q_al, aligned
