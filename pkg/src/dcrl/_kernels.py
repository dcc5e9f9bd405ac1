"""Compiled inner loops for the Gibbs E-step and the penalized M-step."""

import math

import numpy as np
from numba import njit

# family codes: 0 gaussian, 1 poisson, 2 bernoulli, 3 lognormal (data passed on log scale)


@njit(cache=True)
def _softplus(t):
    if t > 0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


@njit(cache=True)
def flip_loglik_delta(y_i, psi_i, slopes_k, cur, fam, gamma):
    """sum_j log P(x_ij | bit=1) - log P(x_ij | bit=0) for one subject and one bit."""
    d = 0.0
    for j in range(y_i.shape[0]):
        b = slopes_k[j]
        if b == 0.0:
            continue
        p1 = psi_i[j] + (1 - cur) * b
        p0 = p1 - b
        x = y_i[j]
        f = fam[j]
        if f == 0 or f == 3:
            d += ((x - p0) ** 2 - (x - p1) ** 2) / (2.0 * gamma[j])
        elif f == 1:
            d += x * b - (math.exp(min(p1, 50.0)) - math.exp(min(p0, 50.0)))
        else:
            d += x * b - (_softplus(p1) - _softplus(p0))
    return d


@njit(cache=True)
def gibbs_sweep_kernel(y, fam, gamma, slopes, logp, z, codes, psi, perm, u):
    """One systematic pass over subjects, each with its own coordinate order.

    ``slopes`` is K x J (transposed main effects); ``z``, ``codes`` and ``psi``
    are updated in place. Returns the number of accepted flips.
    """
    n, k = z.shape
    flips = 0
    for i in range(n):
        for pos in range(k):
            kk = perm[i, pos]
            w = 1 << (k - 1 - kk)
            c1 = codes[i] | w
            c0 = c1 ^ w
            cur = z[i, kk]
            d = logp[c1] - logp[c0]
            d += flip_loglik_delta(y[i], psi[i], slopes[kk], cur, fam, gamma)
            if d >= 0:
                prob = 1.0 / (1.0 + math.exp(-d))
            else:
                e = math.exp(d)
                prob = e / (1.0 + e)
            new = 1 if u[i, pos] < prob else 0
            if new != cur:
                step = new - cur
                for j in range(psi.shape[1]):
                    psi[i, j] += step * slopes[kk, j]
                z[i, kk] = new
                codes[i] = c1 if new == 1 else c0
                flips += 1
    return flips


@njit(cache=True)
def _penalty_value(t, pieces):
    for r in range(pieces.shape[0]):
        if t <= pieces[r, 1]:
            return pieces[r, 2] * t * t + pieces[r, 3] * t + pieces[r, 4]
    r = pieces.shape[0] - 1
    return pieces[r, 2] * t * t + pieces[r, 3] * t + pieces[r, 4]


@njit(cache=True)
def penalized_prox(a, m, pieces):
    """argmin_b a/2 (b - m)^2 + pen(|b|) for a piecewise-quadratic penalty.

    ``pieces`` rows are (lo, hi, c2, c1, c0) with pen(t) = c2 t^2 + c1 t + c0
    on [lo, hi]. Exact global minimiser; ties go to the smaller magnitude.
    """
    s = 1.0 if m >= 0 else -1.0
    am = abs(m)
    best_t = 0.0
    best = 0.5 * a * am * am
    for r in range(pieces.shape[0]):
        lo, hi, c2, c1, c0 = pieces[r, 0], pieces[r, 1], pieces[r, 2], pieces[r, 3], pieces[r, 4]
        qa = 0.5 * a + c2
        cands = np.empty(3)
        nc = 0
        cands[nc] = lo
        nc += 1
        if hi < np.inf:
            cands[nc] = hi
            nc += 1
        if qa > 0:
            t = (a * am - c1) / (2.0 * qa)
            if t < lo:
                t = lo
            if t > hi:
                t = hi
            cands[nc] = t
            nc += 1
        for c in range(nc):
            t = cands[c]
            val = 0.5 * a * (t - am) ** 2 + c2 * t * t + c1 * t + c0
            if val < best - 1e-15 * (1.0 + abs(best)):
                best = val
                best_t = t
    return s * best_t


@njit(cache=True)
def penalized_cd(A, r, beta, penalized, pieces, max_sweeps, tol):
    """Cyclic coordinate descent for 1/2 b'Ab - r'b + sum_k pen(b_k) over penalized k.

    Every coordinate update is an exact minimisation, so the objective never
    increases. ``beta`` is updated in place; returns the number of sweeps.
    """
    p = beta.shape[0]
    for sweep in range(max_sweeps):
        change = 0.0
        for k in range(p):
            a = A[k, k]
            g = r[k]
            for l in range(p):
                if l != k:
                    g -= A[k, l] * beta[l]
            if a <= 1e-12:
                new = 0.0 if penalized[k] else beta[k]
            elif penalized[k]:
                new = penalized_prox(a, g / a, pieces)
            else:
                new = g / a
            d = abs(new - beta[k])
            if d > change:
                change = d
            beta[k] = new
        if change < tol:
            return sweep + 1
    return max_sweeps


@njit(cache=True)
def penalized_cd_batch(A, r, beta, penalized, pieces, max_sweeps, tol):
    for j in range(beta.shape[0]):
        penalized_cd(A[j], r[j], beta[j], penalized, pieces, max_sweeps, tol)
