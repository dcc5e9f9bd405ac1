"""Spectral initialisation: USVT-style denoising, link inversion, Varimax."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logit

from .model import Family, as_families, state_codes


@dataclass
class InitConfig:
    eps: float = 1e-2
    delta: float | None = None  # None: 0.5 / sqrt(J)
    c_g: float = 1.0
    varimax_max_iter: int = 500
    varimax_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 0.5)")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.c_g <= 0:
            raise ValueError("c_g must be positive")


@dataclass
class InitOutput:
    p0: np.ndarray
    b0: np.ndarray
    gamma0: np.ndarray
    z0: np.ndarray
    q0: np.ndarray
    rank: int = 0
    delta: float = 0.0


def select_rank(singular_values, n: int, k: int) -> int:
    sv = np.asarray(singular_values, dtype=float)
    above = np.nonzero(sv >= 1.01 * np.sqrt(n))[0]
    return max(k + 1, int(above[-1]) + 1 if above.size else 0)


def truncate_to_range(x_lowrank, families, eps: float = 1e-4) -> np.ndarray:
    x = np.array(x_lowrank, dtype=float, copy=True)
    fams = as_families(families, x.shape[1])
    for j, f in enumerate(fams):
        if f is Family.BERNOULLI:
            x[:, j] = np.clip(x[:, j], eps, 1 - eps)
        elif f in (Family.POISSON, Family.LOGNORMAL):
            x[:, j] = np.maximum(x[:, j], eps)
    return x


def invert_link(x_trunc, families) -> np.ndarray:
    x = np.asarray(x_trunc, dtype=float)
    fams = as_families(families, x.shape[1])
    out = np.empty_like(x)
    for j, f in enumerate(fams):
        col = x[:, j]
        if f is Family.GAUSSIAN:
            out[:, j] = col
            continue
        lo, hi = (0.0, 1.0) if f is Family.BERNOULLI else (0.0, np.inf)
        if np.any(col <= lo) or np.any(col >= hi):
            raise FloatingPointError(f"column {j} leaves the {f.value} mean range; truncate first")
        out[:, j] = logit(col) if f is Family.BERNOULLI else np.log(col)
    return out


def varimax_criterion(v) -> float:
    v2 = np.asarray(v, dtype=float) ** 2
    return float(np.sum(np.mean(v2 ** 2, axis=0) - np.mean(v2, axis=0) ** 2))


def varimax(v, max_iter: int = 500, tol: float = 1e-10, return_rotation: bool = False):
    """Raw Varimax by successive planar rotations of column pairs.

    Each planar rotation is the exact maximiser of the criterion in its plane,
    so the criterion never decreases.
    """
    v = np.array(v, dtype=float, copy=True)
    j, k = v.shape
    rot = np.eye(k)
    converged = k < 2
    for _ in range(max_iter if k >= 2 else 0):
        largest = 0.0
        for a in range(k - 1):
            for b in range(a + 1, k):
                x, y = v[:, a], v[:, b]
                u = x * x - y * y
                w = 2 * x * y
                num = 2 * (j * np.dot(u, w) - u.sum() * w.sum())
                den = j * (np.dot(u, u) - np.dot(w, w)) - (u.sum() ** 2 - w.sum() ** 2)
                phi = 0.25 * np.arctan2(num, den)
                if abs(phi) < 1e-15:
                    continue
                c, s = np.cos(phi), np.sin(phi)
                g = np.array([[c, -s], [s, c]])
                v[:, [a, b]] = v[:, [a, b]] @ g
                rot[:, [a, b]] = rot[:, [a, b]] @ g
                largest = max(largest, abs(phi))
        if largest < tol:
            converged = True
            break
    if not converged:
        warnings.warn("varimax did not converge; returning the last iterate", RuntimeWarning)
    return (v, rot) if return_rotation else v


def _svd(a):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    # largest-magnitude entry of each right singular vector made positive
    idx = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return u * signs, s, vt * signs[:, None]


def _solve(gram, rhs, what):
    try:
        if np.linalg.cond(gram) > 1e12:
            raise np.linalg.LinAlgError
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        warnings.warn(f"{what} is singular; adding a 1e-8 ridge", RuntimeWarning)
        return np.linalg.solve(gram + 1e-8 * np.eye(gram.shape[0]), rhs)


def link_scale_data(x, families) -> np.ndarray:
    """Observed data on the scale of the linear predictor, where it is defined."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    for j, f in enumerate(as_families(families, x.shape[1])):
        if f is Family.LOGNORMAL:
            out[:, j] = np.log(x[:, j])
    return out


def spectral_init(x, k: int, families, config: InitConfig | None = None) -> InitOutput:
    config = config or InitConfig()
    x = np.asarray(x, dtype=float)
    n, j = x.shape
    fams = as_families(families, j)

    u, s, vt = _svd(x)
    rank = min(select_rank(s, n, k), s.size)
    x_low = (u[:, :rank] * s[:rank]) @ vt[:rank]
    lhat = invert_link(truncate_to_range(x_low, fams, config.eps), fams)
    means = lhat.mean(axis=0)
    l0 = lhat - means

    _, _, vt0 = _svd(l0)
    loadings = vt0[:k].T
    rotated = varimax(loadings, config.varimax_max_iter, config.varimax_tol)
    delta = config.delta
    if delta is None:
        delta = 0.5 / np.sqrt(j)
    rotated = np.where(np.abs(rotated) < delta, 0.0, rotated)
    signs = np.where(rotated.mean(axis=0) < 0, -1.0, 1.0)
    rotated = rotated * signs
    q0 = (rotated != 0).astype(np.int8)

    z_scores = l0 @ rotated @ _solve(rotated.T @ rotated, np.eye(k), "V'V")
    z0 = (z_scores > 0).astype(np.int8)

    z_long = np.hstack([np.ones((n, 1)), z0])
    # regressing the uncentred L on [1, Z] gives the same slopes as L0 and an intercept on the data scale
    coef = _solve(z_long.T @ z_long, z_long.T @ lhat, "Z'Z").T
    mask = np.hstack([np.ones((j, 1)), q0])
    b0 = config.c_g * coef * mask

    resid = link_scale_data(x, fams) - z_long @ b0.T
    gamma0 = np.where([f.has_dispersion for f in fams], np.mean(resid ** 2, axis=0), 0.0)
    gamma0 = np.where([f.has_dispersion for f in fams], np.maximum(gamma0, 1e-6), 0.0)

    counts = np.bincount(state_codes(z0), minlength=2 ** k).astype(float)
    p0 = counts / n
    p0[counts == 0] = 1e-6 / 2 ** k
    p0 /= p0.sum()
    return InitOutput(p0=p0, b0=b0, gamma0=gamma0, z0=z0, q0=q0, rank=rank, delta=delta)
