"""Uniform confidence bands from the supremum of a correlated Gaussian vector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .parallel import ordered_map

BLOCK = 1024
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class BandResult:
    alpha: float
    q_alpha: float
    draws: int
    seed: int
    lower: list
    upper: list


def corr_from_cov(cov) -> np.ndarray:
    """Correlation matrix of a covariance, eigen-clipped to stay PSD."""
    c = np.asarray(cov, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ConfigError(f"covariance must be square, got shape {c.shape}")
    d = np.diag(c)
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        raise NumericalError(f"nonpositive variance at grid point {int(bad[0])}")
    s = np.sqrt(d)
    r = c / np.outer(s, s)
    r = 0.5 * (r + r.T)
    eig, vec = np.linalg.eigh(r)
    if eig[0] < 0:
        r = (vec * np.clip(eig, 0.0, None)) @ vec.T
        dd = np.sqrt(np.diag(r))
        r = r / np.outer(dd, dd)
        r = 0.5 * (r + r.T)
    r = np.clip(r, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


def _factor(corr: np.ndarray) -> np.ndarray:
    eig, vec = np.linalg.eigh(corr)
    if not np.all(np.isfinite(eig)):
        raise NumericalError("correlation factorization failed")
    return vec * np.sqrt(np.clip(eig, 0.0, None))


def _block_max(A: np.ndarray, seed: int, block: int, size: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=[seed & _MASK64, block]))
    xi = gen.standard_normal((size, A.shape[1]))
    return np.max(np.abs(xi @ A.T), axis=1)


def sup_abs_gaussian_quantile(corr, alpha: float = 0.05, draws: int = 3000, seed: int = 0) -> float:
    """Upper ``alpha`` quantile of ``max_l |Z_l|`` with ``Z ~ N(0, corr)``.

    Draws come in fixed-size blocks, each from a Philox stream keyed on
    ``(seed, block index)``, so the result does not depend on threading.
    The quantile takes the ceiling-index order statistic.
    """
    r = np.asarray(corr, dtype=float)
    if not (0 < alpha < 1):
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if int(draws) != draws or draws < 1000:
        raise ConfigError(f"draws must be an integer >= 1000, got {draws}")
    draws = int(draws)
    A = _factor(r)
    nblocks = -(-draws // BLOCK)
    sizes = [min(BLOCK, draws - b * BLOCK) for b in range(nblocks)]
    parts = ordered_map(lambda b: _block_max(A, seed, b, sizes[b]), range(nblocks))
    m = np.sort(np.concatenate(parts))
    k = math.ceil((1.0 - alpha) * draws - 1e-9)
    return float(m[max(k, 1) - 1])


def confidence_band(estimates, ses, q_alpha: float, alpha: float = float("nan"), draws: int = 0, seed: int = 0) -> BandResult:
    """Intervals ``estimate -/+ q_alpha se``; ``None`` entries stay ``None``."""
    if len(estimates) != len(ses):
        raise ConfigError("estimates and standard errors differ in length")
    lo, hi = [], []
    for t, s in zip(estimates, ses):
        if t is None or s is None or not (s > 0):
            lo.append(None)
            hi.append(None)
        else:
            lo.append(t - q_alpha * s)
            hi.append(t + q_alpha * s)
    return BandResult(alpha, q_alpha, draws, seed, lo, hi)
