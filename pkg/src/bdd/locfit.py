"""Kernel-weighted least squares with a deterministic ridge fallback."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse

from .errors import ConfigError, DegenerateFit

DEFAULT_RANK_TOL = 1e-10


@dataclass(frozen=True)
class WlsResult:
    """Solution of one weighted least squares problem.

    Attributes
    ----------
    coeffs : ndarray
        Coefficients in the coordinates of the design rows.
    gram : ndarray
        ``sum_i w_i R_i R_i^T`` without any ridge term.
    sum_weights : float
    n_effective : int
        Number of strictly positive weights.
    ridge_used : bool
    ridge_lambda : float
        Diagonal shift used by the factorization (0 when no ridge).
    """

    coeffs: np.ndarray
    gram: np.ndarray
    sum_weights: float
    n_effective: int
    ridge_used: bool
    ridge_lambda: float
    _factor: tuple = field(repr=False, compare=False)

    def solve(self, rhs) -> np.ndarray:
        """Apply the (possibly ridged) inverse Gram used for ``coeffs``."""
        return linalg.cho_solve(self._factor, np.asarray(rhs, dtype=float))


def _cholesky(g: np.ndarray, rank_tol: float):
    try:
        c, low = linalg.cho_factor(g, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    piv = np.diag(c) ** 2
    if not np.all(np.isfinite(piv)) or piv.min() < rank_tol * max(float(np.max(np.diag(g))), np.finfo(float).tiny):
        return None
    return c, low


def weighted_ls(design, weights, y, rank_tol: float = DEFAULT_RANK_TOL) -> WlsResult:
    """Minimise ``sum_i w_i (y_i - R_i^T b)^2`` through the normal equations.

    Parameters
    ----------
    design : array_like, shape (n, dim)
    weights : array_like, shape (n,)
        Nonnegative kernel weights.
    y : array_like, shape (n,)
    rank_tol : float
        Relative pivot tolerance for the Cholesky factor.  When it is not met
        the factorization is retried once with ``rank_tol * trace / dim`` added
        to the diagonal.

    Raises
    ------
    DegenerateFit
        If fewer than ``dim`` weights are positive, or the ridged Gram still
        cannot be factored.
    """
    R = np.asarray(design, dtype=float)
    w = np.asarray(weights, dtype=float)
    y = np.asarray(y, dtype=float)
    if R.ndim != 2 or w.shape != (R.shape[0],) or y.shape != (R.shape[0],):
        raise ConfigError("design, weights and y have inconsistent shapes")
    if not rank_tol > 0:
        raise ConfigError(f"rank_tol must be positive, got {rank_tol}")
    if np.any(w < 0):
        raise ConfigError("kernel weights must be nonnegative")
    dim = R.shape[1]
    n_eff = int(np.count_nonzero(w > 0))
    if n_eff < dim:
        raise DegenerateFit(n_eff, dim)
    Rw = R * w[:, None]
    g = Rw.T @ R
    g = 0.5 * (g + g.T)
    rhs = Rw.T @ y
    factor = _cholesky(g, rank_tol)
    lam = 0.0
    if factor is None:
        lam = rank_tol * float(np.trace(g)) / dim
        try:
            factor = linalg.cho_factor(g + lam * np.eye(dim), lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise DegenerateFit(n_eff, dim) from None
    coeffs = linalg.cho_solve(factor, rhs)
    return WlsResult(coeffs, g, float(w.sum()), n_eff, lam > 0, lam, factor)


SIDES = ("control", "treated")


@dataclass(frozen=True)
class SideFit:
    """One side of a two-sided local fit, restricted to the kernel window.

    ``idx`` indexes the full sample; ``design``, ``weights`` and ``resid``
    are aligned with it.
    """

    idx: np.ndarray
    design: np.ndarray
    weights: np.ndarray
    wls: WlsResult
    resid: np.ndarray

    @property
    def n_effective(self) -> int:
        return self.wls.n_effective


def fit_side(idx, design, weights, y, side: str, rank_tol: float = DEFAULT_RANK_TOL) -> SideFit:
    """Fit one side and keep what the covariance and bias steps reuse."""
    try:
        res = weighted_ls(design, weights, y, rank_tol)
    except DegenerateFit as exc:
        raise exc.with_side(side) from None
    return SideFit(np.asarray(idx), design, weights, res, y - design @ res.coeffs)


def influence_row(side: SideFit, e: np.ndarray, scale: float) -> np.ndarray:
    """``scale * e^T G^{-1} R_i w_i eps_i`` for the in-window samples of one side.

    Summing products of these rows over samples and sides gives the sandwich
    covariance between two evaluation points.
    """
    a = side.wls.solve(e)
    return scale * (side.design @ a) * side.weights * side.resid


def assemble_covariance(rows: list[list[tuple[np.ndarray, np.ndarray]]], n: int) -> np.ndarray:
    """Cross-point covariance from per-point influence rows.

    ``rows[m]`` lists ``(idx, values)`` pairs, one per side, for grid point ``m``.
    Sides never share samples, so both sides can be stacked into one sparse row.
    """
    M = len(rows)
    r_idx, c_idx, vals = [], [], []
    for m, parts in enumerate(rows):
        for idx, v in parts:
            r_idx.append(np.full(len(idx), m))
            c_idx.append(idx)
            vals.append(v)
    if not vals:
        return np.zeros((M, M))
    Lm = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))), shape=(M, n)
    )
    return np.asarray((Lm @ Lm.T).toarray())


@dataclass(frozen=True)
class RepairedCovariance:
    matrix: np.ndarray
    min_eig_raw: float
    max_eig_raw: float
    clipped: bool


def psd_repair(cov) -> RepairedCovariance:
    """Symmetrise, clip negative eigenvalues and add a trace-scaled jitter."""
    c = np.asarray(cov, dtype=float)
    c = 0.5 * (c + c.T)
    M = c.shape[0]
    eig, vec = np.linalg.eigh(c)
    clipped = bool(eig[0] < 0)
    if clipped:
        c = (vec * np.clip(eig, 0.0, None)) @ vec.T
        c = 0.5 * (c + c.T)
    jitter = 1e-12 * float(np.trace(c)) / M
    c = c + jitter * np.eye(M)
    return RepairedCovariance(c, float(eig[0]), float(eig[-1]), clipped)
