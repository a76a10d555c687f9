"""Bivariate-location local polynomial estimator of the boundary effect curve.

Each side is fitted in scaled coordinates ``u = (X - x)/h`` with weights
``K(u)/h^2``.  Derivative estimands return the actual partial derivative,
``nu! h^{-|nu|}`` times the fitted Taylor coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .basis import ZERO, KernelDim, KernelSpec, MultiIndex, dim_biv, enumerate_multi_indices, eval_basis_biv, position, selector
from .data import Dataset
from .errors import BiasUnavailable, ConfigError, DegenerateFit, RbcUnavailable
from .geometry import EvalGrid
from .locfit import (
    DEFAULT_RANK_TOL,
    SIDES,
    SideFit,
    assemble_covariance,
    fit_side,
    influence_row,
    psd_repair,
)

DEFAULT_KERNEL = KernelSpec()


def normal_quantile(prob: float) -> float:
    """Standard normal quantile (Wichura's AS241 rational approximation)."""
    return NormalDist().inv_cdf(prob)


def _check_h(h: float) -> float:
    if not (h > 0 and math.isfinite(h)):
        raise ConfigError(f"bandwidth must be positive and finite, got {h}")
    return float(h)


@dataclass(frozen=True)
class BivPointFit:
    x: np.ndarray
    h: float
    p: int
    nu: MultiIndex
    kernel: KernelSpec
    tau_hat: float
    beta0: np.ndarray
    beta1: np.ndarray
    gram0: np.ndarray
    gram1: np.ndarray
    n_eff0: int
    n_eff1: int
    sides: tuple[SideFit, SideFit]
    n: int

    @property
    def derivative_scale(self) -> float:
        return self.nu.factorial * self.h ** (-self.nu.order)

    @property
    def coef_position(self) -> int:
        return position(self.nu, self.p)


def _window(data: Dataset, x: np.ndarray, h: float, kernel: KernelSpec):
    u = (data.x - x) / h
    k = kernel.weights(u)
    inside = k > 0
    return u, k / (h * h), inside


def fit_biv_point(
    data: Dataset,
    x,
    h: float,
    p: int = 1,
    kernel: KernelSpec = DEFAULT_KERNEL,
    nu: MultiIndex = ZERO,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> BivPointFit:
    """Two-sided local polynomial fit at boundary point ``x``.

    Raises
    ------
    DegenerateFit
        With ``side`` set when either side has fewer than ``dim`` samples in
        the kernel window.
    """
    h = _check_h(h)
    if kernel.dimension is not KernelDim.BIV:
        raise ConfigError("the bivariate estimator needs a bivariate kernel")
    e = selector(nu, p)
    x = np.asarray(x, dtype=float)
    u, w, inside = _window(data, x, h, kernel)
    sides = []
    for t, name in enumerate(SIDES):
        idx = np.flatnonzero(inside & (data.treated == bool(t)))
        R = eval_basis_biv(u[idx], p).reshape(len(idx), dim_biv(p))
        sides.append(fit_side(idx, R, w[idx], data.y[idx], name, rank_tol))
    s0, s1 = sides
    scale = nu.factorial * h ** (-nu.order)
    tau = scale * float(e @ s1.wls.coeffs - e @ s0.wls.coeffs)
    return BivPointFit(
        x, h, int(p), nu, kernel, tau,
        s0.wls.coeffs, s1.wls.coeffs,
        s0.wls.gram / data.n, s1.wls.gram / data.n,
        s0.n_effective, s1.n_effective, (s0, s1), data.n,
    )


def residuals_biv(data: Dataset, x, fit: BivPointFit) -> np.ndarray:
    """Residuals ``Y_i - R_p((X_i - x)/h)^T beta_side`` for every sample."""
    x = np.asarray(x, dtype=float)
    R = eval_basis_biv((data.x - x) / fit.h, fit.p).reshape(data.n, -1)
    fitted = np.where(data.treated, R @ fit.beta1, R @ fit.beta0)
    return data.y - fitted


def influence_rows(fit) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-side influence rows of a point fit (biv or dist)."""
    e = np.zeros(fit.sides[0].design.shape[1])
    e[fit.coef_position] = 1.0
    return [(s.idx, influence_row(s, e, fit.derivative_scale)) for s in fit.sides]


@dataclass(frozen=True)
class BivCovariance:
    grid: EvalGrid | None
    omega: np.ndarray
    variances: np.ndarray
    min_eig_raw: float
    max_eig_raw: float


def covariance_from_fits(fits, n: int, grid: EvalGrid | None = None) -> BivCovariance:
    if any(f is None for f in fits):
        raise ConfigError("covariance needs a fit at every grid point")
    raw = assemble_covariance([influence_rows(f) for f in fits], n)
    rep = psd_repair(raw)
    return BivCovariance(grid, rep.matrix, np.diag(rep.matrix).copy(), rep.min_eig_raw, rep.max_eig_raw)


def covariance_biv(data: Dataset, grid: EvalGrid | None, fits: list[BivPointFit], **_unused) -> BivCovariance:
    """Sandwich covariance of the estimates across grid points, cross terms included.

    Entry ``(a, b)`` is ``sum_i l_i(x_a) l_i(x_b)`` with
    ``l_i(x) = nu! h^{-|nu|} e^T G(x)^{-1} R_i(x) w_i(x) eps_i(x)`` and raw
    Gram ``G(x)``; this equals the textbook ``(1/(n h^{2+2|nu|})) e^T
    Gamma^{-1} Sigma Gamma^{-1} e`` form summed over the two sides.
    """
    if fits:
        ref = fits[0]
        for f in fits:
            if f is not None and (f.p, f.nu, f.kernel) != (ref.p, ref.nu, ref.kernel):
                raise ConfigError("all fits must share p, nu and kernel")
    return covariance_from_fits(fits, data.n, grid)


@dataclass(frozen=True)
class PilotSpec:
    order: int
    h: float


def pilot_bandwidth(n: int, order: int, c: float = 1.0) -> float:
    """Rule-of-thumb pilot bandwidth ``c n^{-1/(2 order + 4)}``."""
    return float(c) * float(n) ** (-1.0 / (2 * order + 4))


@dataclass(frozen=True)
class BiasEstimate:
    x: np.ndarray
    b_hat: float
    b0: float
    b1: float
    pilot_order: int
    pilot_h: float


def bias_biv(
    data: Dataset,
    x,
    h: float,
    p: int = 1,
    kernel: KernelSpec = DEFAULT_KERNEL,
    pilot: PilotSpec | None = None,
    nu: MultiIndex = ZERO,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> BiasEstimate:
    """Leading conditional bias constant ``B_x = B_1 - B_0``.

    The estimator's bias is approximately ``h^{p+1-|nu|} B_x``.  Taylor
    coefficients of order ``p+1`` come from a pilot fit of that order.

    Raises
    ------
    BiasUnavailable
        If the pilot fit or the order-``p`` fit is degenerate.
    """
    h = _check_h(h)
    if pilot is None:
        pilot = PilotSpec(p + 1, pilot_bandwidth(data.n, p + 1))
    if pilot.order != p + 1:
        raise ConfigError(f"pilot order must be p+1 = {p + 1}, got {pilot.order}")
    x = np.asarray(x, dtype=float)
    top = [k for k in enumerate_multi_indices(p + 1) if k.order == p + 1]
    try:
        pf = fit_biv_point(data, x, pilot.h, p + 1, kernel, ZERO, rank_tol)
        mf = fit_biv_point(data, x, h, p, kernel, nu, rank_tol)
    except DegenerateFit as exc:
        raise BiasUnavailable(f"bias estimate unavailable at {x.tolist()}: {exc}") from None
    pos = {k: j for j, k in enumerate(enumerate_multi_indices(p + 1))}
    e = selector(nu, p)
    parts = []
    for t in (0, 1):
        coef = pf.sides[t].wls.coeffs
        c = {k: coef[pos[k]] * pilot.h ** (-(p + 1)) for k in top}
        side = mf.sides[t]
        u = (data.x[side.idx] - x) / h
        q = np.zeros(len(side.idx))
        for k, ck in c.items():
            q += ck * u[:, 0] ** k.nu1 * u[:, 1] ** k.nu2
        m = side.design.T @ (side.weights * q)
        parts.append(nu.factorial * float(e @ side.wls.solve(m)))
    return BiasEstimate(x, parts[1] - parts[0], parts[0], parts[1], pilot.order, pilot.h)


def ci_pointwise(tau_hat: float, se: float, alpha: float = 0.05) -> tuple[float, float]:
    """Symmetric normal interval ``tau_hat -/+ z_{1-alpha/2} se``."""
    if not (0 < alpha < 1):
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if not se > 0:
        raise ConfigError(f"standard error must be positive, got {se}")
    z = normal_quantile(1.0 - alpha / 2.0)
    return tau_hat - z * se, tau_hat + z * se


@dataclass(frozen=True)
class RbcResult:
    """Robust bias-corrected inference at one point.

    ``tau_hat`` is the order-``p`` estimate; the interval is centred on the
    order-``p+1`` estimate ``tau_rbc`` with its own standard error.
    """

    tau_hat: float
    tau_rbc: float
    se: float
    ci: tuple[float, float]
    fit_p: BivPointFit
    fit_rbc: BivPointFit


def rbc_estimate(
    data: Dataset,
    x,
    h: float,
    p: int = 1,
    kernel: KernelSpec = DEFAULT_KERNEL,
    nu: MultiIndex = ZERO,
    alpha: float = 0.05,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> RbcResult:
    fp = fit_biv_point(data, x, h, p, kernel, nu, rank_tol)
    try:
        fr = fit_biv_point(data, x, h, p + 1, kernel, nu, rank_tol)
    except DegenerateFit as exc:
        raise RbcUnavailable(f"order {p + 1} fit failed: {exc}") from None
    var = covariance_from_fits([fr], data.n).variances[0]
    se = math.sqrt(var)
    if not se > 0:
        raise RbcUnavailable("order p+1 standard error is zero")
    return RbcResult(fp.tau_hat, fr.tau_hat, se, ci_pointwise(fr.tau_hat, se, alpha), fp, fr)


def variance_constant(fit: BivPointFit, omega_xx: float) -> float:
    """``V_x = n h^{2+2|nu|} Omega_xx``, the bandwidth-free variance constant."""
    return fit.n * fit.h ** (2 + 2 * fit.nu.order) * omega_xx
