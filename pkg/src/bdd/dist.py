"""Distance-based local polynomial estimator of the boundary effect curve.

Samples are reduced to the signed distance ``D_i(x)`` from the evaluation
point, positive on the treated side.  Each side is fitted on
``r_p(D_i/h)`` with weights ``k(D_i/h)/h^2``; the ``1/h^2`` matches the
two-dimensional score and must not be changed to ``1/h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import KernelDim, KernelSpec, eval_basis_uni
from .biv import BivCovariance, covariance_from_fits
from .data import Dataset
from .errors import ConfigError
from .geometry import EUCLIDEAN, EvalGrid, MetricSpec, signed_score
from .locfit import DEFAULT_RANK_TOL, SIDES, SideFit, fit_side

DEFAULT_KERNEL_UNI = KernelSpec(dimension="uni")


@dataclass(frozen=True)
class DistPointFit:
    x: np.ndarray
    h: float
    p: int
    kernel: KernelSpec
    metric: MetricSpec
    tau_hat_dis: float
    gamma0: np.ndarray
    gamma1: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    n_eff0: int
    n_eff1: int
    sides: tuple[SideFit, SideFit]
    n: int

    @property
    def tau_hat(self) -> float:
        return self.tau_hat_dis

    coef_position = 0
    derivative_scale = 1.0


def fit_dist_point(
    data: Dataset,
    x,
    h: float,
    p: int = 1,
    kernel_uni: KernelSpec = DEFAULT_KERNEL_UNI,
    metric: MetricSpec = EUCLIDEAN,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> DistPointFit:
    """Two-sided univariate fit in the signed distance to ``x``.

    Control samples use ``D < 0`` and treated samples ``D >= 0``; a sample
    at distance zero is treated because boundary points are treated.
    """
    if not (h > 0 and math.isfinite(h)):
        raise ConfigError(f"bandwidth must be positive and finite, got {h}")
    if kernel_uni.dimension is not KernelDim.UNI:
        raise ConfigError("the distance estimator needs a univariate kernel")
    x = np.asarray(x, dtype=float)
    D = signed_score(data.x, x, data.treated, metric)
    r = D / h
    w = kernel_uni.weights(r) / (h * h)
    inside = w > 0
    sides = []
    for t, name in enumerate(SIDES):
        idx = np.flatnonzero(inside & (data.treated == bool(t)))
        R = eval_basis_uni(r[idx], p)
        sides.append(fit_side(idx, R, w[idx], data.y[idx], name, rank_tol))
    s0, s1 = sides
    tau = float(s1.wls.coeffs[0] - s0.wls.coeffs[0])
    return DistPointFit(
        x, float(h), int(p), kernel_uni, metric, tau,
        s0.wls.coeffs, s1.wls.coeffs,
        s0.wls.gram / data.n, s1.wls.gram / data.n,
        s0.n_effective, s1.n_effective, (s0, s1), data.n,
    )


class DistCovariance(BivCovariance):
    @property
    def xi(self) -> np.ndarray:
        return self.omega


def covariance_dist(data: Dataset, grid: EvalGrid | None, fits: list[DistPointFit], **_unused) -> DistCovariance:
    """Cross-point sandwich covariance of the distance-based estimates.

    The algebra is the same as for the bivariate estimator with ``r_p(D/h)``
    design rows.
    """
    if fits:
        ref = fits[0]
        for f in fits:
            if f is not None and (f.p, f.kernel, f.metric) != (ref.p, ref.kernel, ref.metric):
                raise ConfigError("all fits must share p, kernel and metric")
    c = covariance_from_fits(fits, data.n, grid)
    return DistCovariance(c.grid, c.omega, c.variances, c.min_eig_raw, c.max_eig_raw)
