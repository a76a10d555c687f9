"""End-to-end estimation along a boundary grid.

Everything here works in the dataset's working coordinates.  Bandwidths
given by the user are in raw score units and are divided by the dataset's
length scale; reported bandwidths are converted back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import bandwidth as bw
from .bands import BandResult, confidence_band, corr_from_cov, sup_abs_gaussian_quantile
from .basis import ZERO, KernelFamily, KernelShape, KernelSpec, MultiIndex, parse_family
from .biv import (
    PilotSpec,
    bias_biv,
    covariance_from_fits,
    fit_biv_point,
    normal_quantile,
    pilot_bandwidth,
    variance_constant,
)
from .data import Dataset
from .dist import fit_dist_point
from .errors import BiasNearZero, BiasUnavailable, ConfigError, DegenerateFit, NumericalError
from .geometry import EUCLIDEAN, BoundaryPolyline, EvalGrid, MetricSpec, detect_kinks
from .locfit import DEFAULT_RANK_TOL
from .parallel import ordered_map

METHODS = ("biv", "dist")
POLICIES = ("value", "mse", "imse", "rot-est-kink", "rot-inf-kink", "rot-smooth")


@dataclass(frozen=True)
class BandwidthPolicy:
    """How to pick ``h``.

    ``kind`` is one of ``value``, ``mse``, ``imse``, ``rot-est-kink``,
    ``rot-inf-kink`` or ``rot-smooth``.  ``value`` holds the bandwidth for
    ``kind="value"`` and an optional scale constant for the rule-of-thumb
    kinds, both in raw score units.
    """

    kind: str = "mse"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ConfigError(f"unknown bandwidth policy {self.kind!r}; expected one of {', '.join(POLICIES)}")
        if self.kind == "value" and self.value is None:
            raise ConfigError("a fixed bandwidth needs a value, e.g. value:0.3")
        if self.value is not None and not (self.value > 0 and math.isfinite(self.value)):
            raise ConfigError(f"bandwidth parameter must be positive, got {self.value}")
        if self.kind in ("mse", "imse") and self.value is not None:
            raise ConfigError(f"policy {self.kind!r} takes no parameter")

    @classmethod
    def parse(cls, text: str) -> "BandwidthPolicy":
        kind, _, arg = str(text).strip().partition(":")
        val = None
        if arg:
            try:
                val = float(arg)
            except ValueError:
                raise ConfigError(f"cannot parse bandwidth parameter in {text!r}") from None
        return cls(kind, val)

    def __str__(self) -> str:
        return self.kind if self.value is None else f"{self.kind}:{self.value!r}"


@dataclass(frozen=True)
class EstimatorConfig:
    method: str = "biv"
    p: int = 1
    nu: MultiIndex = ZERO
    kernel: KernelFamily = KernelFamily.TRIANGULAR
    shape: KernelShape = KernelShape.PRODUCT
    metric: MetricSpec = EUCLIDEAN
    bandwidth: BandwidthPolicy | None = None
    alpha: float = 0.05
    rbc: bool = False
    smooth_boundary: bool = False
    rank_tol: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be 'biv' or 'dist', got {self.method!r}")
        if int(self.p) != self.p or self.p < 0:
            raise ConfigError(f"p must be a nonnegative integer, got {self.p}")
        object.__setattr__(self, "kernel", parse_family(self.kernel))
        object.__setattr__(self, "shape", KernelShape(self.shape))
        if self.nu.order > self.p:
            raise ConfigError(f"|nu| = {self.nu.order} exceeds p = {self.p}")
        if not (0 < self.alpha < 1):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.bandwidth is None:
            default = BandwidthPolicy("mse") if self.method == "biv" else BandwidthPolicy("rot-est-kink")
            object.__setattr__(self, "bandwidth", default)
        if self.method == "dist":
            if self.nu != ZERO:
                raise ConfigError("the distance estimator only targets the level (nu = 0,0)")
            if self.bandwidth.kind in ("mse", "imse"):
                raise ConfigError("plug-in bandwidths are only available for the bivariate estimator; use a rot-* rule or value:<h>")
            if self.rbc and not self.smooth_boundary:
                raise ConfigError(
                    "--rbc with --method dist requires --smooth-boundary; near boundary kinks bias "
                    "correction is ineffective, undersmooth with rot-inf-kink instead"
                )
        elif not self.metric.is_euclidean:
            raise ConfigError("a distance metric only applies to --method dist")

    @property
    def kernel_spec(self) -> KernelSpec:
        if self.method == "biv":
            return KernelSpec(self.kernel, self.shape, "biv")
        return KernelSpec(self.kernel, self.shape, "uni")


def check_kinks(config: EstimatorConfig, boundary: BoundaryPolyline | None, angle_tol: float, bands: bool) -> list[str]:
    """Warnings (or errors) that depend on kinks in the boundary."""
    if boundary is None or config.method != "dist":
        return []
    kinks = detect_kinks(boundary, angle_tol)
    if not kinks:
        return []
    if config.rbc:
        raise ConfigError(
            f"boundary has {len(kinks)} kink(s); bias correction is ineffective for the distance "
            "estimator near kinks, undersmooth with rot-inf-kink instead of --rbc"
        )
    out = []
    if bands and config.bandwidth.kind == "rot-smooth":
        out.append(
            f"boundary has {len(kinks)} kink(s) but the smooth-boundary bandwidth was requested; "
            "band coverage may fail near kinks"
        )
    return out


def _fit(data: Dataset, x, h: float, p: int, config: EstimatorConfig):
    if config.method == "biv":
        return fit_biv_point(data, x, h, p, config.kernel_spec, config.nu, config.rank_tol)
    return fit_dist_point(data, x, h, p, config.kernel_spec, config.metric, config.rank_tol)


@dataclass
class BandwidthChoice:
    h: np.ndarray
    selection: list[bw.BandwidthSelection]
    notes: list[str] = field(default_factory=list)


def _scale_c(data: Dataset, policy: BandwidthPolicy) -> float:
    if policy.value is not None:
        return policy.value / data.length_scale
    return bw.default_scale(data.x)


def point_constants(data: Dataset, x, config: EstimatorConfig) -> tuple[float, float, float]:
    """``(B, V, h_pre)`` for the MSE plug-in at one point.

    ``V`` comes from an order-``p`` fit at the smooth rule-of-thumb bandwidth
    ``h_pre``; ``B`` uses the same window with Taylor coefficients from an
    order-``p+1`` pilot fit at ``c n^{-1/(2p+6)}``.
    """
    c = bw.default_scale(data.x)
    p = config.p
    h_pre = bw.rot_bandwidth(data.n, p, bw.RotPurpose.ESTIMATION_SMOOTH, c).value
    pilot = PilotSpec(p + 1, pilot_bandwidth(data.n, p + 1, c))
    try:
        fit = fit_biv_point(data, x, h_pre, p, config.kernel_spec, config.nu, config.rank_tol)
    except DegenerateFit as exc:
        raise BiasUnavailable(str(exc)) from None
    v = variance_constant(fit, covariance_from_fits([fit], data.n).variances[0])
    b = bias_biv(data, x, h_pre, p, config.kernel_spec, pilot, config.nu, config.rank_tol).b_hat
    return b, v, h_pre


def choose_bandwidth(data: Dataset, grid: EvalGrid, config: EstimatorConfig) -> BandwidthChoice:
    """Bandwidth per grid point in working units."""
    pol = config.bandwidth
    M = grid.size
    xs = data.to_working(grid.points)
    if pol.kind == "value":
        h = pol.value / data.length_scale
        return BandwidthChoice(np.full(M, h), [bw.BandwidthSelection(h, bw.BwMethod.FIXED, {})])
    if pol.kind.startswith("rot"):
        sel = bw.rot_bandwidth(data.n, config.p, bw.RotPurpose(pol.kind), _scale_c(data, pol))
        return BandwidthChoice(np.full(M, sel.value), [sel])
    fallback = bw.rot_bandwidth(data.n, config.p, bw.RotPurpose.ESTIMATION_SMOOTH, bw.default_scale(data.x))

    def consts(m):
        try:
            return point_constants(data, xs[m], config)
        except (BiasUnavailable, NumericalError) as exc:
            return exc

    res = ordered_map(consts, range(M))
    if pol.kind == "mse":
        hs, sels, notes = np.empty(M), [], []
        for m, r in enumerate(res):
            try:
                if isinstance(r, Exception):
                    raise r
                s = bw.h_mse_point(r[0], r[1], data.n, config.p, config.nu)
            except (BiasUnavailable, BiasNearZero, NumericalError) as exc:
                s = replace(fallback, diagnostics={**fallback.diagnostics, "fallback_reason": str(exc)})
                notes.append(f"grid point {m}: MSE bandwidth unavailable ({exc}); using rot-smooth")
            hs[m] = s.value
            sels.append(s)
        return BandwidthChoice(hs, sels, notes)
    ok = [m for m, r in enumerate(res) if not isinstance(r, Exception)]
    notes = [f"grid point {m}: excluded from IMSE ({res[m]})" for m in range(M) if m not in ok]
    try:
        if not ok:
            raise BiasUnavailable("no grid point has bias and variance constants")
        sel = bw.h_imse(
            [res[m][0] for m in ok], [res[m][1] for m in ok], None, data.n, config.p, config.nu,
            arclengths=grid.arclengths[ok],
        )
    except (BiasUnavailable, BiasNearZero) as exc:
        sel = replace(fallback, diagnostics={**fallback.diagnostics, "fallback_reason": str(exc)})
        notes.append(f"IMSE bandwidth unavailable ({exc}); using rot-smooth")
    return BandwidthChoice(np.full(M, sel.value), [sel], notes)


@dataclass
class PointEstimate:
    index: int
    x_raw: np.ndarray
    h_working: float
    h_raw: float
    status: str = "ok"
    tau_hat: float | None = None
    tau_rbc: float | None = None
    se: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    n_eff0: int | None = None
    n_eff1: int | None = None
    band_low: float | None = None
    band_high: float | None = None

    @property
    def center(self) -> float | None:
        return self.tau_rbc if self.tau_rbc is not None else self.tau_hat


@dataclass
class CurveResult:
    points: list[PointEstimate]
    method: str
    covariance: np.ndarray | None
    ok_index: list[int]
    bandwidth: BandwidthChoice
    warnings: list[str] = field(default_factory=list)
    band: BandResult | None = None

    def estimates(self) -> np.ndarray:
        return np.array([np.nan if p.tau_hat is None else p.tau_hat for p in self.points])


def _raw_factor(data: Dataset, nu: MultiIndex) -> float:
    return float(data.scale[0] ** (-nu.nu1) * data.scale[1] ** (-nu.nu2))


def estimate_curve(
    data: Dataset,
    grid: EvalGrid,
    config: EstimatorConfig,
    h=None,
    with_covariance: bool = True,
) -> CurveResult:
    """Point estimates, standard errors and pointwise intervals on a raw-coordinate grid.

    ``h`` overrides bandwidth selection with working-unit values (scalar or per point).
    Failed grid points keep ``tau_hat = None`` and a status code.
    """
    if h is None:
        choice = choose_bandwidth(data, grid, config)
    else:
        hv = np.broadcast_to(np.asarray(h, dtype=float), (grid.size,)).copy()
        choice = BandwidthChoice(hv, [bw.BandwidthSelection(float(hv[0]), bw.BwMethod.FIXED, {})])
    xs = data.to_working(grid.points)
    factor = _raw_factor(data, config.nu)

    def one(m):
        pe = PointEstimate(m, np.asarray(grid.points[m], dtype=float), float(choice.h[m]), float(choice.h[m] * data.length_scale))
        try:
            f = _fit(data, xs[m], choice.h[m], config.p, config)
        except DegenerateFit as exc:
            pe.status = f"degenerate_{exc.side}" if exc.side else "degenerate"
            return pe, None
        pe.tau_hat = f.tau_hat * factor
        pe.n_eff0, pe.n_eff1 = f.n_eff0, f.n_eff1
        if not config.rbc:
            return pe, f
        try:
            fr = _fit(data, xs[m], choice.h[m], config.p + 1, config)
        except DegenerateFit:
            pe.status = "rbc_unavailable"
            return pe, None
        pe.tau_rbc = fr.tau_hat * factor
        return pe, fr

    pairs = ordered_map(one, range(grid.size))
    points = [p for p, _ in pairs]
    ok = [m for m, (_, f) in enumerate(pairs) if f is not None]
    cov = None
    if with_covariance and ok:
        c = covariance_from_fits([pairs[m][1] for m in ok], data.n)
        cov = c.omega * factor * factor
        z = normal_quantile(1.0 - config.alpha / 2.0)
        keep = []
        for j, m in enumerate(ok):
            var = cov[j, j]
            pe = points[m]
            if not var > 0:
                pe.status = "zero_variance"
                continue
            pe.se = math.sqrt(var)
            pe.ci_low = pe.center - z * pe.se
            pe.ci_high = pe.center + z * pe.se
            keep.append(j)
        if len(keep) < len(ok):
            cov = cov[np.ix_(keep, keep)]
            ok = [ok[j] for j in keep]
    return CurveResult(points, config.method, cov, ok, choice, list(choice.notes))


def add_bands(result: CurveResult, alpha: float, draws: int, seed: int) -> CurveResult:
    """Attach a uniform band over the successfully estimated grid points."""
    if result.covariance is None or not result.ok_index:
        raise NumericalError("no grid point has a usable estimate; cannot build a band")
    corr = corr_from_cov(result.covariance)
    q = sup_abs_gaussian_quantile(corr, alpha, draws, seed)
    ests = [result.points[m].center for m in result.ok_index]
    ses = [result.points[m].se for m in result.ok_index]
    band = confidence_band(ests, ses, q, alpha, draws, seed)
    for j, m in enumerate(result.ok_index):
        result.points[m].band_low = band.lower[j]
        result.points[m].band_high = band.upper[j]
    result.band = band
    return result
