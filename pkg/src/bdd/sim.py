"""Simulation designs, the kink-bias oracle and the Monte Carlo harness.

The kink design draws scores uniformly on ``[-2, 2]^2`` and treats the
upper-left quadrant ``{x1 <= 0, x2 >= 0}``, with ``mu_0 = 0`` and
``mu_1 = x2``.  For the distance estimator the conditional mean of ``Y``
given ``D = r`` is available in closed form, so its population bias at a
boundary point ``s`` away from the kink reduces to one-dimensional radial
integrals.  Those integrals are written for the reflected quadrant
``{x1 >= 0, x2 >= 0}`` with the evaluation point at ``(s, 0)``; reflecting
``x1`` maps it back onto the point ``(-s, 0)`` of the kink design.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import ZERO, KernelDim, KernelFamily, KernelSpec, MultiIndex, eval_basis_uni
from .data import Dataset
from .errors import ConfigError, ExperimentError, NumericalError
from .geometry import BoundaryPolyline, EvalGrid, classify_points, grid_from_points, make_grid
from .parallel import ordered_map
from .pipeline import BandwidthPolicy, EstimatorConfig, add_bands, estimate_curve
from .serialize import dumps_json, fmt_real

_MASK64 = (1 << 64) - 1


def philox(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed on ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & _MASK64, int(stream) & _MASK64]))


def derived_seed(*words: int) -> int:
    """A 64-bit seed derived deterministically from integers."""
    return int(np.random.SeedSequence([int(w) & _MASK64 for w in words]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- designs


def _poly_eval(coefs: dict, x: np.ndarray, nu: MultiIndex = ZERO) -> np.ndarray:
    """Evaluate ``d^nu sum_k c_k x^k`` at points ``x``."""
    out = np.zeros(x.shape[0])
    for (k1, k2), c in coefs.items():
        if k1 < nu.nu1 or k2 < nu.nu2:
            continue
        f = math.perm(k1, nu.nu1) * math.perm(k2, nu.nu2)
        out += c * f * x[:, 0] ** (k1 - nu.nu1) * x[:, 1] ** (k2 - nu.nu2)
    return out


def _coefs(spec) -> dict:
    """Polynomial coefficients from ``{(k1, k2): c}`` or ``{"k1,k2": c}``."""
    out = {}
    for k, c in dict(spec).items():
        if isinstance(k, str):
            a, b = (int(t) for t in k.split(","))
        else:
            a, b = (int(t) for t in k)
        out[(a, b)] = float(c)
    return out


L_BOUNDARY = ((-2.0, 0.0), (0.0, 0.0), (0.0, 2.0))


@dataclass(frozen=True)
class PolynomialDgp:
    """Uniform scores on a box, polynomial means, Gaussian noise.

    Treatment follows ``boundary`` (treated on its left).  ``mu0`` and
    ``mu1`` map exponents ``(k1, k2)`` to coefficients.
    """

    boundary: tuple = L_BOUNDARY
    mu0: dict = field(default_factory=dict)
    mu1: dict = field(default_factory=dict)
    sigma: float = 1.0
    box: tuple = (-2.0, 2.0)
    quadrant: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mu0", _coefs(self.mu0))
        object.__setattr__(self, "mu1", _coefs(self.mu1))
        object.__setattr__(self, "boundary", tuple(tuple(map(float, v)) for v in self.boundary))
        if not self.sigma >= 0:
            raise ConfigError(f"noise sd must be nonnegative, got {self.sigma}")
        if not self.box[0] < self.box[1]:
            raise ConfigError(f"invalid box {self.box}")

    @property
    def polyline(self) -> BoundaryPolyline:
        return BoundaryPolyline.from_vertices(self.boundary)

    def treated(self, x: np.ndarray) -> np.ndarray:
        if self.quadrant:
            return (x[:, 0] <= 0) & (x[:, 1] >= 0)
        return classify_points(x, self.polyline)

    def sample(self, n: int, seed: int, rep: int = 0) -> Dataset:
        if n < 1:
            raise ConfigError(f"n must be >= 1, got {n}")
        g = philox(seed, rep)
        x = g.uniform(self.box[0], self.box[1], size=(n, 2))
        eps = g.standard_normal(n)
        t = self.treated(x)
        y = np.where(t, _poly_eval(self.mu1, x), _poly_eval(self.mu0, x)) + self.sigma * eps
        return Dataset(x, y, t, boundary=self.polyline)

    def tau(self, points, nu: MultiIndex = ZERO) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return _poly_eval(self.mu1, p, nu) - _poly_eval(self.mu0, p, nu)


@dataclass(frozen=True)
class KinkDgpSpec:
    n: int
    seed: int

    def dgp(self) -> PolynomialDgp:
        return PolynomialDgp(L_BOUNDARY, {}, {(0, 1): 1.0}, 1.0, (-2.0, 2.0), quadrant=True)


def sample_kink_dgp(spec: KinkDgpSpec, rep: int = 0) -> Dataset:
    """One draw of the kink design; deterministic in ``(spec.seed, rep)``."""
    return spec.dgp().sample(spec.n, spec.seed, rep)


PRESETS = {
    "kink": lambda: KinkDgpSpec(1, 0).dgp(),
    "linear": lambda: PolynomialDgp(
        L_BOUNDARY,
        {(0, 0): 0.5, (1, 0): 1.0, (0, 1): -0.5},
        {(0, 0): 1.5, (1, 0): 0.5, (0, 1): 1.0},
        1.0,
    ),
    "quadratic": lambda: PolynomialDgp(
        ((-2.0, 0.0), (2.0, 0.0)),
        {(1, 0): 0.5},
        {(0, 0): 1.0, (1, 0): 1.0, (2, 0): 2.0},
        0.1,
    ),
}


def make_dgp(name: str = "kink", **overrides) -> PolynomialDgp:
    if name not in PRESETS:
        raise ConfigError(f"unknown design {name!r}; expected one of {', '.join(PRESETS)}")
    base = PRESETS[name]()
    if not overrides:
        return base
    fields = asdict(base)
    unknown = set(overrides) - set(fields)
    if unknown:
        raise ConfigError(f"unknown design parameter(s): {', '.join(sorted(unknown))}")
    fields.update(overrides)
    return PolynomialDgp(**fields)


# ---------------------------------------------------------------- oracle


def theta_distance_mean(r, s: float):
    """Mean of ``x2`` over treated points at distance ``r`` from ``(s, 0)``.

    Reflected quadrant convention.  For ``r <= s`` the circle stays inside
    the half-plane and the arc average is ``2r/pi``; for ``r > s`` the arc is
    cut by the vertical edge and the average is ``(r + s)/(pi - arccos(s/r))``.
    """
    if s < 0:
        raise ConfigError(f"s must be nonnegative, got {s}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ConfigError("r must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(r > 0, s / np.where(r > 0, r, 1.0), 1.0)
        far = (r + s) / (np.pi - np.arccos(np.minimum(ratio, 1.0)))
    out = np.where(r <= s, 2.0 * r / np.pi, far)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts for the radial and angular rules.

    ``angular="exact"`` uses the closed-form arc integrals; ``"trapezoid"``
    integrates the angle numerically with ``angular_nodes`` panels.
    """

    radial_nodes: int = 2000
    angular_nodes: int = 2000
    angular: str = "exact"

    def __post_init__(self):
        if self.radial_nodes < 64 or self.angular_nodes < 64:
            raise ConfigError("quadrature node counts must be >= 64")
        if self.angular not in ("exact", "trapezoid"):
            raise ConfigError(f"angular rule must be 'exact' or 'trapezoid', got {self.angular!r}")

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.radial_nodes, 2 * self.angular_nodes, self.angular)


def _trapezoid(a: float, b: float, n: int):
    t = np.linspace(a, b, n + 1)
    w = np.full(n + 1, (b - a) / n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return t, w


def _arc_and_height(u: np.ndarray, s: float, quad: QuadratureSpec):
    """Arc length (per unit radius) of the treated part and the integral of ``sin``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(u > s, s / np.where(u > 0, u, 1.0), 1.0)
    theta = np.where(u > s, np.pi - np.arccos(np.minimum(ratio, 1.0)), np.pi)
    if quad.angular == "exact":
        return theta, 1.0 - np.cos(theta)
    phi, wphi = _trapezoid(0.0, 1.0, quad.angular_nodes)
    height = theta * (np.sin(np.outer(theta, phi)) @ wphi)
    return theta, height


def _scaled_moments(s: float, p: int, kernel: KernelSpec, quad: QuadratureSpec):
    """``A(s)`` and ``B(s)`` at unit bandwidth on the kernel support ``[0, 1]``."""
    N = quad.radial_nodes
    A = np.zeros((p + 1, p + 1))
    B = np.zeros(p + 1)
    pieces = []
    s1 = min(s, 1.0)
    if s1 > 0:
        pieces.append(_trapezoid(0.0, s1, N))
    if s1 < 1.0:
        # u = s1 + (1 - s1) v^2 smooths the square-root edge of arccos(s/u) at u = s
        v, wv = _trapezoid(0.0, 1.0, N)
        pieces.append((s1 + (1.0 - s1) * v * v, wv * 2.0 * (1.0 - s1) * v))
    for u, w in pieces:
        k = kernel.weights(u)
        arc, height = _arc_and_height(u, s, quad)
        R = eval_basis_uni(u, p)
        A += (R * (w * k * u * arc)[:, None]).T @ R
        B += R.T @ (w * k * u * u * height)
    return A, B


def population_bias_kink(
    h: float,
    s: float,
    p: int = 1,
    kernel_uni: KernelSpec | None = None,
    quad: QuadratureSpec | None = None,
) -> float:
    """Population bias of the distance estimator at distance ``s`` from the kink.

    Equals ``h e_1^T A(s/h)^{-1} B(s/h)``; the true effect at the point is 0.
    """
    if not h > 0:
        raise ConfigError(f"h must be positive, got {h}")
    if not s >= 0:
        raise ConfigError(f"s must be nonnegative, got {s}")
    kernel_uni = kernel_uni or KernelSpec(KernelFamily.TRIANGULAR, dimension=KernelDim.UNI)
    if kernel_uni.dimension is not KernelDim.UNI:
        raise ConfigError("population bias needs a univariate kernel")
    quad = quad or QuadratureSpec()
    A, B = _scaled_moments(s / h, int(p), kernel_uni, quad)
    try:
        coef = np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        raise NumericalError("quadrature moment matrix is singular") from None
    return h * float(coef[0])


def population_bias_slope(
    h: float = 1.0,
    step: float = 1e-4,
    p: int = 1,
    kernel_uni: KernelSpec | None = None,
    quad: QuadratureSpec | None = None,
) -> float:
    """Derivative of the population bias in ``s`` at the kink.

    The bias is only defined for ``s >= 0``, so this is the second-order
    one-sided difference ``(-3 b(0) + 4 b(d) - b(2d)) / (2d)``, the central
    difference about ``d`` with its leading error term removed.
    """
    b = [population_bias_kink(h, k * step, p, kernel_uni, quad) for k in (0, 1, 2)]
    return (-3.0 * b[0] + 4.0 * b[1] - b[2]) / (2.0 * step)


# ---------------------------------------------------------------- harness


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment.

    ``grid_points`` (raw coordinates on the design boundary) takes priority
    over ``grid_size``.  ``dgp_params`` overrides fields of the preset design.
    """

    dgp: str = "kink"
    n: int = 1000
    reps: int = 100
    seed: int = 0
    method: str = "biv"
    p: int = 1
    kernel: str = "triangular"
    shape: str = "product"
    bandwidth: str = "rot-est-kink"
    alpha: float = 0.05
    grid_size: int = 20
    grid_points: tuple | None = None
    include_vertices: bool = False
    rbc: bool = False
    smooth_boundary: bool = False
    bands: bool = False
    draws: int = 3000
    dgp_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 2:
            raise ConfigError(f"reps must be >= 2, got {self.reps}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")

    @classmethod
    def from_mapping(cls, m: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(m) - known
        if unknown:
            raise ConfigError(f"unknown experiment key(s): {', '.join(sorted(unknown))}")
        m = dict(m)
        if m.get("grid_points") is not None:
            m["grid_points"] = tuple(tuple(map(float, p)) for p in m["grid_points"])
        return cls(**m)

    def to_mapping(self) -> dict:
        d = asdict(self)
        if d["grid_points"] is not None:
            d["grid_points"] = [list(p) for p in d["grid_points"]]
        return d


@dataclass
class PointSummary:
    index: int
    x1: float
    x2: float
    truth: float
    n_ok: int
    bias: float
    bias_se: float
    variance: float
    rmse: float
    coverage: float
    coverage_se: float
    mean_se: float


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    points: list[PointSummary]
    reps: int
    band_coverage: float | None
    band_coverage_se: float | None
    band_reps: int
    failures: dict

    def to_json(self) -> str:
        return dumps_json(
            {
                "config": self.config.to_mapping(),
                "reps": self.reps,
                "band_coverage": self.band_coverage,
                "band_coverage_se": self.band_coverage_se,
                "band_reps": self.band_reps,
                "failures": self.failures,
                "points": [asdict(p) for p in self.points],
            }
        )

    def to_csv(self) -> str:
        cols = list(PointSummary.__dataclass_fields__)
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for p in self.points:
            w.writerow([fmt_real(getattr(p, c)) for c in cols])
        return buf.getvalue()


def _experiment_grid(cfg: ExperimentConfig, dgp: PolynomialDgp) -> EvalGrid:
    line = dgp.polyline
    if cfg.grid_points is not None:
        return grid_from_points(np.asarray(cfg.grid_points, dtype=float), line)
    return make_grid(line, cfg.grid_size, cfg.include_vertices)


def _mc_se(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)


def mc_experiment(cfg: ExperimentConfig) -> ExperimentSummary:
    """Run ``cfg.reps`` replications and aggregate per grid point.

    Replication ``r`` draws its data from the stream ``(seed, r)`` and, when
    bands are requested, its Gaussian draws from a seed derived from
    ``(seed, r)``; results are assembled in replication order.

    Raises
    ------
    ExperimentError
        If some grid point fails in more than half of the replications.
    """
    dgp = make_dgp(cfg.dgp, **cfg.dgp_params)
    grid = _experiment_grid(cfg, dgp)
    est = EstimatorConfig(
        method=cfg.method, p=cfg.p, kernel=cfg.kernel, shape=cfg.shape,
        bandwidth=BandwidthPolicy.parse(cfg.bandwidth), alpha=cfg.alpha,
        rbc=cfg.rbc, smooth_boundary=cfg.smooth_boundary,
    )
    truth = dgp.tau(grid.points)
    M = grid.size

    def one(r: int):
        data = dgp.sample(cfg.n, cfg.seed, r)
        res = estimate_curve(data, grid, est)
        tau = np.full(M, np.nan)
        se = np.full(M, np.nan)
        cover = np.full(M, np.nan)
        status = [p.status for p in res.points]
        for m in res.ok_index:
            pt = res.points[m]
            tau[m] = pt.tau_hat
            se[m] = pt.se
            cover[m] = float(pt.ci_low <= truth[m] <= pt.ci_high)
        band = None
        if cfg.bands and res.ok_index:
            add_bands(res, cfg.alpha, cfg.draws, derived_seed(cfg.seed, r, 1))
            band = float(all(res.points[m].band_low <= truth[m] <= res.points[m].band_high for m in res.ok_index))
        return tau, se, cover, status, band

    out = ordered_map(one, range(cfg.reps))
    tau = np.array([o[0] for o in out])
    se = np.array([o[1] for o in out])
    cover = np.array([o[2] for o in out])
    failures = {}
    for m in range(M):
        reasons = {}
        for o in out:
            if o[3][m] != "ok":
                reasons[o[3][m]] = reasons.get(o[3][m], 0) + 1
        if reasons:
            failures[str(m)] = reasons
    bad = [m for m in range(M) if np.sum(np.isnan(tau[:, m])) > cfg.reps / 2]
    if bad:
        raise ExperimentError(
            f"estimator failed in more than half of the replications at grid point(s) {bad}",
            failures,
        )
    points = []
    for m in range(M):
        ok = ~np.isnan(tau[:, m])
        k = int(ok.sum())
        err = tau[ok, m] - truth[m]
        cov_m = float(np.mean(cover[ok, m]))
        var = float(np.var(tau[ok, m], ddof=1)) if k > 1 else float("nan")
        points.append(
            PointSummary(
                m, float(grid.points[m, 0]), float(grid.points[m, 1]), float(truth[m]), k,
                float(err.mean()), math.sqrt(var / k) if k > 1 else float("nan"), var,
                float(math.sqrt(np.mean(err * err))), cov_m, _mc_se(cov_m, k),
                float(np.mean(se[ok, m])),
            )
        )
    bands = [o[4] for o in out if o[4] is not None]
    bc = float(np.mean(bands)) if bands else None
    return ExperimentSummary(cfg, points, cfg.reps, bc, _mc_se(bc, len(bands)) if bands else None, len(bands), failures)


def load_experiment_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read experiment config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"experiment config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("experiment config must be a JSON object")
    return ExperimentConfig.from_mapping(raw)
