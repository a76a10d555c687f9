"""Plug-in and rule-of-thumb bandwidths."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import ZERO, MultiIndex
from .errors import BiasNearZero, ConfigError

BIAS_TOL = 1e-12


class BwMethod(str, enum.Enum):
    MSE_POINT = "mse"
    IMSE = "imse"
    ROT_ESTIMATION = "rot-est-kink"
    ROT_INFERENCE = "rot-inf-kink"
    ROT_SMOOTH = "rot-smooth"
    FIXED = "value"


class RotPurpose(str, enum.Enum):
    ESTIMATION_KINK = "rot-est-kink"
    INFERENCE_KINK = "rot-inf-kink"
    ESTIMATION_SMOOTH = "rot-smooth"


_ROT_METHOD = {
    RotPurpose.ESTIMATION_KINK: BwMethod.ROT_ESTIMATION,
    RotPurpose.INFERENCE_KINK: BwMethod.ROT_INFERENCE,
    RotPurpose.ESTIMATION_SMOOTH: BwMethod.ROT_SMOOTH,
}


@dataclass(frozen=True)
class BandwidthSelection:
    """A bandwidth and the quantities that produced it."""

    value: float
    method: BwMethod
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ConfigError(f"bandwidth must be positive and finite, got {self.value}")


def _exponent(p: int, nu: MultiIndex) -> tuple[float, float]:
    if nu.order > p:
        raise ConfigError(f"|nu| = {nu.order} exceeds p = {p}")
    return 2.0 + 2.0 * nu.order, 2.0 * p + 2.0 - 2.0 * nu.order


def h_mse_point(b_hat: float, v_hat: float, n: int, p: int, nu: MultiIndex = ZERO) -> BandwidthSelection:
    """Minimiser of ``h^{2(p+1-|nu|)} B^2 + V / (n h^{2+2|nu|})``.

    Raises
    ------
    BiasNearZero
        If ``|b_hat| < 1e-12 sqrt(v_hat)``.
    """
    if not v_hat > 0:
        raise ConfigError(f"variance constant must be positive, got {v_hat}")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if not abs(b_hat) >= BIAS_TOL * math.sqrt(v_hat):
        raise BiasNearZero(f"|B| = {abs(b_hat):.3g} is negligible relative to sqrt(V) = {math.sqrt(v_hat):.3g}")
    a, c = _exponent(p, nu)
    h = (a * v_hat / (c * n * b_hat * b_hat)) ** (1.0 / (2 * p + 4))
    return BandwidthSelection(h, BwMethod.MSE_POINT, {"B": b_hat, "V": v_hat, "n": n, "p": p, "nu": [nu.nu1, nu.nu2]})


def _trapezoid_weights(arclengths) -> np.ndarray:
    s = np.asarray(arclengths, dtype=float)
    if s.size == 1:
        return np.ones(1)
    d = np.diff(s)
    q = np.zeros(s.size)
    q[:-1] += d / 2
    q[1:] += d / 2
    return q


def h_imse(
    grid_b,
    grid_v,
    weights=None,
    n: int = 1,
    p: int = 1,
    nu: MultiIndex = ZERO,
    arclengths=None,
) -> BandwidthSelection:
    """Integrated-MSE bandwidth with trapezoid integrals along the boundary.

    ``arclengths`` locate the grid points; equal spacing is assumed when omitted.
    """
    b = np.asarray(grid_b, dtype=float)
    v = np.asarray(grid_v, dtype=float)
    w = np.ones_like(b) if weights is None else np.asarray(weights, dtype=float)
    if not (b.shape == v.shape == w.shape) or b.ndim != 1 or b.size == 0:
        raise ConfigError("grid_b, grid_v and weights must be equal-length vectors")
    if np.any(w < 0) or not np.any(w > 0):
        raise ConfigError("IMSE weights must be nonnegative and not all zero")
    if np.any(v <= 0):
        raise ConfigError("variance constants must be positive")
    s = np.arange(b.size, dtype=float) if arclengths is None else np.asarray(arclengths, dtype=float)
    q = _trapezoid_weights(s) * w
    if not np.any(q > 0):
        q = w
    iv = float(q @ v)
    ib = float(q @ (b * b))
    if not ib >= (BIAS_TOL ** 2) * iv:
        raise BiasNearZero(f"integrated squared bias {ib:.3g} negligible relative to integrated variance {iv:.3g}")
    a, c = _exponent(p, nu)
    h = (a * iv / (c * n * ib)) ** (1.0 / (2 * p + 4))
    return BandwidthSelection(h, BwMethod.IMSE, {"int_B2": ib, "int_V": iv, "n": n, "p": p, "nu": [nu.nu1, nu.nu2], "M": int(b.size)})


def rot_exponent(purpose: RotPurpose, p: int) -> float:
    purpose = RotPurpose(purpose)
    if purpose is RotPurpose.ESTIMATION_KINK:
        return 0.25
    if purpose is RotPurpose.INFERENCE_KINK:
        return 1.0 / 3.0
    return 1.0 / (4.0 + 2.0 * p)


def rot_bandwidth(n: int, p: int, purpose: RotPurpose, scale_c: float = 1.0) -> BandwidthSelection:
    """``scale_c * n^{-e}`` with ``e`` set by the purpose of the bandwidth."""
    if n < 2:
        raise ConfigError(f"rule-of-thumb bandwidth needs n >= 2, got {n}")
    if not scale_c > 0:
        raise ConfigError(f"scale constant must be positive, got {scale_c}")
    purpose = RotPurpose(purpose)
    e = rot_exponent(purpose, p)
    return BandwidthSelection(scale_c * float(n) ** (-e), _ROT_METHOD[purpose], {"n": n, "p": p, "c": scale_c, "exponent": e})


def default_scale(x) -> float:
    """Geometric mean of per-dimension sample standard deviations."""
    x = np.asarray(x, dtype=float)
    sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.ones(2)
    return float(math.sqrt(sd[0] * sd[1]))
