"""Polynomial bases, multi-indices and compactly supported kernels.

Bivariate monomials are ordered graded-lexicographically:
``(0,0); (1,0),(0,1); (2,0),(1,1),(0,2); ...``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True, order=True)
class MultiIndex:
    nu1: int
    nu2: int

    def __post_init__(self):
        if self.nu1 < 0 or self.nu2 < 0 or int(self.nu1) != self.nu1 or int(self.nu2) != self.nu2:
            raise ConfigError(f"multi-index entries must be nonnegative integers, got ({self.nu1}, {self.nu2})")

    @property
    def order(self) -> int:
        return self.nu1 + self.nu2

    @property
    def factorial(self) -> int:
        return math.factorial(self.nu1) * math.factorial(self.nu2)

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        try:
            a, b = (int(t) for t in text.split(","))
        except ValueError as exc:
            raise ConfigError(f"cannot parse multi-index {text!r}; expected 'k1,k2'") from exc
        return cls(a, b)


ZERO = MultiIndex(0, 0)


def dim_biv(p: int) -> int:
    return (p + 1) * (p + 2) // 2


def dim_uni(p: int) -> int:
    return p + 1


def _check_order(p) -> int:
    if int(p) != p or p < 0:
        raise ConfigError(f"polynomial order must be a nonnegative integer, got {p}")
    return int(p)


@lru_cache(maxsize=None)
def _indices(p: int) -> tuple[MultiIndex, ...]:
    return tuple(MultiIndex(d - j, j) for d in range(p + 1) for j in range(d + 1))


def enumerate_multi_indices(p: int) -> list[MultiIndex]:
    return list(_indices(_check_order(p)))


def eval_basis_biv(u, p: int) -> np.ndarray:
    """Monomials ``u1^k1 u2^k2`` in graded-lex order.

    ``u`` of shape ``(2,)`` gives a vector; ``(n, 2)`` gives an ``(n, dim)`` matrix.
    """
    p = _check_order(p)
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    n = u.shape[0]
    pw1 = np.ones((n, p + 1))
    pw2 = np.ones((n, p + 1))
    for k in range(1, p + 1):
        pw1[:, k] = pw1[:, k - 1] * u[:, 0]
        pw2[:, k] = pw2[:, k - 1] * u[:, 1]
    idx = _indices(p)
    out = np.empty((n, len(idx)))
    for j, m in enumerate(idx):
        out[:, j] = pw1[:, m.nu1] * pw2[:, m.nu2]
    return out[0] if single else out


def eval_basis_uni(r, p: int) -> np.ndarray:
    """Powers ``(1, r, ..., r^p)``; a matrix for array input."""
    p = _check_order(p)
    r = np.asarray(r, dtype=float)
    out = np.ones(r.shape + (p + 1,))
    for k in range(1, p + 1):
        out[..., k] = out[..., k - 1] * r
    return out


def selector(nu: MultiIndex, p: int) -> np.ndarray:
    """Unit vector picking the coefficient of ``u^nu`` from a graded-lex basis."""
    p = _check_order(p)
    if nu.order > p:
        raise ConfigError(f"|nu| = {nu.order} exceeds polynomial order {p}")
    e = np.zeros(dim_biv(p))
    e[_indices(p).index(nu)] = 1.0
    return e


def position(nu: MultiIndex, p: int) -> int:
    return int(np.argmax(selector(nu, p)))


class KernelFamily(str, enum.Enum):
    UNIFORM = "uniform"
    TRIANGULAR = "triangular"
    EPANECHNIKOV = "epanechnikov"


class KernelShape(str, enum.Enum):
    PRODUCT = "product"
    RADIAL = "radial"


class KernelDim(str, enum.Enum):
    UNI = "uni"
    BIV = "biv"


_ALIASES = {
    "uni": KernelFamily.UNIFORM,
    "uniform": KernelFamily.UNIFORM,
    "tri": KernelFamily.TRIANGULAR,
    "triangular": KernelFamily.TRIANGULAR,
    "epa": KernelFamily.EPANECHNIKOV,
    "epanechnikov": KernelFamily.EPANECHNIKOV,
}


def kernel_profile(family: KernelFamily, u) -> np.ndarray:
    """One-dimensional kernel ``k(u)`` on ``[-1, 1]``."""
    a = np.abs(np.asarray(u, dtype=float))
    if family is KernelFamily.UNIFORM:
        return (a <= 1.0).astype(float)
    if family is KernelFamily.TRIANGULAR:
        return np.clip(1.0 - a, 0.0, None)
    return 0.75 * np.clip(1.0 - a * a, 0.0, None)


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily = KernelFamily.TRIANGULAR
    shape: KernelShape = KernelShape.PRODUCT
    dimension: KernelDim = KernelDim.BIV

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))
        object.__setattr__(self, "shape", KernelShape(self.shape))
        object.__setattr__(self, "dimension", KernelDim(self.dimension))

    def univariate(self) -> "KernelSpec":
        return KernelSpec(self.family, self.shape, KernelDim.UNI)

    def bivariate(self, shape: KernelShape | str | None = None) -> "KernelSpec":
        return KernelSpec(self.family, self.shape if shape is None else shape, KernelDim.BIV)

    def weights(self, u) -> np.ndarray:
        """Unscaled kernel ``k(u)`` or ``K(u)`` at already-scaled arguments."""
        if self.dimension is KernelDim.UNI:
            return kernel_profile(self.family, u)
        u = np.asarray(u, dtype=float)
        if self.shape is KernelShape.PRODUCT:
            return kernel_profile(self.family, u[..., 0]) * kernel_profile(self.family, u[..., 1])
        return kernel_profile(self.family, np.hypot(u[..., 0], u[..., 1]))

    def support_radius(self) -> float:
        """Radius of the smallest disk containing the support."""
        if self.dimension is KernelDim.BIV and self.shape is KernelShape.PRODUCT:
            return math.sqrt(2.0)
        return 1.0


def parse_family(name) -> KernelFamily:
    if isinstance(name, KernelFamily):
        return name
    try:
        return _ALIASES[str(name).lower()]
    except KeyError:
        raise ConfigError(f"unknown kernel family {name!r}") from None


def eval_kernel(spec: KernelSpec, u, h: float, x=None) -> np.ndarray | float:
    """Scaled kernel weight, divided by ``h**2`` for both dimensions.

    For a univariate spec ``u`` is a signed or unsigned distance score and the
    result is ``k(u/h)/h^2``.  For a bivariate spec ``u`` holds sample
    locations and ``x`` the evaluation point (default origin), giving
    ``K((u - x)/h)/h^2``.
    """
    if not (h > 0 and math.isfinite(h)):
        raise ConfigError(f"bandwidth must be positive and finite, got {h}")
    u = np.asarray(u, dtype=float)
    if spec.dimension is KernelDim.BIV and x is not None:
        u = u - np.asarray(x, dtype=float)
    out = spec.weights(u / h) / (h * h)
    return float(out) if np.ndim(out) == 0 else out
