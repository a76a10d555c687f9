"""Datasets, standardization and CSV input."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geometry import BoundaryPolyline, classify_points


@dataclass(frozen=True)
class Dataset:
    """Scores, outcomes and treatment indicators in working coordinates.

    Working coordinates are ``(raw - loc) / scale`` per dimension; with
    standardization off, ``loc = 0`` and ``scale = 1``.  ``boundary`` when
    present is expressed in the same working coordinates.
    """

    x: np.ndarray
    y: np.ndarray
    treated: np.ndarray
    loc: np.ndarray = field(default_factory=lambda: np.zeros(2))
    scale: np.ndarray = field(default_factory=lambda: np.ones(2))
    boundary: BoundaryPolyline | None = None

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[1] != 2:
            raise DataError(f"scores must have shape (n, 2), got {self.x.shape}")
        n = self.x.shape[0]
        if n < 1:
            raise DataError("dataset is empty")
        if self.y.shape != (n,) or self.treated.shape != (n,):
            raise DataError("x, y and treated lengths differ")

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def length_scale(self) -> float:
        """Geometric mean of the per-dimension scales; converts bandwidths."""
        return float(math.sqrt(self.scale[0] * self.scale[1]))

    def to_working(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.loc) / self.scale

    def to_raw(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) * self.scale + self.loc

    def with_y(self, y) -> "Dataset":
        return Dataset(self.x, np.asarray(y, dtype=float), self.treated, self.loc, self.scale, self.boundary)

    @classmethod
    def from_arrays(
        cls,
        x,
        y,
        treated=None,
        boundary: BoundaryPolyline | None = None,
        standardize: bool = False,
        allow_t_override: bool = False,
    ) -> "Dataset":
        """Build a dataset from raw arrays.

        Treatment is derived from ``boundary`` when ``treated`` is omitted and
        checked against it when both are given.
        """
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        if x.ndim != 2 or x.shape[1] != 2:
            raise DataError(f"scores must have shape (n, 2), got {x.shape}")
        for name, arr in (("x", x), ("y", y)):
            if not np.all(np.isfinite(arr)):
                row = int(np.argwhere(~np.isfinite(arr))[0, 0])
                raise DataError(f"non-finite value in {name} at row {row + 1}")
        if treated is None and boundary is None:
            raise DataError("need either treatment indicators or a boundary")
        geo = classify_points(x, boundary) if boundary is not None else None
        if treated is None:
            t = geo
        else:
            t = np.asarray(treated).astype(bool)
            if geo is not None:
                bad = np.flatnonzero(t != geo)
                if bad.size:
                    msg = (
                        f"{bad.size} treatment indicators disagree with the boundary "
                        f"(first at row {int(bad[0]) + 1})"
                    )
                    if not allow_t_override:
                        raise DataError(msg)
                    warnings.warn(msg + "; trusting the t column", stacklevel=2)
        loc, scale = np.zeros(2), np.ones(2)
        if standardize:
            if x.shape[0] < 2:
                raise DataError("standardization needs at least 2 observations")
            loc = x.mean(axis=0)
            scale = x.std(axis=0, ddof=1)
            if np.any(scale <= 0):
                raise DataError("a score dimension has zero standard deviation")
        z = (x - loc) / scale
        b = boundary.transformed(loc, scale) if boundary is not None else None
        return cls(z, y, t, loc, scale, b)


def _read_rows(path, required: tuple[str, ...], optional: tuple[str, ...] = ()):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [c for c in required + optional if c in header]
        pos = [header.index(c) for c in cols]
        out = {c: [] for c in cols}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise DataError(f"{path}: row {row_no} (line {row_no + 1}) has {len(row)} fields")
            for c, j in zip(cols, pos):
                cell = row[j].strip()
                try:
                    val = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {row_no} (line {row_no + 1}) column {c}: cannot parse {cell!r}") from None
                if not math.isfinite(val):
                    raise DataError(f"{path}: row {row_no} (line {row_no + 1}) column {c}: non-finite value {cell!r}")
                out[c].append(val)
    return {c: np.asarray(v, dtype=float) for c, v in out.items()}


def load_boundary(path) -> BoundaryPolyline:
    """Read a boundary CSV with header ``x1,x2``; row order is traversal order."""
    cols = _read_rows(path, ("x1", "x2"))
    return BoundaryPolyline.from_vertices(np.column_stack([cols["x1"], cols["x2"]]))


def load_points(path) -> np.ndarray:
    cols = _read_rows(path, ("x1", "x2"))
    return np.column_stack([cols["x1"], cols["x2"]])


def load_dataset(
    path,
    boundary: BoundaryPolyline,
    standardize: bool = True,
    allow_t_override: bool = False,
) -> Dataset:
    """Read a data CSV with header ``x1,x2,y`` and an optional ``t`` column."""
    cols = _read_rows(path, ("x1", "x2", "y"), ("t",))
    if cols["y"].size == 0:
        raise DataError(f"{path} has no data rows")
    t = None
    if "t" in cols:
        t = cols["t"]
        bad = np.flatnonzero((t != 0) & (t != 1))
        if bad.size:
            raise DataError(f"{path}: row {int(bad[0]) + 1}: t must be 0 or 1")
    return Dataset.from_arrays(
        np.column_stack([cols["x1"], cols["x2"]]),
        cols["y"],
        treated=t,
        boundary=boundary,
        standardize=standardize,
        allow_t_override=allow_t_override,
    )
