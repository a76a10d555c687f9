"""Boundary polylines, region labels, distances and evaluation grids.

The treated region is the set of points strictly to the left of the directed
polyline, plus the polyline itself.  Open polylines are extended at both ends
by rays along the end segments and closed by a large counter-clockwise arc,
so the left/right split is a winding-number question.  A polyline whose first
and last vertices coincide is treated as a closed loop.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

ON_BOUNDARY_TOL = 1e-12
_ARC_STEP = math.pi / 16


class RegionLabel(enum.IntEnum):
    CONTROL = 0
    TREATED = 1


@dataclass(frozen=True)
class Point2:
    x1: float
    x2: float

    def __post_init__(self):
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise DataError(f"non-finite point ({self.x1}, {self.x2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=float)


@dataclass(frozen=True)
class MetricSpec:
    """Euclidean distance, optionally with positive per-dimension weights.

    ``d(z, x) = sqrt(w1 (z1 - x1)^2 + w2 (z2 - x2)^2)``.
    """

    weights: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) != 2 or not all(math.isfinite(v) and v > 0 for v in w):
            raise ConfigError(f"metric weights must be two positive reals, got {self.weights}")
        object.__setattr__(self, "weights", w)

    @property
    def is_euclidean(self) -> bool:
        return self.weights == (1.0, 1.0)


EUCLIDEAN = MetricSpec()


def _as_points(a) -> np.ndarray:
    arr = np.asarray(a.as_array() if isinstance(a, Point2) else a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError(f"expected points with 2 coordinates, got shape {arr.shape}")
    return arr


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_seg(p1, p2, q1))
        or (o2 == 0 and on_seg(p1, p2, q2))
        or (o3 == 0 and on_seg(q1, q2, p1))
        or (o4 == 0 and on_seg(q1, q2, p2))
    )


@dataclass(frozen=True)
class BoundaryPolyline:
    """Directed polyline; the treated region lies on its left.

    Use :meth:`from_vertices` to build one; it validates the vertex list and
    precomputes the cumulative arclength.
    """

    vertices: np.ndarray
    cumulative_arclength: np.ndarray = field(repr=False)

    @classmethod
    def from_vertices(cls, vertices) -> "BoundaryPolyline":
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DataError(f"boundary vertices must have shape (k, 2), got {v.shape}")
        if v.shape[0] < 2:
            raise DataError("boundary needs at least 2 vertices")
        if not np.all(np.isfinite(v)):
            bad = int(np.argwhere(~np.isfinite(v))[0, 0])
            raise DataError(f"non-finite boundary vertex at position {bad}")
        seg = np.hypot(*np.diff(v, axis=0).T)
        if np.any(seg <= 0):
            bad = int(np.argmax(seg <= 0))
            raise DataError(f"boundary vertices {bad} and {bad + 1} coincide")
        closed = v.shape[0] >= 4 and np.array_equal(v[0], v[-1])
        nseg = v.shape[0] - 1
        for i in range(nseg):
            for j in range(i + 2, nseg):
                if closed and i == 0 and j == nseg - 1:
                    continue
                if _segments_intersect(v[i], v[i + 1], v[j], v[j + 1]):
                    raise DataError(f"boundary segments {i} and {j} intersect")
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        v.setflags(write=False)
        cum.setflags(write=False)
        return cls(v, cum)

    @property
    def length(self) -> float:
        return float(self.cumulative_arclength[-1])

    @property
    def is_closed(self) -> bool:
        return self.vertices.shape[0] >= 4 and bool(np.array_equal(self.vertices[0], self.vertices[-1]))

    def point_at(self, arclength) -> np.ndarray:
        """Points at the given arclength positions, shape ``(m, 2)``."""
        s = np.clip(np.atleast_1d(np.asarray(arclength, dtype=float)), 0.0, self.length)
        cum = self.cumulative_arclength
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(cum) - 2)
        t = (s - cum[k]) / (cum[k + 1] - cum[k])
        v = self.vertices
        return v[k] + t[:, None] * (v[k + 1] - v[k])

    def transformed(self, loc, scale) -> "BoundaryPolyline":
        """Affine image ``(v - loc) / scale`` applied per dimension."""
        return BoundaryPolyline.from_vertices((self.vertices - np.asarray(loc)) / np.asarray(scale))


def distance_to_polyline(points, boundary: BoundaryPolyline) -> np.ndarray:
    """Euclidean distance from each point to the nearest polyline point."""
    p = _as_points(points)
    v = boundary.vertices
    best = np.full(p.shape[0], np.inf)
    for a, b in zip(v[:-1], v[1:]):
        d = b - a
        t = np.clip(((p - a) @ d) / (d @ d), 0.0, 1.0)
        q = a + t[:, None] * d
        best = np.minimum(best, np.hypot(p[:, 0] - q[:, 0], p[:, 1] - q[:, 1]))
    return best


def project_to_polyline(points, boundary: BoundaryPolyline) -> tuple[np.ndarray, np.ndarray]:
    """Nearest polyline points and their arclength positions."""
    p = _as_points(points)
    v, cum = boundary.vertices, boundary.cumulative_arclength
    best = np.full(p.shape[0], np.inf)
    proj = np.zeros_like(p)
    arc = np.zeros(p.shape[0])
    for k, (a, b) in enumerate(zip(v[:-1], v[1:])):
        d = b - a
        t = np.clip(((p - a) @ d) / (d @ d), 0.0, 1.0)
        q = a + t[:, None] * d
        dist = np.hypot(p[:, 0] - q[:, 0], p[:, 1] - q[:, 1])
        better = dist < best
        best = np.where(better, dist, best)
        proj[better] = q[better]
        arc[better] = cum[k] + t[better] * (cum[k + 1] - cum[k])
    return proj, arc


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _winding_number(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Winding number of a closed polygon (last vertex == first) around points."""
    px, py = points[:, 0], points[:, 1]
    wn = np.zeros(points.shape[0], dtype=np.int64)
    for a, b in zip(poly[:-1], poly[1:]):
        cross = (b[0] - a[0]) * (py - a[1]) - (px - a[0]) * (b[1] - a[1])
        up = (a[1] <= py) & (b[1] > py) & (cross > 0)
        down = (a[1] > py) & (b[1] <= py) & (cross < 0)
        wn += up.astype(np.int64) - down.astype(np.int64)
    return wn


def _closing_polygon(boundary: BoundaryPolyline, points: np.ndarray) -> np.ndarray:
    v = boundary.vertices
    centre = 0.5 * (v.min(axis=0) + v.max(axis=0))
    extent = max(
        float(np.max(np.hypot(*(v - centre).T))),
        float(np.max(np.hypot(*(points - centre).T))) if points.size else 0.0,
        1.0,
    )
    radius = 10.0 * extent

    def ray_end(origin, direction):
        d = direction / np.hypot(*direction)
        o = origin - centre
        b = o @ d
        t = -b + math.sqrt(b * b - (o @ o - radius * radius))
        return origin + t * d

    start = ray_end(v[0], v[0] - v[1])
    end = ray_end(v[-1], v[-1] - v[-2])
    a_end = math.atan2(end[1] - centre[1], end[0] - centre[0])
    a_start = math.atan2(start[1] - centre[1], start[0] - centre[0])
    sweep = (a_start - a_end) % (2 * math.pi)
    if sweep == 0.0:
        sweep = 2 * math.pi
    # chords of a 16-per-turn polygon stay within 2% of the radius, far outside every point
    nseg = max(2, math.ceil(sweep / _ARC_STEP))
    ang = a_end + sweep * np.linspace(0.0, 1.0, nseg + 1)[1:-1]
    arc = centre + radius * np.column_stack([np.cos(ang), np.sin(ang)])
    return np.vstack([start, v, end, arc, start])


def classify_points(points, boundary: BoundaryPolyline) -> np.ndarray:
    """Vectorised :func:`classify`; returns a boolean array, True for treated."""
    p = _as_points(points)
    on = distance_to_polyline(p, boundary) <= ON_BOUNDARY_TOL
    if boundary.is_closed:
        wn = _winding_number(p, boundary.vertices)
        left = wn != 0 if _signed_area(boundary.vertices) > 0 else wn == 0
    else:
        left = _winding_number(p, _closing_polygon(boundary, p)) != 0
    return on | left


def classify(point, boundary: BoundaryPolyline) -> RegionLabel:
    """Region label of a single point."""
    return RegionLabel(int(classify_points(point, boundary)[0]))


def distance(z, x, metric: MetricSpec = EUCLIDEAN) -> np.ndarray | float:
    """(Weighted) Euclidean distance; broadcasts over leading point dimensions."""
    z = np.asarray(z.as_array() if isinstance(z, Point2) else z, dtype=float)
    x = np.asarray(x.as_array() if isinstance(x, Point2) else x, dtype=float)
    d = z - x
    w1, w2 = metric.weights
    out = np.sqrt(w1 * d[..., 0] ** 2 + w2 * d[..., 1] ** 2)
    return float(out) if out.ndim == 0 else out


def signed_score(sample_x, x, label, metric: MetricSpec = EUCLIDEAN):
    """Distance to ``x`` signed positive for treated samples (zero counts as +0).

    ``label`` may be a :class:`RegionLabel` or a boolean array of treatment
    indicators matching ``sample_x``.
    """
    d = distance(sample_x, x, metric)
    treated = np.asarray(label, dtype=bool)
    out = np.where(treated, d, -d)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EvalGrid:
    points: np.ndarray
    arclengths: np.ndarray

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def transformed(self, loc, scale) -> "EvalGrid":
        return EvalGrid((self.points - np.asarray(loc)) / np.asarray(scale), self.arclengths)


def make_grid(boundary: BoundaryPolyline, M: int, include_vertices: bool = False) -> EvalGrid:
    """``M`` points at equal arclength spacing, endpoints included.

    With ``include_vertices`` each interior vertex replaces the nearest
    not-yet-replaced interior grid point, keeping ``M`` fixed.
    """
    if int(M) != M or M < 2:
        raise ConfigError(f"grid size must be an integer >= 2, got {M}")
    M = int(M)
    L = boundary.length
    s = np.arange(M) * (L / (M - 1))
    s[-1] = L
    if include_vertices and boundary.vertices.shape[0] > 2:
        taken = {0, M - 1}
        for c in boundary.cumulative_arclength[1:-1]:
            order = np.argsort(np.abs(s - c), kind="stable")
            for j in order:
                if int(j) not in taken:
                    s[j] = c
                    taken.add(int(j))
                    break
        s = np.sort(s)
    return EvalGrid(boundary.point_at(s), s)


def grid_from_points(points, boundary: BoundaryPolyline, tol_rel: float = 1e-9) -> EvalGrid:
    """Validate user-supplied grid points lying on the boundary."""
    p = _as_points(points)
    proj, arc = project_to_polyline(p, boundary)
    gap = np.hypot(*(p - proj).T)
    bad = np.flatnonzero(gap > tol_rel * boundary.length)
    if bad.size:
        raise DataError(f"grid point {int(bad[0])} is {gap[bad[0]]:.3g} away from the boundary")
    return EvalGrid(p.copy(), arc)


@dataclass(frozen=True)
class Kink:
    index: int
    turn_angle: float
    interior_angle: float


def detect_kinks(boundary: BoundaryPolyline, angle_tol_deg: float = 15.0) -> list[Kink]:
    """Vertices where the direction of travel turns by more than the tolerance."""
    if not (0 < angle_tol_deg < 180):
        raise ConfigError(f"angle tolerance must lie in (0, 180), got {angle_tol_deg}")
    v = boundary.vertices
    d = np.diff(v, axis=0)
    candidates = list(range(1, v.shape[0] - 1))
    pairs = [(d[i - 1], d[i]) for i in candidates]
    if boundary.is_closed:
        candidates.append(0)
        pairs.append((d[-1], d[0]))
    out = []
    for i, (a, b) in zip(candidates, pairs):
        turn = math.degrees(abs(math.atan2(a[0] * b[1] - a[1] * b[0], a @ b)))
        if turn > angle_tol_deg:
            out.append(Kink(i, turn, 180.0 - turn))
    return out
