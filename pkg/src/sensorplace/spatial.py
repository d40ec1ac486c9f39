"""Point-pattern statistics on segment midpoints: Clark-Evans and Voronoi Gini."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import shapely
from numba import njit
from scipy.spatial import cKDTree
from shapely.geometry import Polygon

from .errors import ArityError, ParameterError, SchemaError, UndefinedError, ValidationError

RASTER_CELLS_PER_SIDE = 500


class StudyArea:
    """Simple polygon in projected coordinates (meters)."""

    def __init__(self, boundary: Sequence[Sequence[float]], *, derived: bool = False):
        ring = [tuple(map(float, p)) for p in boundary]
        if len(ring) > 1 and ring[0] == ring[-1]:
            ring = ring[:-1]
        if len(ring) < 3:
            raise SchemaError("boundary ring needs at least three vertices")
        poly = Polygon(ring)
        if not poly.is_valid or not poly.exterior.is_simple:
            raise SchemaError("boundary polygon is not simple")
        if poly.area <= 0:
            raise SchemaError("boundary polygon has zero area")
        self.boundary = tuple(ring)
        self.polygon = poly
        self.area = float(poly.area)
        # True when the boundary was synthesized from point extents.
        self.derived = derived

    @classmethod
    def from_points(cls, points, margin: float = 0.01) -> "StudyArea":
        """Axis-aligned bounding box of ``points`` grown by ``margin`` per side."""
        pts = np.asarray(points, dtype=float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        lo, hi = lo - margin * span, hi + margin * span
        return cls([(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])], derived=True)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return self.polygon.bounds

    def covers(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return shapely.intersects_xy(self.polygon, pts[:, 0], pts[:, 1])

    def default_resolution(self) -> float:
        return math.sqrt(self.area) / RASTER_CELLS_PER_SIDE

    def __eq__(self, other):
        return isinstance(other, StudyArea) and self.boundary == other.boundary

    def __repr__(self):
        return f"StudyArea(n_vertices={len(self.boundary)}, area={self.area:.1f})"


@dataclass(frozen=True)
class DispersionStats:
    r_obs: float
    r_exp: float
    R: float


def clark_evans(midpoints, study_area: StudyArea | float) -> DispersionStats:
    pts = np.asarray(midpoints, dtype=float).reshape(-1, 2)
    k = len(pts)
    if k < 2:
        raise ArityError("nearest-neighbour distance needs at least two points")
    area = study_area if isinstance(study_area, (int, float)) else study_area.area
    dist, _ = cKDTree(pts).query(pts, k=2)
    r_obs = float(dist[:, 1].mean())
    r_exp = 1.0 / (2.0 * math.sqrt(k / area))
    return DispersionStats(r_obs=r_obs, r_exp=r_exp, R=r_obs / r_exp)


def gini(areas) -> float:
    """Gini coefficient of cell areas, via the sorted-rank identity."""
    a = np.sort(np.asarray(areas, dtype=float))
    k = a.size
    if k < 1:
        raise ArityError("gini needs at least one area")
    if np.any(a < 0):
        raise ValueError("areas must be non-negative")
    total = a.sum()
    if total <= 0:
        raise UndefinedError("gini undefined when all areas are zero")
    ranks = 2.0 * np.arange(k) - k + 1.0
    # sum_{v,u} |a_v - a_u| = 2 * sum_i (2i - k + 1) a_(i);  2 K^2 mean = 2 K total
    return float(2.0 * (ranks * a).sum() / (2.0 * k * total))


@dataclass(frozen=True)
class RasterGrid:
    """Centers of the grid cells whose center lies in the study area."""

    cx: np.ndarray
    cy: np.ndarray
    cell_area: float
    resolution: float

    @property
    def n_cells(self) -> int:
        return self.cx.size


def raster_grid(study_area: StudyArea, resolution: float | None = None) -> RasterGrid:
    res = study_area.default_resolution() if resolution is None else float(resolution)
    if not res > 0:
        raise ParameterError("resolution must be > 0")
    minx, miny, maxx, maxy = study_area.bounds
    nx = max(1, int(math.ceil((maxx - minx) / res - 1e-9)))
    ny = max(1, int(math.ceil((maxy - miny) / res - 1e-9)))
    xs = minx + (np.arange(nx) + 0.5) * res
    ys = miny + (np.arange(ny) + 0.5) * res
    gx, gy = np.meshgrid(xs, ys)
    gx, gy = gx.ravel(), gy.ravel()
    inside = shapely.intersects_xy(study_area.polygon, gx, gy)
    return RasterGrid(cx=gx[inside], cy=gy[inside], cell_area=res * res, resolution=res)


@njit(cache=True)
def nearest_site(cx, cy, sx, sy):
    """Index of the nearest site per cell; ties go to the lower site index."""
    n, k = cx.shape[0], sx.shape[0]
    owner = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for i in range(n):
        b = np.inf
        o = 0
        for j in range(k):
            dx = cx[i] - sx[j]
            dy = cy[i] - sy[j]
            d = dx * dx + dy * dy
            if d < b:
                b = d
                o = j
        owner[i] = o
        best[i] = b
    return owner, best


@dataclass(frozen=True)
class VoronoiPartition:
    site_ids: tuple[int, ...]
    areas: Mapping[int, float]
    mean_area: float
    method: str
    resolution: float | None = None


def _check_sites(pts, study_area):
    if len(pts) < 1:
        raise ArityError("need at least one site")
    outside = ~study_area.covers(pts)
    if outside.any():
        raise ValidationError(f"{int(outside.sum())} site(s) lie outside the study area")


def voronoi_areas(midpoints, study_area: StudyArea, *, ids: Sequence[int] | None = None,
                  method: str = "raster", resolution: float | None = None,
                  grid: RasterGrid | None = None) -> VoronoiPartition:
    """Voronoi cell areas clipped to the study area.

    Sites are ordered by id, so tie-breaking toward the lower id is the
    same as toward the lower position. ``grid`` lets callers reuse a raster.
    """
    pts = np.asarray(midpoints, dtype=float).reshape(-1, 2)
    ids = list(range(len(pts))) if ids is None else list(ids)
    if len(ids) != len(pts):
        raise ValueError("ids and midpoints differ in length")
    if resolution is not None and not resolution > 0:
        raise ParameterError("resolution must be > 0")
    _check_sites(pts, study_area)
    order = np.argsort(ids, kind="stable")
    pts = pts[order]
    ids = [ids[i] for i in order]
    if method == "raster":
        g = grid if grid is not None else raster_grid(study_area, resolution)
        owner, _ = nearest_site(g.cx, g.cy, pts[:, 0].copy(), pts[:, 1].copy())
        counts = np.bincount(owner, minlength=len(pts))
        areas = counts * g.cell_area
        res = g.resolution
    elif method == "exact":
        areas = _exact_areas(pts, study_area)
        res = None
    else:
        raise ParameterError(f"unknown voronoi method {method!r}")
    amap = {i: float(a) for i, a in zip(ids, areas)}
    return VoronoiPartition(site_ids=tuple(ids), areas=amap, mean_area=float(np.mean(areas)),
                            method=method, resolution=res)


def _exact_areas(pts: np.ndarray, study_area: StudyArea) -> np.ndarray:
    minx, miny, maxx, maxy = study_area.bounds
    big = 4.0 * max(maxx - minx, maxy - miny, 1.0)
    out = np.zeros(len(pts))
    for i, p in enumerate(pts):
        cell = study_area.polygon
        for j, q in enumerate(pts):
            if i == j or np.array_equal(p, q):
                continue
            mid = (p + q) / 2.0
            normal = (q - p) / np.linalg.norm(q - p)
            tangent = np.array([-normal[1], normal[0]])
            # half-plane {x : (x - mid) . normal <= 0} as a large quad
            a = mid + tangent * big
            b = mid - tangent * big
            half = Polygon([a, b, b - normal * big, a - normal * big])
            cell = cell.intersection(half)
            if cell.is_empty:
                break
        out[i] = cell.area
    return out

