"""Planar geometry primitives shared by the lattice generator and the mesher.

Coordinates are millimeters throughout.  Boolean operations are delegated to
shapely (GEOS); everything here wraps those results in small validated value
types so the rest of the package never passes raw shapely objects around.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import MultiPolygon
from shapely.geometry import Polygon as _ShapelyPolygon

#: grid (mm) vertices are snapped to before boolean operations
SNAP_GRID = 1e-7
#: tolerance (mm) below which two points count as duplicates
DEDUPE_TOL = 1e-9


class GeometryError(ValueError):
    """Raised for invalid or degenerate geometric input."""


def snap(coords: np.ndarray, grid: float = SNAP_GRID) -> np.ndarray:
    """Snap coordinates onto a regular grid (robustness before booleans)."""
    return np.round(np.asarray(coords, dtype=float) / grid) * grid


def dedupe_points(coords: np.ndarray, tol: float = DEDUPE_TOL) -> np.ndarray:
    """Remove duplicate points (within ``tol``), keeping first occurrences."""
    coords = np.asarray(coords, dtype=float)
    keys = np.round(coords / tol).astype(np.int64)
    _, idx = np.unique(keys, axis=0, return_index=True)
    return coords[np.sort(idx)]


@dataclass(frozen=True)
class PointSet:
    """An ordered set of 2D seed points with no duplicates within 1e-9 mm."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError("points must be an (n, 2) array")
        keys = np.round(pts / DEDUPE_TOL).astype(np.int64)
        if len(np.unique(keys, axis=0)) != len(pts):
            raise GeometryError("duplicate points within 1e-9 mm")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, angle_deg: float, offset: tuple[float, float]) -> "PointSet":
        """Rotate about the origin by ``angle_deg`` then translate."""
        t = np.deg2rad(angle_deg)
        rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        return PointSet(self.points @ rot.T + np.asarray(offset, dtype=float))

    def bounding_box(self) -> tuple[float, float, float, float]:
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return (lo[0], lo[1], hi[0], hi[1])


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class Polygon:
    """Simple polygon, counterclockwise, positive area.

    ``vertices`` excludes the closing repeat of the first vertex.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least 3 (x, y) vertices")
        if _signed_area(v) <= 0:
            raise GeometryError("polygon must be counterclockwise with area > 0")
        if not _ShapelyPolygon(v).is_simple:
            raise GeometryError("polygon is self-intersecting")
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    def to_shapely(self) -> _ShapelyPolygon:
        return _ShapelyPolygon(self.vertices)

    @staticmethod
    def from_shapely(geom: _ShapelyPolygon) -> "Polygon":
        if geom.interiors:
            raise GeometryError("polygon has holes")
        v = np.asarray(geom.exterior.coords[:-1], dtype=float)
        if _signed_area(v) < 0:
            v = v[::-1]
        return Polygon(v)

    @staticmethod
    def rectangle(x0: float, y0: float, x1: float, y1: float) -> "Polygon":
        return Polygon(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.vertices + np.array([dx, dy]))


def centroid(poly: Polygon) -> tuple[float, float]:
    """Vertex-average centroid: the arithmetic mean of the vertices.

    Deliberately not the area centroid; the contraction construction is
    defined about the plain mean of the polygon's points.
    """
    g = poly.vertices.mean(axis=0)
    return (float(g[0]), float(g[1]))


def contract(poly: Polygon, alpha: float) -> Polygon:
    """Scale a polygon about its vertex-average centroid by ``alpha``.

    A similarity map: distances to the centroid scale by exactly alpha and
    the area by alpha squared.  alpha = 1 is the identity.
    """
    if not 0 < alpha <= 1:
        raise GeometryError(f"alpha must be in (0, 1], got {alpha}")
    g = poly.vertices.mean(axis=0)
    return Polygon(g + alpha * (poly.vertices - g))


@dataclass(frozen=True)
class PlanarRegion:
    """Multiply-connected polygonal domain: outer boundaries plus holes."""

    outers: tuple[Polygon, ...]
    holes: tuple[Polygon, ...] = ()

    def __post_init__(self):
        if not self.outers:
            raise GeometryError("region needs at least one outer boundary")
        if self.area <= 0:
            raise GeometryError("region area must be positive")
        geom = self.to_shapely()
        if not geom.is_valid:
            raise GeometryError("region boundaries cross or holes escape outers")

    @property
    def area(self) -> float:
        return sum(p.area for p in self.outers) - sum(p.area for p in self.holes)

    def bounding_box(self) -> tuple[float, float, float, float]:
        pts = np.vstack([p.vertices for p in self.outers])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        return (lo[0], lo[1], hi[0], hi[1])

    def to_shapely(self):
        shells = [p.to_shapely() for p in self.outers]
        holes = [p.to_shapely() for p in self.holes]
        geom = MultiPolygon if len(shells) > 1 else lambda gs: gs[0]
        parts = []
        for shell in shells:
            mine = [h.exterior.coords for h in holes if shell.contains(h.representative_point())]
            parts.append(_ShapelyPolygon(shell.exterior.coords, mine))
        return parts[0] if len(parts) == 1 else MultiPolygon(parts)

    @staticmethod
    def from_shapely(geom) -> "PlanarRegion":
        """Build a region from a shapely Polygon or MultiPolygon."""
        if geom.is_empty:
            raise GeometryError("empty region")
        if isinstance(geom, _ShapelyPolygon):
            polys = [geom]
        elif isinstance(geom, MultiPolygon):
            polys = list(geom.geoms)
        else:
            raise GeometryError(f"unsupported geometry type {geom.geom_type}")
        outers, holes = [], []
        for p in polys:
            ext = np.asarray(p.exterior.coords[:-1], dtype=float)
            if _signed_area(ext) < 0:
                ext = ext[::-1]
            outers.append(Polygon(ext))
            for ring in p.interiors:
                v = np.asarray(ring.coords[:-1], dtype=float)
                if _signed_area(v) < 0:
                    v = v[::-1]
                holes.append(Polygon(v))
        return PlanarRegion(tuple(outers), tuple(holes))

    def translated(self, dx: float, dy: float) -> "PlanarRegion":
        return PlanarRegion(
            tuple(p.translated(dx, dy) for p in self.outers),
            tuple(p.translated(dx, dy) for p in self.holes),
        )

    def is_connected(self) -> bool:
        return len(self.outers) == 1

    def rings(self):
        """Yield (vertices, is_hole) for every boundary ring."""
        for p in self.outers:
            yield p.vertices, False
        for p in self.holes:
            yield p.vertices, True


def clean_shapely(geom, grid: float = SNAP_GRID):
    """Snap a shapely geometry's coordinates to the snap grid and revalidate."""
    snapped = shapely.set_precision(geom, grid, mode="valid_output")
    return snapped
