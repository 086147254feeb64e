"""Parametric generation of Voronoi-web lattices.

The construction: a branch-trunk-branch stem is sampled into seed points,
sixteen rotated/translated copies are arranged on a 4x4 grid with fourfold
(p4-style) rotational symmetry, the Voronoi cells of each stem's points are
merged into one territory polygon per stem, every territory is contracted
toward its vertex-average centroid, and the material region of a unit cell is
the square cell minus the contracted territories: a connected web of ligaments
along the territory borders.  Tiling that cell yields the full lattice sheet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import QhullError, Voronoi
from shapely.geometry import LineString, MultiPolygon
from shapely.geometry import Polygon as _SPolygon
from shapely.ops import unary_union

from .geometry import (
    DEDUPE_TOL,
    GeometryError,
    PlanarRegion,
    PointSet,
    Polygon,
    centroid,
    clean_shapely,
    contract,
    dedupe_points,
    snap,
)

ATTACH_END_A = "end_a"
ATTACH_END_B = "end_b"
ATTACH_MIDPOINT = "midpoint"

#: default per-tile rotation angles (degrees), indexed [i % 2][j % 2].
#: Extends to a genuine p4 wallpaper pattern (period 2L) whose finite 4x4
#: patch maps onto itself under a 90 degree rotation about (1.5L, 1.5L).
DEFAULT_ROTATION_BLOCK = ((0.0, 270.0), (90.0, 180.0))


def default_rotation_map(i: int, j: int) -> float:
    return DEFAULT_ROTATION_BLOCK[i % 2][j % 2]


@dataclass(frozen=True)
class BranchSpec:
    """One branch parameter set: length (mm), angle from the trunk axis
    (degrees), and where it attaches on the trunk."""

    length: float
    angle: float
    attach: str

    def __post_init__(self):
        if self.length <= 0:
            raise GeometryError("branch length must be positive")
        if not 0 < self.angle < 180:
            raise GeometryError("branch angle must lie strictly between 0 and 180 degrees")
        if self.attach not in (ATTACH_END_A, ATTACH_END_B, ATTACH_MIDPOINT):
            raise GeometryError(f"unknown attach point {self.attach!r}")


@dataclass(frozen=True)
class StemSpec:
    """Trunk plus branch parameter sets, with the seed sampling pitch."""

    trunk_length: float
    branches: tuple[BranchSpec, ...] = ()
    sample_spacing: float = 0.5

    def __post_init__(self):
        if self.trunk_length <= 0:
            raise GeometryError("trunk length must be positive")
        if self.sample_spacing <= 0:
            raise GeometryError("sample spacing must be positive")
        object.__setattr__(self, "branches", tuple(self.branches))


@dataclass(frozen=True)
class TilingSpec:
    """4x4 stem tiling with period ``period`` and per-tile rotations.

    ``rotation_map(i, j)`` must return a multiple of 90 degrees for every
    i, j in 0..3.
    """

    period: float = 12.0
    rotation_map: "callable" = default_rotation_map
    grid: int = 4

    def __post_init__(self):
        if self.period <= 0:
            raise GeometryError("tiling period must be positive")
        if self.grid != 4:
            raise GeometryError("the stem tiling is fixed at 4x4")
        for i in range(4):
            for j in range(4):
                a = self.rotation_map(i, j)
                if abs(a % 90.0) > 1e-12 and abs(a % 90.0 - 90.0) > 1e-12:
                    raise GeometryError("rotation angles must be multiples of 90 degrees")

    def angles(self) -> np.ndarray:
        return np.array([[self.rotation_map(i, j) for j in range(4)] for i in range(4)])


@dataclass(frozen=True)
class LatticeDesign:
    """Full parametric description of one lattice sheet."""

    stem: StemSpec
    tiling: TilingSpec = field(default_factory=TilingSpec)
    alpha: float | None = None
    target_density: float | None = None
    unit_cell_size: float = 12.0
    grid_nx: int = 4
    grid_ny: int = 5
    thickness: float = 4.0
    name: str = ""

    def __post_init__(self):
        if (self.alpha is None) == (self.target_density is None):
            raise GeometryError("set exactly one of alpha / target_density")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise GeometryError("alpha must be in (0, 1]")
        if self.target_density is not None and not 0 < self.target_density < 1:
            raise GeometryError("target_density must be in (0, 1)")
        if self.unit_cell_size <= 0:
            raise GeometryError("unit cell size must be positive")
        if self.grid_nx < 1 or self.grid_ny < 1:
            raise GeometryError("grid counts must be at least 1")
        if self.thickness <= 0:
            raise GeometryError("thickness must be positive")


def _sample_segment(p0: np.ndarray, p1: np.ndarray, spacing: float,
                    include_start: bool) -> np.ndarray:
    """Evenly sample a segment at approximately ``spacing``, endpoint included."""
    length = float(np.linalg.norm(p1 - p0))
    nseg = max(1, int(round(length / spacing)))
    ts = np.linspace(0.0, 1.0, nseg + 1)
    if not include_start:
        ts = ts[1:]
    return p0 + ts[:, None] * (p1 - p0)


def build_stem(spec: StemSpec) -> PointSet:
    """Sample the branch-trunk-branch stem into seed points.

    The trunk runs along +x centered on the origin.  Branch parameter sets
    attached at an end are placed as a mirror pair (+angle and -angle about
    the trunk axis); midpoint sets alternate sides in order of appearance.
    Branch direction is (cos a, +/- sin a) from the attachment point.
    """
    t = spec.trunk_length
    ds = spec.sample_spacing
    if ds > t:
        raise GeometryError(
            f"sample_spacing {ds} exceeds trunk length {t}: too coarse to place the midpoint")
    a = np.array([-t / 2.0, 0.0])
    b = np.array([t / 2.0, 0.0])
    mid = np.array([0.0, 0.0])
    pieces = [_sample_segment(a, b, ds, include_start=True), mid[None, :]]

    attach_at = {ATTACH_END_A: a, ATTACH_END_B: b, ATTACH_MIDPOINT: mid}
    midpoint_side = 1.0
    for br in spec.branches:
        root = attach_at[br.attach]
        ang = math.radians(br.angle)
        d = np.array([math.cos(ang), math.sin(ang)])
        if br.attach == ATTACH_MIDPOINT:
            sides = (midpoint_side,)
            midpoint_side = -midpoint_side
        else:
            sides = (1.0, -1.0)
        for s in sides:
            tip = root + br.length * np.array([d[0], s * d[1]])
            pieces.append(_sample_segment(root, tip, ds, include_start=False))
    return PointSet(dedupe_points(np.vstack(pieces)))


def tile_stems(stem: PointSet, tiling: TilingSpec) -> list[PointSet]:
    """Place the 16 rotated/translated stem copies S_ij on the 4x4 grid."""
    out = []
    for i in range(4):
        for j in range(4):
            angle = tiling.rotation_map(i, j)
            out.append(stem.transformed(angle, (i * tiling.period, j * tiling.period)))
    return out


def combine_seeds(tiles: list[PointSet]) -> tuple[PointSet, list[list[int]]]:
    """Merge the tiled stems into one deduplicated seed set.

    Returns the combined set plus, per stem, the indices of its points in the
    combined set.  Stems may overlap (long trunks spill into neighbouring
    tiles); a shared seed belongs to every stem that produced it.
    """
    key_to_index: dict[tuple[int, int], int] = {}
    coords: list[np.ndarray] = []
    owners: list[list[int]] = []
    for tile in tiles:
        idxs = []
        for p in tile.points:
            key = (int(round(p[0] / DEDUPE_TOL)), int(round(p[1] / DEDUPE_TOL)))
            if key not in key_to_index:
                key_to_index[key] = len(coords)
                coords.append(p)
            idxs.append(key_to_index[key])
        owners.append(idxs)
    return PointSet(np.asarray(coords)), owners


def voronoi(seeds: PointSet, clip_box: Polygon) -> list[Polygon]:
    """Bounded Voronoi cells of the seeds, clipped to ``clip_box``.

    One convex cell per seed; together the cells tile the clip box.  Distant
    guard points bound every real cell before clipping.
    """
    pts = seeds.points
    if len(pts) < 2:
        raise GeometryError("need at least 2 seeds")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    box_pts = clip_box.vertices
    center = (lo + hi) / 2.0
    reach = max(np.abs(np.vstack([pts, box_pts]) - center).max(), 1.0)
    radius = 8.0 * reach
    angles = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    guards = center + radius * np.c_[np.cos(angles), np.sin(angles)]
    try:
        vor = Voronoi(np.vstack([pts, guards]))
    except QhullError as exc:
        if len(np.unique(np.round(pts / 1e-12), axis=0)) != len(pts) or _collinear(pts):
            raise GeometryError("degenerate seed set: all seeds collinear") from exc
        raise
    box = clip_box.to_shapely()
    cells = []
    for k in range(len(pts)):
        region = vor.regions[vor.point_region[k]]
        if -1 in region or len(region) < 3:
            raise GeometryError(f"unbounded Voronoi cell for seed {k}")
        verts = snap(vor.vertices[region])
        cell = _SPolygon(verts)
        if not cell.is_valid:
            cell = cell.buffer(0)
        clipped = cell.intersection(box)
        if clipped.is_empty or not isinstance(clipped, _SPolygon):
            raise GeometryError(f"Voronoi cell {k} degenerates under clipping")
        cells.append(Polygon.from_shapely(clipped))
    return cells


def _collinear(pts: np.ndarray) -> bool:
    if len(pts) < 3:
        return True
    d = pts - pts[0]
    cross = d[:, 0] * d[1, 1] - d[:, 1] * d[1, 0]
    return bool(np.allclose(cross, 0.0, atol=1e-9))


def union_cells(cells: list[Polygon], owner: int | None = None) -> Polygon:
    """Merge the Voronoi cells of one stem into its territory polygon.

    The union must be simply connected; anything else signals a degenerate
    stem sampling (seed pitch too coarse).
    """
    merged = unary_union([c.to_shapely() for c in cells])
    merged = clean_shapely(merged)
    tag = f" for stem {owner}" if owner is not None else ""
    if isinstance(merged, MultiPolygon):
        raise GeometryError(f"disconnected cell union{tag}: degenerate stem sampling")
    if merged.is_empty:
        raise GeometryError(f"empty cell union{tag}")
    if merged.interiors:
        raise GeometryError(f"cell union{tag} contains holes: degenerate stem sampling")
    return Polygon.from_shapely(merged)


def make_unit_cell(contracted: list[Polygon], cell_square: Polygon) -> PlanarRegion:
    """Material region of one unit cell: the square minus the contracted
    territories, leaving the ligament web between them."""
    covered = unary_union([p.to_shapely() for p in contracted])
    material = cell_square.to_shapely().difference(covered)
    material = clean_shapely(material)
    if material.is_empty or material.area <= 0:
        raise GeometryError("unit cell is empty: contraction leaves no material")
    return PlanarRegion.from_shapely(material)


def tile_unit_cell(cell: PlanarRegion, nx: int, ny: int,
                   period_x: float | None = None,
                   period_y: float | None = None) -> PlanarRegion:
    """Union of nx-by-ny translated copies of the unit cell, merged along
    shared boundaries into one connected region (re-anchored at the origin)."""
    if nx < 1 or ny < 1:
        raise GeometryError("tile counts must be at least 1")
    x0, y0, x1, y1 = cell.bounding_box()
    lx = period_x if period_x is not None else (x1 - x0)
    ly = period_y if period_y is not None else (y1 - y0)
    base = cell.to_shapely()
    copies = [
        shapely_translate(base, i * lx, j * ly)
        for i in range(nx)
        for j in range(ny)
    ]
    merged = clean_shapely(unary_union(copies))
    if isinstance(merged, MultiPolygon):
        raise GeometryError(
            f"disconnected tiling: {len(merged.geoms)} separate pieces; "
            "the unit cell does not bond with its translates")
    region = PlanarRegion.from_shapely(merged)
    bx0, by0, _, _ = region.bounding_box()
    return region.translated(-bx0, -by0)


def shapely_translate(geom, dx: float, dy: float):
    return shapely_affine(geom, dx, dy)


def shapely_affine(geom, dx, dy):
    import shapely.affinity

    return shapely.affinity.translate(geom, xoff=dx, yoff=dy)


def relative_density(region: PlanarRegion, gross_area: float) -> float:
    """Material area over gross area."""
    if gross_area <= 0:
        raise GeometryError("gross area must be positive")
    return region.area / gross_area


@dataclass(frozen=True)
class GenerationReport:
    """Provenance of one generated lattice region."""

    alpha: float
    density: float
    seed_count: int
    cell_area: float
    region_area: float
    bounding_box: tuple[float, float, float, float]


class _CellPipeline:
    """Caches the seed/Voronoi/territory stages so alpha sweeps are cheap."""

    def __init__(self, design: LatticeDesign):
        self.design = design
        stem = build_stem(design.stem)
        tiles = tile_stems(stem, design.tiling)
        self.seeds, owners = combine_seeds(tiles)
        L = design.tiling.period
        clip = Polygon.rectangle(-L, -L, 5 * L, 5 * L)
        cells = voronoi(self.seeds, clip)
        self.territories = [
            union_cells([cells[k] for k in idxs], owner=i)
            for i, idxs in enumerate(owners)
        ]
        half = design.unit_cell_size / 2.0
        cx = cy = 1.5 * L
        self.cell_square = Polygon.rectangle(cx - half, cy - half, cx + half, cy + half)

    def unit_cell(self, alpha: float) -> PlanarRegion:
        shrunk = [contract(t, alpha) for t in self.territories]
        return make_unit_cell(shrunk, self.cell_square)

    def density(self, alpha: float) -> float:
        try:
            return relative_density(self.unit_cell(alpha), self.cell_square.area)
        except GeometryError:
            return 0.0  # fully covered cell: no material survives


def solve_alpha_for_density(design: LatticeDesign, target: float,
                            tol: float = 1e-3, max_iter: int = 60) -> float:
    """Bisect the contraction scalar so the unit cell hits ``target`` density.

    Density decreases monotonically with alpha (shrinking polygons opens the
    web); the bracket is verified before bisection starts.
    """
    if not 0 < target < 1:
        raise GeometryError("target density must be in (0, 1)")
    pipe = _CellPipeline(design)
    lo, hi = 0.05, 1.0
    d_lo, d_hi = pipe.density(lo), pipe.density(hi)
    if not (d_hi - tol <= target <= d_lo + tol):
        raise GeometryError(
            f"target density {target} unreachable: achievable bracket "
            f"[{d_hi:.4f}, {d_lo:.4f}] for alpha in [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        d = pipe.density(mid)
        if abs(d - target) <= tol:
            return mid
        if d > target:
            lo = mid
        else:
            hi = mid
    raise GeometryError("alpha bisection failed to converge")


def generate_region(design: LatticeDesign) -> tuple[PlanarRegion, GenerationReport]:
    """Run the full construction for a design and return the lattice region."""
    pipe = _CellPipeline(design)
    if design.alpha is not None:
        alpha = design.alpha
    else:
        alpha = solve_alpha_for_density(design, design.target_density)
    cell = pipe.unit_cell(alpha)
    region = tile_unit_cell(
        cell, design.grid_nx, design.grid_ny,
        period_x=design.unit_cell_size, period_y=design.unit_cell_size)
    density = relative_density(cell, pipe.cell_square.area)
    report = GenerationReport(
        alpha=alpha,
        density=density,
        seed_count=len(pipe.seeds),
        cell_area=pipe.cell_square.area,
        region_area=region.area,
        bounding_box=region.bounding_box(),
    )
    return region, report


def extrude_export(region: PlanarRegion, h: float) -> str:
    """Watertight prism of the region as ASCII triangle-soup solid text.

    Top and bottom faces come from a constrained triangulation of the region;
    side walls follow the boundary rings.  Export only; nothing downstream
    consumes this.
    """
    if h <= 0:
        raise GeometryError("extrusion height must be positive")
    from shapely import constrained_delaunay_triangles

    geom = region.to_shapely()
    tris = constrained_delaunay_triangles(geom)
    facets: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    inside = shapely.prepare(geom) or geom
    for t in tris.geoms:
        v = np.asarray(t.exterior.coords[:-1], dtype=float)
        if len(v) != 3:
            continue
        if not geom.contains(t.representative_point()):
            continue
        if _tri_area(v) < 0:
            v = v[::-1]
        bottom = np.c_[v, np.zeros(3)]
        top = np.c_[v, np.full(3, h)]
        facets.append((bottom[0], bottom[2], bottom[1]))  # floor faces -z
        facets.append((top[0], top[1], top[2]))           # roof faces +z
    for ring, is_hole in region.rings():
        loop = np.vstack([ring, ring[:1]])
        for a, b in zip(loop[:-1], loop[1:]):
            a0 = np.array([a[0], a[1], 0.0])
            b0 = np.array([b[0], b[1], 0.0])
            a1 = np.array([a[0], a[1], h])
            b1 = np.array([b[0], b[1], h])
            if is_hole:
                # hole rings are CCW; material lies outside, wall faces inward
                facets.append((a0, a1, b1))
                facets.append((a0, b1, b0))
            else:
                facets.append((a0, b0, b1))
                facets.append((a0, b1, a1))
    facets.sort(key=lambda f: tuple(np.round((f[0] + f[1] + f[2]) / 3.0, 9)))
    lines = ["solid lattice"]
    for a, b, c in facets:
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n)
        n = n / norm if norm > 0 else n
        lines.append(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
        lines.append("    outer loop")
        for p in (a, b, c):
            lines.append(f"      vertex {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append("endsolid lattice")
    return "\n".join(lines) + "\n"


def _tri_area(v: np.ndarray) -> float:
    return 0.5 * float(
        (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1])
        - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))


def solid_volume(text: str) -> float:
    """Signed volume of a triangle-soup solid via the divergence theorem."""
    vol = 0.0
    verts: list[np.ndarray] = []
    for line in text.splitlines():
        parts = line.split()
        if parts[:1] == ["vertex"]:
            verts.append(np.array([float(x) for x in parts[1:4]]))
            if len(verts) == 3:
                a, b, c = verts
                vol += float(np.dot(a, np.cross(b, c))) / 6.0
                verts = []
    return vol
