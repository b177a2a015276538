"""Printable stencil plates, interchangeable walls, and binary STL output.

Physical coordinates are centimeters with the canvas spanning
``[0, width * scale] x [0, height * scale]`` and +z pointing up out of the
painted surface. Image rows grow downward, so a pixel-space point (x, y)
maps to ``(x * scale, (height - y) * scale)``; viewed from above, the plate
shows the stippling the right way round.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import shapely
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from shapely.geometry import MultiPolygon, Polygon, box
from shapely.geometry.polygon import orient

from .spraysim import DEFAULT_RADIUS_CM
from .stippler import Stippling
from .triangulate import coincident_ids, triangulate_polygon

WALL_THICKNESS_CM = 0.3
LEDGE_DEPTH_CM = 0.15
# holes on the boolean path grow by this much so that rings touching at a
# single point (which would give a non-manifold edge) overlap instead
TOUCH_MERGE_CM = 1e-6
STL_HEADER = b"stencilforge binary STL"


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class PlateParams:
    thickness_cm: float = 0.2
    hole_radius_cm: float = DEFAULT_RADIUS_CM
    hole_segments: int = 32
    margin_cm: float = 0.5
    wall_height_cm: float = 1.0
    fit_clearance_cm: float = 0.02

    def __post_init__(self):
        if self.thickness_cm <= 0 or self.hole_radius_cm <= 0 or self.wall_height_cm <= 0:
            raise ValueError("thickness, hole radius and wall height must be positive")
        if self.hole_segments < 8:
            raise ValueError("hole_segments must be >= 8")
        if self.margin_cm < 0 or self.fit_clearance_cm < 0:
            raise ValueError("margin and clearance must be nonnegative")


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) cm
    triangles: np.ndarray  # (T, 3) vertex indices, counter-clockwise seen from outside

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)


@dataclass(frozen=True)
class MeshReport:
    is_watertight: bool
    euler_characteristic: int
    genus: int
    signed_volume_cm3: float
    n_components: int
    n_degenerate: int

    @property
    def is_valid(self) -> bool:
        return self.is_watertight and self.n_degenerate == 0 and self.signed_volume_cm3 > 0


# -- geometry helpers --------------------------------------------------------

def plate_outline(stip: Stippling, params: PlateParams) -> tuple[float, float, float, float]:
    """``(xmin, ymin, xmax, ymax)`` of the plate in cm: canvas plus margin."""
    w = stip.canvas_width * stip.scale
    h = stip.canvas_height * stip.scale
    m = params.margin_cm
    return (-m, -m, w + m, h + m)


def hole_centers_cm(stip: Stippling) -> np.ndarray:
    p = stip.points
    return np.column_stack([p[:, 0] * stip.scale, (stip.canvas_height - p[:, 1]) * stip.scale])


def regular_polygon(center, radius: float, segments: int) -> np.ndarray:
    """Counter-clockwise regular polygon inscribed in the circle."""
    th = 2.0 * np.pi * np.arange(segments) / segments
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def _plate_regions(stip: Stippling, params: PlateParams):
    """Material regions as ``[(outer_ring, [hole_rings])]`` (closing vertex dropped)."""
    x0, y0, x1, y1 = plate_outline(stip, params)
    outer = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    centers = hole_centers_cm(stip)
    r = params.hole_radius_cm
    if len(centers) == 0:
        return [(outer, [])]
    polys = [regular_polygon(c, r, params.hole_segments) for c in centers]

    interior = (
        (centers[:, 0] - r > x0) & (centers[:, 0] + r < x1)
        & (centers[:, 1] - r > y0) & (centers[:, 1] + r < y1)
    ).all()
    overlapping = len(centers) > 1 and len(cKDTree(centers).query_pairs(2.0 * r)) > 0
    if interior and not overlapping:
        # disjoint interior holes need no boolean ops; keep exact coordinates
        return [(outer, [p[::-1] for p in polys])]

    holes = shapely.union_all([Polygon(p) for p in polys]).buffer(TOUCH_MERGE_CM, join_style="mitre")
    region = box(x0, y0, x1, y1).difference(holes)
    if region.is_empty or region.area <= 0:
        raise MeshError("plate fully eroded")
    parts = list(region.geoms) if isinstance(region, MultiPolygon) else [region]
    parts = [p for p in parts if isinstance(p, Polygon) and p.area > 0]
    parts.sort(key=lambda p: (p.bounds, p.area))
    out = []
    for p in parts:
        p = orient(p, 1.0)
        ext = np.asarray(p.exterior.coords)[:-1]
        ints = [np.asarray(ring.coords)[:-1] for ring in p.interiors]
        out.append((ext, ints))
    return out


def _extrude(outer, holes, z0: float, z1: float):
    verts2d, top = triangulate_polygon(outer, holes)
    n = len(verts2d)
    bottom = np.column_stack([verts2d, np.full(n, z0)])
    upper = np.column_stack([verts2d, np.full(n, z1)])
    vertices = np.vstack([bottom, upper])
    faces = [top + n, top[:, ::-1]]
    canon = coincident_ids(verts2d)
    offset = 0
    for ring, material_left in [(outer, True)] + [(h, False) for h in holes]:
        k = len(ring)
        idx = np.arange(offset, offset + k)
        ccw = _ring_area(ring) > 0
        # walk each ring with the material on the left
        if ccw != material_left:
            idx = idx[::-1]
        a, b = canon[idx], canon[np.roll(idx, -1)]
        faces.append(np.column_stack([a, b, b + n]))
        faces.append(np.column_stack([a, b + n, a + n]))
        offset += k
    return vertices, np.vstack(faces)


def _ring_area(ring):
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _merge(parts) -> TriangleMesh:
    verts, tris, offset = [], [], 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + offset)
        offset += len(v)
    return TriangleMesh(np.vstack(verts), np.vstack(tris))


# -- public builders ---------------------------------------------------------

def build_stencil_plate(stip: Stippling, params: PlateParams | None = None) -> TriangleMesh:
    """Extrude the plate with one through-hole per stipple dot.

    Overlapping holes are merged and clipped against the outline before the
    top and bottom faces are triangulated.
    """
    params = params or PlateParams()
    parts = [
        _extrude(outer, holes, 0.0, params.thickness_cm)
        for outer, holes in _plate_regions(stip, params)
    ]
    return _merge(parts)


def _rect(x0, y0, x1, y1, z):
    return np.array([[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]])


def _expand(rect, d):
    x0, y0, x1, y1 = rect
    return (x0 - d, y0 - d, x1 + d, y1 + d)


def wall_rectangles(stip: Stippling, params: PlateParams):
    """``(outer, seat, opening)`` rectangles of the wall frame.

    ``seat`` receives the plate (outline plus clearance); ``opening`` is the
    hole through the ledge the plate rests on.
    """
    outline = plate_outline(stip, params)
    outer = _expand(outline, WALL_THICKNESS_CM)
    seat = _expand(outline, params.fit_clearance_cm)
    opening = _expand(seat, -LEDGE_DEPTH_CM)
    return outer, seat, opening


def build_wall(stip: Stippling, params: PlateParams | None = None) -> TriangleMesh:
    """Frame that lifts the plate off the surface and catches overspray.

    Cross-section is an L: the full frame from the outer rectangle down to
    the ledge opening spans ``z = 0 .. wall_height - thickness``; above it a
    recess one plate-thickness deep and the size of the seat holds the
    plate flush with the top of the wall. Seat geometry relative to the top
    does not depend on the wall height, so any wall fits any plate.
    """
    params = params or PlateParams()
    outer, seat, opening = wall_rectangles(stip, params)
    if opening[2] <= opening[0] or opening[3] <= opening[1]:
        raise MeshError("wall opening has non-positive area")
    H = params.wall_height_cm
    t = params.thickness_cm
    if H <= t:
        raise MeshError("wall height must exceed the plate thickness")
    ledge = H - t
    # closed profile; consecutive rings are joined by quads
    rings = [
        _rect(*outer, 0.0),
        _rect(*outer, H),
        _rect(*seat, H),
        _rect(*seat, ledge),
        _rect(*opening, ledge),
        _rect(*opening, 0.0),
    ]
    verts = np.vstack(rings)
    faces = []
    nr = len(rings)
    for j in range(nr):
        a0, b0 = 4 * j, 4 * ((j + 1) % nr)
        for i in range(4):
            i1 = (i + 1) % 4
            faces.append([a0 + i, a0 + i1, b0 + i1])
            faces.append([a0 + i, b0 + i1, b0 + i])
    mesh = TriangleMesh(verts, np.array(faces))
    if validate_mesh(mesh).signed_volume_cm3 < 0:
        mesh.triangles = mesh.triangles[:, ::-1].copy()
    return mesh


def wall_volume(stip: Stippling, params: PlateParams) -> float:
    """Closed-form volume of :func:`build_wall`'s frame."""
    outer, seat, opening = wall_rectangles(stip, params)

    def area(r):
        return (r[2] - r[0]) * (r[3] - r[1])

    t = params.thickness_cm
    ledge = params.wall_height_cm - t
    return (area(outer) - area(opening)) * ledge + (area(outer) - area(seat)) * t


# -- validation and output ---------------------------------------------------

def validate_mesh(mesh: TriangleMesh) -> MeshReport:
    """Edge-manifold check, Euler characteristic, genus and signed volume."""
    V = mesh.vertices
    T = mesh.triangles
    nv = len(V)
    if len(T) == 0:
        return MeshReport(False, 0, 0, 0.0, 0, 0)
    if T.min() < 0 or T.max() >= nv:
        return MeshReport(False, 0, 0, 0.0, 0, 0)

    directed = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    key = directed[:, 0] * nv + directed[:, 1]
    rkey = directed[:, 1] * nv + directed[:, 0]
    uniq, counts = np.unique(key, return_counts=True)
    watertight = bool(np.all(counts == 1)) and bool(np.all(np.isin(rkey, uniq)))

    und = np.unique(np.sort(directed, axis=1), axis=0)
    used = np.unique(T)
    chi = int(len(used) - len(und) + len(T))

    adj = coo_matrix((np.ones(len(und)), (und[:, 0], und[:, 1])), shape=(nv, nv))
    n_comp_all, labels = connected_components(adj, directed=False)
    n_comp = len(np.unique(labels[used]))
    genus = (2 * n_comp - chi) // 2

    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    cross = np.cross(b - a, c - a)
    n_degen = int(np.sum(np.linalg.norm(cross, axis=1) == 0.0))
    volume = float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)
    return MeshReport(watertight, chi, int(genus), volume, int(n_comp), n_degen)


def write_stl(mesh: TriangleMesh, path) -> None:
    """Write little-endian binary STL (84 + 50 * T bytes). Refuses open meshes."""
    report = validate_mesh(mesh)
    if not report.is_watertight:
        raise MeshError("refusing to write a non-watertight mesh")
    V, T = mesh.vertices, mesh.triangles
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)

    rec = np.zeros(len(T), dtype=np.dtype([("data", "<f4", (12,)), ("attr", "<u2")]))
    rec["data"] = np.hstack([n, a, b, c]).astype("<f4")
    header = STL_HEADER.ljust(80, b"\0")
    try:
        with open(Path(path), "wb") as fh:
            fh.write(header)
            fh.write(struct.pack("<I", len(T)))
            fh.write(rec.tobytes())
    except OSError as exc:
        raise MeshError(f"unwritable path: {path}") from exc


def analytic_plate_volume(stip: Stippling, params: PlateParams) -> float:
    """Outline area minus inscribed hole polygon areas, times thickness.

    Valid when all holes are interior and pairwise disjoint.
    """
    x0, y0, x1, y1 = plate_outline(stip, params)
    n = params.hole_segments
    hole = 0.5 * n * params.hole_radius_cm ** 2 * math.sin(2 * math.pi / n)
    return ((x1 - x0) * (y1 - y0) - len(stip) * hole) * params.thickness_cm
