import numpy as np
import pytest

from stencilforge.stencilmesh import (
    MeshError,
    PlateParams,
    TriangleMesh,
    analytic_plate_volume,
    build_stencil_plate,
    build_wall,
    regular_polygon,
    validate_mesh,
    wall_volume,
    write_stl,
)
from stencilforge.stippler import Stippling

from stl_reader import read_stl

CUBE_V = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                   [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], float)
CUBE_T = np.array([[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
                   [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]])


def _shoelace(ring):
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def test_validate_cube():
    r = validate_mesh(TriangleMesh(CUBE_V, CUBE_T))
    assert r.is_watertight and r.euler_characteristic == 2 and r.genus == 0
    assert r.signed_volume_cm3 == pytest.approx(1.0)
    assert r.n_components == 1 and r.n_degenerate == 0 and r.is_valid


def test_validate_detects_open_and_flipped():
    assert not validate_mesh(TriangleMesh(CUBE_V, CUBE_T[2:])).is_watertight
    flipped = CUBE_T.copy()
    flipped[5] = flipped[5, ::-1]
    assert not validate_mesh(TriangleMesh(CUBE_V, flipped)).is_watertight


def test_zero_hole_plate_is_box():
    m = build_stencil_plate(Stippling(np.zeros((0, 2)), 20, 10))
    r = validate_mesh(m)
    assert len(m.vertices) == 8 and len(m.triangles) == 12
    assert r.euler_characteristic == 2 and r.is_valid


def test_one_hole_plate_is_torus():
    r = validate_mesh(build_stencil_plate(Stippling([[50.0, 50.0]], 100, 100)))
    assert r.euler_characteristic == 0 and r.genus == 1 and r.is_valid


def test_disjoint_holes_topology_and_volume(rng):
    W = H = 120
    g = np.stack(np.meshgrid(np.arange(6), np.arange(6)), -1).reshape(-1, 2) * 20 + 10
    st = Stippling(g + rng.random(g.shape), W, H)
    p = PlateParams()
    r = validate_mesh(build_stencil_plate(st, p))
    assert r.is_watertight and r.euler_characteristic == 2 - 2 * len(st)
    hole = _shoelace(regular_polygon((0, 0), p.hole_radius_cm, p.hole_segments))
    outline = (W * st.scale + 2 * p.margin_cm) * (H * st.scale + 2 * p.margin_cm)
    expect = (outline - len(st) * hole) * p.thickness_cm
    assert r.signed_volume_cm3 == pytest.approx(expect, rel=1e-9)
    assert analytic_plate_volume(st, p) == pytest.approx(expect, rel=1e-12)


def test_overlapping_and_edge_holes_merge():
    p = PlateParams(margin_cm=0.0)
    st = Stippling([[50, 50], [53, 50], [0.5, 50], [70, 70]], 100, 100)
    r = validate_mesh(build_stencil_plate(st, p))
    # the pair merges into one hole; the edge dot notches the outline
    assert r.is_valid and r.genus == 2


def test_plate_y_is_flipped():
    st = Stippling([[10.0, 5.0]], 100, 100)
    m = build_stencil_plate(st)
    # hole vertices sit around (0.1, 0.95) cm
    hole = m.vertices[(np.abs(m.vertices[:, 0] - 0.1) < 0.06) & (np.abs(m.vertices[:, 1] - 0.95) < 0.06)]
    assert len(hole) == 2 * 32


@pytest.mark.parametrize("points", [
    [[10.0, 5.0]],  # touches the outline at one vertex
    [[40.0, 50.0], [50.0, 50.0]],  # two holes touching at one vertex
])
def test_touching_holes_stay_watertight(points):
    st = Stippling(points, 100, 100)
    r = validate_mesh(build_stencil_plate(st, PlateParams(margin_cm=0)))
    assert r.is_watertight and r.n_degenerate == 0 and r.signed_volume_cm3 > 0


def test_fully_eroded():
    with pytest.raises(MeshError, match="fully eroded"):
        build_stencil_plate(Stippling([[0.5, 0.5]], 1, 1), PlateParams(hole_radius_cm=1.0, margin_cm=0))


def test_plate_params_validation():
    with pytest.raises(ValueError):
        PlateParams(hole_segments=6)
    with pytest.raises(ValueError):
        PlateParams(thickness_cm=0)


@pytest.mark.parametrize("height", [0.5, 1.0, 3.0])
def test_wall_topology_and_volume(height):
    st = Stippling(np.zeros((0, 2)), 80, 60)
    p = PlateParams(wall_height_cm=height)
    r = validate_mesh(build_wall(st, p))
    assert r.is_valid and r.euler_characteristic == 0
    assert r.signed_volume_cm3 == pytest.approx(wall_volume(st, p), rel=1e-9)


def test_walls_share_seat_cross_section():
    st = Stippling(np.zeros((0, 2)), 80, 60)
    p1, p3 = PlateParams(wall_height_cm=1.0), PlateParams(wall_height_cm=3.0)
    w1, w3 = build_wall(st, p1), build_wall(st, p3)

    def seat(mesh, height):
        v = mesh.vertices
        top = v[v[:, 2] >= height - p1.thickness_cm - 1e-12]
        xy = np.unique(top[:, :2], axis=0)
        depths = np.unique(np.round(height - top[:, 2], 12))
        return xy, depths

    xy1, d1 = seat(w1, 1.0)
    xy3, d3 = seat(w3, 3.0)
    np.testing.assert_array_equal(xy1, xy3)
    np.testing.assert_allclose(d1, d3, atol=1e-12)


def test_wall_errors():
    st = Stippling(np.zeros((0, 2)), 10, 10)
    with pytest.raises(MeshError):
        build_wall(st, PlateParams(wall_height_cm=0.1, thickness_cm=0.2))
    with pytest.raises(MeshError):
        build_wall(Stippling(np.zeros((0, 2)), 1, 1), PlateParams(margin_cm=0))


def test_stl_round_trip(tmp_path):
    mesh = TriangleMesh(CUBE_V, CUBE_T)
    write_stl(mesh, tmp_path / "cube.stl")
    got = read_stl(tmp_path / "cube.stl")
    assert got["size"] == 684 and got["count"] == 12
    np.testing.assert_array_equal(got["triangles"], mesh.vertices[mesh.triangles].astype(np.float32))
    n = np.cross(got["triangles"][:, 1] - got["triangles"][:, 0], got["triangles"][:, 2] - got["triangles"][:, 0])
    assert np.all(np.einsum("ij,ij->i", n, got["normals"]) > 0)


def test_stl_refuses_open_mesh(tmp_path):
    with pytest.raises(MeshError):
        write_stl(TriangleMesh(CUBE_V, CUBE_T[2:]), tmp_path / "bad.stl")
    with pytest.raises(MeshError, match="unwritable"):
        write_stl(TriangleMesh(CUBE_V, CUBE_T), tmp_path / "no" / "dir.stl")
