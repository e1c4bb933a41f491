import math

import numpy as np
import pytest

from sppm.field import CombinedField, make_field, pore_radius
from sppm.voxel import (
    EmptySolid,
    EmptySurface,
    VoxelGrid,
    extract_mesh,
    face_mismatch,
    measure_porosity,
    validate_solid,
    voxelize,
    write_obj,
)

R = pore_radius(30.0, 0.25)
SPHERE = 4.0 / 3.0 * math.pi * R**3


def centered():
    return make_field([(0.5, 0.5, 0.5)], 30.0)


def test_radius_value():
    assert R == pytest.approx(0.2150, abs=1e-4)
    assert SPHERE == pytest.approx(0.0416, abs=1e-4)


def test_empty_field_all_solid():
    grid = voxelize(CombinedField([]), 0.25, 8)
    assert grid.occupancy.all() and measure_porosity(grid) == 0.0


def test_single_pore_porosity():
    grid = voxelize(centered(), 0.25, 64)
    assert grid.porosity == pytest.approx(SPHERE, abs=0.004)


def test_huge_level_all_solid():
    assert voxelize(centered(), 1e9, 16).occupancy.all()


def test_voxel_centres():
    grid = voxelize(centered(), 0.25, 4, extent=2.0, origin=(-1, -1, -1))
    assert grid.centers(0).tolist() == [-0.75, -0.25, 0.25, 0.75]


def test_resolution_too_small():
    with pytest.raises(ValueError):
        voxelize(centered(), 0.25, 1)


def test_porosity_synthetic():
    occ = np.zeros((4, 4, 4), dtype=bool)
    assert measure_porosity(VoxelGrid(occ)) == 1.0
    assert measure_porosity(VoxelGrid(~occ)) == 0.0
    occ[:2] = True
    assert measure_porosity(VoxelGrid(occ)) == 0.5


def test_resolution_refinement():
    rng = np.random.default_rng(4)
    fld = make_field(rng.random((20, 3)), 30.0, [(i, i + 1) for i in range(19)], mu=30.0)
    for r in (16, 32):
        a = voxelize(fld, 0.25, r).porosity
        b = voxelize(fld, 0.25, 2 * r).porosity
        assert abs(a - b) <= 2.0 / r


def test_validate_single_component():
    occ = np.zeros((6, 6, 6), dtype=bool)
    occ[1:4, 1:4, 1:4] = True
    grid, report = validate_solid(VoxelGrid(occ))
    assert report.valid and report.removed_components == 0
    assert np.array_equal(grid.occupancy, occ)


def test_validate_interior_island_removed():
    occ = np.zeros((10, 10, 10), dtype=bool)
    occ[:, :, :3] = True
    occ[5:7, 5:7, 6:8] = True
    grid, report = validate_solid(VoxelGrid(occ))
    assert report.valid and report.removed_components == 1 and report.removed_voxels == 8
    assert not grid.occupancy[5:7, 5:7, 6:8].any()
    assert grid.occupancy[:, :, :3].all()


def test_validate_boundary_island_invalid():
    occ = np.zeros((10, 10, 10), dtype=bool)
    occ[:, :, :3] = True
    occ[4:6, 4:6, 8:] = True
    _, report = validate_solid(VoxelGrid(occ))
    assert not report.valid and report.removed_touching_surface


def test_validate_diagonal_contact_is_two_components():
    occ = np.zeros((6, 6, 6), dtype=bool)
    occ[:3, :3, :3] = True
    occ[3, 3, 3] = True
    _, report = validate_solid(VoxelGrid(occ))
    assert report.removed_components == 1


def test_validate_idempotent():
    occ = np.random.default_rng(0).random((12, 12, 12)) < 0.4
    once, _ = validate_solid(VoxelGrid(occ))
    twice, report = validate_solid(once)
    assert np.array_equal(once.occupancy, twice.occupancy) and report.removed_components == 0


def test_validate_empty():
    with pytest.raises(EmptySolid):
        validate_solid(VoxelGrid(np.zeros((3, 3, 3), dtype=bool)))


def test_face_mismatch():
    occ = np.zeros((4, 4, 4), dtype=bool)
    occ[0, 1, 1] = True
    assert face_mismatch(VoxelGrid(occ)) == (1 / 16, 0.0, 0.0)


def test_mesh_empty():
    with pytest.raises(EmptySurface):
        extract_mesh(CombinedField([]), 0.25, 8)


def test_mesh_single_pore_closed_sphere():
    mesh = extract_mesh(centered(), 0.25, 64)
    assert mesh.n_vertices > 0
    assert mesh.is_closed_manifold()
    assert mesh.euler_characteristic() == 2
    # normals point into the void, so the enclosed pore has negative volume
    assert -mesh.signed_volume() == pytest.approx(SPHERE, rel=0.05)


def test_mesh_capped_solid():
    mesh = extract_mesh(centered(), 0.25, 48, close_boundary=True)
    assert mesh.is_closed_manifold()
    assert mesh.signed_volume() == pytest.approx(1.0 - SPHERE, rel=0.01)


def test_write_obj(tmp_path):
    mesh = extract_mesh(centered(), 0.25, 16)
    path = tmp_path / "m.obj"
    nbytes = write_obj(mesh, path)
    text = path.read_text()
    assert nbytes == len(text.encode())
    lines = text.splitlines()
    faces = [ln for ln in lines if ln.startswith("f ")]
    assert len(faces) == mesh.n_faces
    assert min(int(x) for ln in faces for x in ln.split()[1:]) == 1
