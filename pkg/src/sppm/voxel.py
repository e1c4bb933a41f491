"""Voxel sampling of the implicit field, porosity, solid validation and meshing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from sppm.field import CombinedField


class EmptySolid(ValueError):
    pass


class EmptySurface(ValueError):
    pass


# face-adjacent neighbours only: a printer cannot realise edge/corner contacts
SIX_CONNECTIVITY = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Boolean occupancy (``True`` = solid) with voxel centres at ``origin + (i + 0.5) * pitch``."""

    occupancy: np.ndarray
    pitch: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3:
            raise ValueError("occupancy must be a 3D array")
        object.__setattr__(self, "occupancy", occ)
        pitch = np.broadcast_to(np.asarray(self.pitch, dtype=float), (3,))
        object.__setattr__(self, "pitch", tuple(float(p) for p in pitch))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def resolution(self) -> tuple:
        return self.occupancy.shape

    @property
    def porosity(self) -> float:
        return measure_porosity(self)

    def centers(self, axis: int) -> np.ndarray:
        n = self.occupancy.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.pitch[axis]

    def with_occupancy(self, occupancy) -> "VoxelGrid":
        return VoxelGrid(occupancy, self.pitch, self.origin)


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    removed_components: int
    removed_touching_surface: bool
    removed_voxels: int = 0


def _resolution(resolution) -> tuple:
    res = tuple(int(r) for r in np.broadcast_to(np.asarray(resolution), (3,)))
    if min(res) < 2:
        raise ValueError(f"resolution must be at least 2 per axis, got {res}")
    return res


def sample_field(fld: CombinedField, resolution, extent=None, origin=(0.0, 0.0, 0.0)):
    """Field values at the voxel centres of a grid covering ``extent`` (default: the cell)."""
    res = _resolution(resolution)
    ext = np.broadcast_to(
        np.asarray(fld.cell_side if extent is None else extent, dtype=float), (3,)
    )
    pitch = ext / np.asarray(res)
    return fld.sample_grid(res, pitch, origin), tuple(pitch)


def voxelize(fld: CombinedField, level: float, resolution, extent=None, origin=(0.0, 0.0, 0.0)) -> VoxelGrid:
    """Solid where the field at the voxel centre is below ``level``."""
    values, pitch = sample_field(fld, resolution, extent, origin)
    return VoxelGrid(values < level, pitch, origin)


def measure_porosity(grid: VoxelGrid) -> float:
    occ = grid.occupancy
    return float(occ.size - np.count_nonzero(occ)) / occ.size


def validate_solid(grid: VoxelGrid):
    """Keep the largest 6-connected solid component.

    The result is invalid when any discarded component reaches the outermost
    voxel layer, since dropping it would break the periodic boundary.  Ties
    between equally large components go to the lowest label.
    """
    labels, count = ndimage.label(grid.occupancy, structure=SIX_CONNECTIVITY)
    if count == 0:
        raise EmptySolid("grid has no solid voxels")
    if count == 1:
        return grid, ValidationReport(True, 0, False, 0)
    sizes = np.bincount(labels.ravel())[1:]
    keep = int(np.argmax(sizes)) + 1
    removed = grid.occupancy & (labels != keep)
    border = np.zeros(count + 1, dtype=bool)
    for face in (labels[0], labels[-1], labels[:, 0], labels[:, -1], labels[:, :, 0], labels[:, :, -1]):
        border[np.unique(face)] = True
    border[0] = False
    border[keep] = False
    touching = bool(border.any())
    report = ValidationReport(not touching, count - 1, touching, int(removed.sum()))
    return grid.with_occupancy(labels == keep), report


def face_mismatch(grid: VoxelGrid) -> tuple:
    """Per-axis fraction of outer-layer voxels whose solid state differs on opposite faces."""
    occ = grid.occupancy
    out = []
    for axis in range(3):
        a = np.take(occ, 0, axis=axis)
        b = np.take(occ, -1, axis=axis)
        out.append(float(np.count_nonzero(a != b)) / a.size)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def signed_volume(self) -> float:
        v = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def edge_use_counts(self) -> np.ndarray:
        """How many triangles share each undirected edge."""
        f = self.faces
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges.sort(axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return counts

    def is_closed_manifold(self) -> bool:
        return self.n_faces > 0 and bool((self.edge_use_counts() == 2).all())

    def euler_characteristic(self) -> int:
        f = self.faces
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges.sort(axis=1)
        n_edges = len(np.unique(edges, axis=0))
        return self.n_vertices - n_edges + self.n_faces


def extract_mesh(fld: CombinedField, level: float, resolution, extent=None,
                 origin=(0.0, 0.0, 0.0), close_boundary: bool = False) -> TriangleMesh:
    """Marching-cubes triangulation of ``field == level`` over the sampled grid.

    With ``close_boundary`` the grid is padded with void so the solid phase is
    capped where it meets the cell boundary, which yields a closed mesh of the
    printable part.
    """
    values, pitch = sample_field(fld, resolution, extent, origin)
    return mesh_from_values(values, pitch, level, origin, close_boundary)


def mesh_from_values(values, pitch, level: float, origin=(0.0, 0.0, 0.0),
                     close_boundary: bool = False) -> TriangleMesh:
    """Marching cubes on field values sampled at voxel centres."""
    from skimage.measure import marching_cubes

    values = np.asarray(values, dtype=float)
    if not ((values > level).any() and (values < level).any()):
        raise EmptySurface("level set does not cross the sampled grid")
    shift = 0.5
    if close_boundary:
        # mirror solid boundary values about the level so the cap lands on the cell face
        values = np.pad(values, 1, mode="edge")
        rim = np.ones(values.shape, dtype=bool)
        rim[1:-1, 1:-1, 1:-1] = False
        solid_rim = rim & (values < level)
        values[solid_rim] = 2.0 * level - values[solid_rim]
        shift = -0.5
    verts, faces, _, _ = marching_cubes(values, level=level, allow_degenerate=False)
    verts = np.asarray(origin, dtype=float) + (verts + shift) * np.asarray(pitch)
    # faces come out wound with normals pointing from solid (low) to void (high)
    return TriangleMesh(verts, faces.astype(np.int64))


def write_obj(mesh: TriangleMesh, path) -> int:
    """ASCII OBJ with ``v``/``f`` records and 1-based indices; returns bytes written."""
    lines = ["v %.6f %.6f %.6f" % tuple(v) for v in mesh.vertices]
    lines += ["f %d %d %d" % tuple(f) for f in (mesh.faces + 1)]
    data = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)
