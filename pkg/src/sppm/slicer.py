"""Mesh-free layer images: model shape intersected with an SPPM assembly.

World coordinates are millimetres.  Unit cell ``(i, j, k)`` of the assembly
occupies ``[i S, (i + 1) S] x ...`` with ``S`` the physical cell size, and a
world point maps to tile-local coordinates ``(q - i S) L / S``.  A point on a
plane shared by two cells belongs to the lower-index cell.

Pixel ``(row j, column i)`` of layer ``k`` samples the point
``(x0 + (i + 0.5) p, y0 + (j + 0.5) p, (k + 0.5) t)``; it is 255 when the
point is inside the model and solid in its tile, else 0.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from sppm import _kernels
from sppm.tiling import Assembly, TileSet


class OpenMesh(ValueError):
    pass


class SliceError(OSError):
    pass


@dataclass(frozen=True, eq=False)
class ModelField:
    """Inside test over world points plus an axis-aligned bounding box."""

    inside_fn: Callable
    bbox: tuple
    description: str = ""
    mesh: Optional[np.ndarray] = None  # (M, 3, 3) triangles for mesh models

    def inside(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.asarray(self.inside_fn(pts), dtype=bool)

    def inside_grid(self, xs, ys, z) -> np.ndarray:
        """Inside test on a ``len(xs) x len(ys)`` pixel grid at height ``z``."""
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel(), np.full(X.size, float(z))], axis=1)
        return self.inside(pts).reshape(X.shape)


def box(lo, hi) -> ModelField:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return ModelField(lambda p: ((p >= lo) & (p <= hi)).all(axis=1), (tuple(lo), tuple(hi)),
                      "box:" + ",".join("%g" % v for v in (*lo, *hi)))


def sphere(center, radius: float) -> ModelField:
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2
    return ModelField(lambda p: ((p - c) ** 2).sum(axis=1) <= r2,
                      (tuple(c - radius), tuple(c + radius)),
                      "sphere:" + ",".join("%g" % v for v in (*c, radius)))


def cylinder(center_xy, radius: float, z0: float, z1: float) -> ModelField:
    """Upright cylinder with axis parallel to z."""
    cx, cy = (float(v) for v in center_xy)
    r2 = float(radius) ** 2

    def inside(p):
        return ((p[:, 0] - cx) ** 2 + (p[:, 1] - cy) ** 2 <= r2) & (p[:, 2] >= z0) & (p[:, 2] <= z1)

    return ModelField(inside, ((cx - radius, cy - radius, z0), (cx + radius, cy + radius, z1)),
                      "cylinder:" + ",".join("%g" % v for v in (cx, cy, radius, z0, z1)))


def empty_model() -> ModelField:
    return ModelField(lambda p: np.zeros(len(p), dtype=bool), ((0, 0, 0), (0, 0, 0)), "empty")


def mesh_model(vertices, faces, description: str = "mesh") -> ModelField:
    """Closed triangle mesh; a point is inside when a vertical ray crosses the surface an odd number of times.

    Raises :class:`OpenMesh` when a probe line crosses the surface an odd
    number of times, which a closed mesh cannot do.
    """
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=np.int64)
    tris = np.ascontiguousarray(v[f])
    lo, hi = v.min(axis=0), v.max(axis=0)
    # probe a coarse grid of vertical lines for parity
    g = np.linspace(0.0, 1.0, 13)[1:-1] + 1e-3
    px, py = np.meshgrid(lo[0] + g * (hi[0] - lo[0]), lo[1] + g * (hi[1] - lo[1]), indexing="ij")
    probes = np.stack([px.ravel(), py.ravel(), np.full(px.size, lo[2] - 1.0)], axis=1)
    _, total = _kernels.crossing_counts(tris, probes)
    if (total % 2).any():
        raise OpenMesh(f"{int((total % 2).sum())} probe lines cross the mesh an odd number of times")

    def inside(p):
        above, total = _kernels.crossing_counts(tris, np.ascontiguousarray(p))
        if (total % 2).any():
            raise OpenMesh("query line crosses the mesh an odd number of times")
        return above % 2 == 1

    return ModelField(inside, (tuple(lo), tuple(hi)), description, tris)


def read_obj(path):
    """Vertices and triangles of an OBJ file (``v`` and ``f`` records; polygons fanned)."""
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                faces += [[idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1)]
    return np.array(verts, dtype=float), np.array(faces, dtype=np.int64)


def load_model_field(source) -> ModelField:
    """Model from a primitive spec (``box:``, ``sphere:``, ``cylinder:``), an OBJ path, or a ModelField."""
    if isinstance(source, ModelField):
        return source
    text = str(source)
    kind, _, args = text.partition(":")
    if kind in ("box", "sphere", "cylinder") and args:
        vals = [float(v) for v in args.split(",")]
        if kind == "box" and len(vals) == 6:
            return box(vals[:3], vals[3:])
        if kind == "sphere" and len(vals) == 4:
            return sphere(vals[:3], vals[3])
        if kind == "cylinder" and len(vals) == 5:
            return cylinder(vals[:2], vals[2], vals[3], vals[4])
        raise ValueError(f"bad {kind} parameters: {args}")
    if text == "empty":
        return empty_model()
    v, f = read_obj(text)
    return mesh_model(v, f, os.path.abspath(text))


@dataclass
class SliceJob:
    """Layer thickness, pixel pitch and cell size in millimetres."""

    layer_thickness: float
    pixel_pitch: float
    cell_size: float
    out_dir: str = "slices"
    image_size: Optional[tuple] = None  # (width, height) in pixels
    origin: tuple = (0.0, 0.0)
    n_layers: Optional[int] = None
    assembly_ref: str = ""

    def __post_init__(self):
        for name in ("layer_thickness", "pixel_pitch", "cell_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def resolve(self, assembly: Assembly) -> "SliceJob":
        """Fill unset image size and layer count from the assembly extent."""
        nx, ny, nz = assembly.dims
        size = self.image_size or (
            math.ceil(nx * self.cell_size / self.pixel_pitch - 1e-9),
            math.ceil(ny * self.cell_size / self.pixel_pitch - 1e-9),
        )
        layers = self.n_layers or math.ceil(nz * self.cell_size / self.layer_thickness - 1e-9)
        return SliceJob(self.layer_thickness, self.pixel_pitch, self.cell_size, self.out_dir,
                        tuple(int(s) for s in size), tuple(self.origin), int(layers), self.assembly_ref)

    def xs(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.image_size[0]) + 0.5) * self.pixel_pitch

    def ys(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.image_size[1]) + 0.5) * self.pixel_pitch

    def z(self, layer: int) -> float:
        return (layer + 0.5) * self.layer_thickness

    def covers(self, model: ModelField) -> bool:
        lo, hi = model.bbox
        x1 = self.origin[0] + self.image_size[0] * self.pixel_pitch
        y1 = self.origin[1] + self.image_size[1] * self.pixel_pitch
        return (lo[0] >= self.origin[0] - 1e-9 and lo[1] >= self.origin[1] - 1e-9
                and hi[0] <= x1 + 1e-9 and hi[1] <= y1 + 1e-9)


def locate(q: np.ndarray, n: int, cell_size: float, cell_side: float):
    """Owning cell index (``-1`` outside) and tile-local coordinate along one axis."""
    q = np.asarray(q, dtype=float)
    idx = np.ceil(q / cell_size).astype(np.int64) - 1
    idx = np.where(q == 0.0, 0, idx)
    idx = np.where((q < 0.0) | (idx >= n), -1, idx)
    local = (q - idx * cell_size) * (cell_side / cell_size)
    return idx, local


def render_layer(model: ModelField, assembly: Assembly, tile_set: TileSet, job: SliceJob,
                 layer: int) -> np.ndarray:
    """One layer as a ``(height, width)`` uint8 array."""
    xs, ys, z = job.xs(), job.ys(), job.z(layer)
    img = np.zeros((len(xs), len(ys)), dtype=bool)  # indexed [x, y] until the end
    spec = tile_set.tiles[0].unit.spec
    L, level = spec.cell_side, spec.level
    nx, ny, nz = assembly.dims
    tz, lz = locate(np.array([z]), nz, job.cell_size, L)
    if tz[0] >= 0:
        inside = model.inside_grid(xs, ys, z)
        ix, lx = locate(xs, nx, job.cell_size, L)
        iy, ly = locate(ys, ny, job.cell_size, L)
        for a in range(nx):
            sx = np.flatnonzero(ix == a)
            if not len(sx):
                continue
            for b in range(ny):
                sy = np.flatnonzero(iy == b)
                if not len(sy):
                    continue
                block = inside[np.ix_(sx, sy)]
                if not block.any():
                    continue
                tile = tile_set.tiles[int(assembly.grid[a, b, tz[0]])]
                vals = tile.unit.field.sample_axes(lx[sx], ly[sy], lz)[:, :, 0]
                img[np.ix_(sx, sy)] = block & (vals < level)
    return np.where(img.T, 255, 0).astype(np.uint8)


def write_png(img: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(path, format="PNG", optimize=False, compress_level=6)


@dataclass
class SliceResult:
    paths: list
    manifest: dict
    seconds: float = 0.0
    bytes_written: int = 0


def slice_assembly(model, assembly: Assembly, tile_set: TileSet, job: SliceJob) -> SliceResult:
    """Render every layer to ``slice_00000.png`` upward and write ``manifest.json``.

    Only one layer image is held at a time; no mesh is built.
    """
    t0 = time.perf_counter()
    model = load_model_field(model)
    job = job.resolve(assembly)
    if not job.covers(model) and model.description != "empty":
        raise ValueError("image does not cover the model bounding box")
    os.makedirs(job.out_dir, exist_ok=True)
    paths, sums = [], []
    nbytes = 0
    for k in range(job.n_layers):
        img = render_layer(model, assembly, tile_set, job, k)
        path = os.path.join(job.out_dir, "slice_%05d.png" % k)
        try:
            write_png(img, path)
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise SliceError(f"layer {k}: {exc}") from exc
        nbytes += len(data)
        paths.append(path)
        sums.append(hashlib.sha256(data).hexdigest())
    w, h = job.image_size
    manifest = {
        "layers": job.n_layers,
        "image_size": [w, h],
        "pixel_pitch_mm": job.pixel_pitch,
        "layer_thickness_mm": job.layer_thickness,
        "physical_size_mm": [w * job.pixel_pitch, h * job.pixel_pitch,
                             job.n_layers * job.layer_thickness],
        "cell_size_mm": job.cell_size,
        "assembly_dims": list(assembly.dims),
        "assembly": job.assembly_ref,
        "model": model.description,
        "files": [{"name": os.path.basename(p), "sha256": s} for p, s in zip(paths, sums)],
    }
    with open(os.path.join(job.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return SliceResult(paths, manifest, time.perf_counter() - t0, nbytes)


def recheck_layer(img: np.ndarray, model: ModelField, assembly: Assembly, tile_set: TileSet,
                  job: SliceJob, layer: int) -> int:
    """Recompute every pixel pointwise and return the number of disagreements."""
    job = job.resolve(assembly)
    spec = tile_set.tiles[0].unit.spec
    L, level = spec.cell_side, spec.level
    xs, ys, z = job.xs(), job.ys(), job.z(layer)
    nx, ny, nz = assembly.dims
    ix, lx = locate(xs, nx, job.cell_size, L)
    iy, ly = locate(ys, ny, job.cell_size, L)
    tz, lz = locate(np.array([z]), nz, job.cell_size, L)
    bad = 0
    for j in range(len(ys)):
        pts = np.stack([xs, np.full(len(xs), ys[j]), np.full(len(xs), z)], axis=1)
        inside = model.inside(pts)
        for i in range(len(xs)):
            want = False
            if inside[i] and ix[i] >= 0 and iy[j] >= 0 and tz[0] >= 0:
                fld = tile_set.tiles[int(assembly.grid[ix[i], iy[j], tz[0]])].unit.field
                want = fld.values([[lx[i], ly[j], lz[0]]])[0] < level
            bad += (img[j, i] == 255) != want
            bad += img[j, i] not in (0, 255)
    return bad


def assembly_values(assembly: Assembly, tile_set: TileSet, resolution: int):
    """Field values of a whole assembly on a grid of ``resolution`` voxels per cell, and the pitch."""
    from sppm.voxel import sample_field

    r = int(resolution)
    nx, ny, nz = assembly.dims
    out = np.empty((nx * r, ny * r, nz * r))
    blocks = {}
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                t = int(assembly.grid[x, y, z])
                if t not in blocks:
                    blocks[t] = sample_field(tile_set.tiles[t].unit.field, r)[0]
                out[x * r:(x + 1) * r, y * r:(y + 1) * r, z * r:(z + 1) * r] = blocks[t]
    return out, tile_set.tiles[0].unit.spec.cell_side / r


BENCH_COLUMNS = ("units", "resolution", "mesh_bytes", "meshfree_bytes", "mesh_ms", "meshfree_ms",
                 "n_triangles", "n_layers")


def benchmark(assembly: Assembly, tile_set: TileSet, out_dir, resolution: int = 32) -> dict:
    """Mesh path (marching cubes + OBJ) against the mesh-free PNG stack at matched resolution.

    Both paths start from the assembled tile fields.  The PNG stack uses one
    pixel and one layer per voxel, so both outputs carry the same sampling.
    """
    from sppm.voxel import mesh_from_values, write_obj

    os.makedirs(out_dir, exist_ok=True)
    spec = tile_set.tiles[0].unit.spec
    t0 = time.perf_counter()
    values, pitch = assembly_values(assembly, tile_set, resolution)
    mesh = mesh_from_values(values, pitch, spec.level, close_boundary=True)
    del values
    mesh_bytes = write_obj(mesh, os.path.join(out_dir, "assembly.obj"))
    mesh_ms = (time.perf_counter() - t0) * 1e3

    L = spec.cell_side
    t0 = time.perf_counter()
    nx, ny, nz = assembly.dims
    job = SliceJob(L / resolution, L / resolution, L, out_dir=os.path.join(out_dir, "png"))
    res = slice_assembly(box((0, 0, 0), (nx * L, ny * L, nz * L)), assembly, tile_set, job)
    free_ms = (time.perf_counter() - t0) * 1e3
    return {"units": nx * ny * nz, "resolution": resolution, "mesh_bytes": mesh_bytes,
            "meshfree_bytes": res.bytes_written, "mesh_ms": round(mesh_ms, 1),
            "meshfree_ms": round(free_ms, 1), "n_triangles": mesh.n_faces,
            "n_layers": len(res.paths)}
