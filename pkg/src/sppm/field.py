"""Implicit pore/tunnel field and level-set classification.

A pore is an isotropic Gaussian bump ``exp(-w |p - c|^2)`` and a tunnel is
``exp(-mu * dist(p, segment))``.  The combined field is their sum; space
where the field stays below the level-set value ``C`` is solid material.

Every kernel is truncated to exactly zero once its value drops below
``cutoff_epsilon``.  The pointwise and the grid evaluators share the same
scalar arithmetic (numba kernels in :mod:`sppm._kernels`), so a voxel grid
classifies each voxel centre exactly like :func:`classify` would.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from sppm import _kernels

DEFAULT_CUTOFF = 1e-4
SURFACE_TOL = 1e-9


class RegionClass(enum.Enum):
    SOLID = "solid"
    VOID = "void"
    SURFACE = "surface"


class Region(enum.Enum):
    """Where a pore was sampled."""

    INTERIOR = "interior"
    FACE = "face"


@dataclass(frozen=True)
class Pore:
    """Gaussian pore.

    ``axis``/``side`` are only meaningful for face pores: the pore lies on
    the plane ``center[axis] == side * L``.
    """

    center: tuple
    weight: float
    region: Region = Region.INTERIOR
    axis: int = -1
    side: int = -1

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"pore weight must be positive, got {self.weight}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("pore center must be a 3-vector")

    @property
    def is_face(self) -> bool:
        return self.region is Region.FACE


@dataclass(frozen=True)
class Tunnel:
    """Tunnel between two pores, given by their indices in the pore list."""

    i: int
    j: int
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"tunnel weight must be positive, got {self.weight}")
        if self.i == self.j:
            raise ValueError("tunnel endpoints must be distinct pores")

    @property
    def key(self) -> tuple:
        return (min(self.i, self.j), max(self.i, self.j))


def pore_radius(weight: float, level: float) -> float:
    """Radius of the ``level`` iso-sphere of a lone pore, ``sqrt(ln(1/C)/w)``."""
    return math.sqrt(math.log(1.0 / level) / weight)


def pore_cutoff_radius(weight: float, eps: float) -> float:
    if eps <= 0:
        return math.inf
    return math.sqrt(math.log(1.0 / eps) / weight)


def tunnel_cutoff_radius(weight: float, eps: float) -> float:
    if eps <= 0:
        return math.inf
    return math.log(1.0 / eps) / weight


def eval_pore_kernel(pore: Pore, p, cutoff_epsilon: float = DEFAULT_CUTOFF) -> float:
    c = pore.center
    return _kernels.pore_value(
        float(p[0]), float(p[1]), float(p[2]), c[0], c[1], c[2], pore.weight, cutoff_epsilon
    )


def eval_tunnel_kernel(a, b, mu: float, p, cutoff_epsilon: float = DEFAULT_CUTOFF) -> float:
    """Tunnel kernel of the segment ``a``-``b`` at ``p``; ``a == b`` is allowed."""
    if not mu > 0:
        raise ValueError("tunnel weight must be positive")
    return _kernels.tunnel_value(
        float(p[0]), float(p[1]), float(p[2]),
        float(a[0]), float(a[1]), float(a[2]),
        float(b[0]), float(b[1]), float(b[2]),
        mu, cutoff_epsilon,
    )


@dataclass(frozen=True, eq=False)
class CombinedField:
    """Immutable sum of pore and tunnel kernels over a cubic cell of side ``cell_side``."""

    pores: tuple
    tunnels: tuple = ()
    cutoff_epsilon: float = DEFAULT_CUTOFF
    cell_side: float = 1.0
    _arrays: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pores", tuple(self.pores))
        object.__setattr__(self, "tunnels", tuple(self.tunnels))
        if self.cutoff_epsilon < 0:
            raise ValueError("cutoff_epsilon must be non-negative")
        if not self.cell_side > 0:
            raise ValueError("cell_side must be positive")
        n = len(self.pores)
        for t in self.tunnels:
            if not (0 <= t.i < n and 0 <= t.j < n):
                raise ValueError(f"tunnel {t.key} references a missing pore")
        centers = np.array([p.center for p in self.pores], dtype=float).reshape(-1, 3)
        weights = np.array([p.weight for p in self.pores], dtype=float)
        ends = np.array([(t.i, t.j) for t in self.tunnels], dtype=np.int64).reshape(-1, 2)
        self._arrays.update(
            centers=centers,
            weights=weights,
            seg_a=np.ascontiguousarray(centers[ends[:, 0]]) if len(ends) else np.zeros((0, 3)),
            seg_b=np.ascontiguousarray(centers[ends[:, 1]]) if len(ends) else np.zeros((0, 3)),
            mus=np.array([t.weight for t in self.tunnels], dtype=float),
        )
        for arr in self._arrays.values():
            arr.setflags(write=False)

    @property
    def centers(self) -> np.ndarray:
        return self._arrays["centers"]

    def translated(self, offset) -> "CombinedField":
        offset = np.asarray(offset, dtype=float)
        pores = [
            Pore(tuple(np.asarray(p.center) + offset), p.weight, p.region, p.axis, p.side)
            for p in self.pores
        ]
        return CombinedField(pores, self.tunnels, self.cutoff_epsilon, self.cell_side)

    def values(self, points) -> np.ndarray:
        """Field values at an ``(N, 3)`` array of points."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
        a = self._arrays
        return _kernels.field_at_points(
            pts, a["centers"], a["weights"], a["seg_a"], a["seg_b"], a["mus"],
            self.cutoff_epsilon,
        )

    def sample_grid(self, shape, pitch, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
        """Field values at voxel centres ``origin + (i + 0.5) * pitch``.

        ``pitch`` may be a scalar or one value per axis.  Returns an array of
        ``shape`` indexed ``[ix, iy, iz]``.
        """
        shape = tuple(int(s) for s in shape)
        pitch = np.broadcast_to(np.asarray(pitch, dtype=float), (3,)).copy()
        origin = np.asarray(origin, dtype=float).reshape(3).copy()
        a = self._arrays
        out = np.zeros(shape, dtype=float)
        _kernels.field_on_grid(
            out, origin, pitch, a["centers"], a["weights"], a["seg_a"], a["seg_b"],
            a["mus"], self.cutoff_epsilon,
        )
        return out

    def sample_axes(self, xs, ys, zs) -> np.ndarray:
        """Field on the tensor grid of three ascending coordinate vectors."""
        axes = [np.ascontiguousarray(np.asarray(a, dtype=float).reshape(-1)) for a in (xs, ys, zs)]
        for a in axes:
            if (np.diff(a) < 0).any():
                raise ValueError("grid axes must be ascending")
        a = self._arrays
        out = np.zeros(tuple(len(v) for v in axes), dtype=float)
        _kernels.field_on_axes(
            out, *axes, a["centers"], a["weights"], a["seg_a"], a["seg_b"], a["mus"],
            self.cutoff_epsilon,
        )
        return out


def eval_combined(fld: CombinedField, p) -> float:
    return float(fld.values(np.asarray(p, dtype=float).reshape(1, 3))[0])


def classify_value(value: float, level: float, tol: float = SURFACE_TOL) -> RegionClass:
    if abs(value - level) <= tol:
        return RegionClass.SURFACE
    return RegionClass.SOLID if value < level else RegionClass.VOID


def classify(fld: CombinedField, p, level: float, tol: float = SURFACE_TOL) -> RegionClass:
    """Solid where the field is below ``level``, void above, surface at it."""
    if not level > 0:
        raise ValueError("level-set value must be positive")
    return classify_value(eval_combined(fld, p), level, tol)


def make_field(
    centers: Sequence,
    omega: float,
    edges: Optional[Sequence] = None,
    mu: Optional[float] = None,
    cutoff_epsilon: float = DEFAULT_CUTOFF,
    cell_side: float = 1.0,
) -> CombinedField:
    """Convenience constructor with uniform pore and tunnel weights."""
    pores = [Pore(tuple(c), omega) for c in centers]
    tunnels = [Tunnel(int(i), int(j), mu) for i, j in (edges or ())]
    return CombinedField(pores, tunnels, cutoff_epsilon, cell_side)
