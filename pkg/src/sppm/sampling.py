"""Dart-throwing pore placement with periodic face duplication.

Face patterns are sampled once per colour in 2D face coordinates and then
stamped onto both faces of an axis by a pure translation of ``+L``, so the
two opposite faces carry bit-identical pore coordinates.  Interior pores are
thrown into the cube ``[d, L - d]^3`` and must keep the minimum distance to
every face pore as well as to each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from sppm.field import Pore, Region, Tunnel

# in-face (u, v) coordinates for a pattern stamped on faces normal to each axis
FACE_AXES = {0: (1, 2), 1: (0, 2), 2: (0, 1)}

_BATCH = 64


class SamplingInfeasible(RuntimeError):
    pass


class FaceCollision(ValueError):
    pass


@dataclass(frozen=True)
class CellPartition:
    """Interior sampling cube ``[d, L - d]^3`` inside the cell ``[0, L]^3``."""

    cell_side: float
    band_depth: float

    def __post_init__(self):
        if not 0 < self.band_depth < self.cell_side / 2:
            raise ValueError(
                f"band depth must lie in (0, L/2), got d={self.band_depth}, L={self.cell_side}"
            )

    @property
    def interior_bounds(self):
        return self.band_depth, self.cell_side - self.band_depth

    @property
    def interior_side(self) -> float:
        return self.cell_side - 2 * self.band_depth


@dataclass(frozen=True)
class SamplingConfig:
    n_interior: int
    n_face_per_axis: int
    min_distance: float
    edge_margin: float = 0.0
    seed: int = 0
    max_attempts_per_pore: int = 10_000
    cell_side: float = 1.0

    def __post_init__(self):
        if self.n_interior < 0 or self.n_face_per_axis < 0:
            raise ValueError("pore counts must be non-negative")
        if not self.min_distance > 0:
            raise ValueError("min_distance must be positive")
        if self.edge_margin < 0:
            raise ValueError("edge_margin must be non-negative")
        if self.max_attempts_per_pore < 1:
            raise ValueError("max_attempts_per_pore must be positive")


@dataclass(frozen=True)
class FacePattern:
    """Pore layout shared by every face painted with ``color``.

    ``positions`` are ``(u, v)`` pairs in ``[0, L]^2``; ``tunnels`` index into
    them.  ``axis`` is unset for a canonical pattern.
    """

    color: int
    positions: np.ndarray
    tunnels: tuple = ()
    axis: Optional[int] = None
    cell_side: float = 1.0
    edge_margin: float = 0.0
    min_distance: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "tunnels", tuple(tuple(int(i) for i in t) for t in self.tunnels))

    def __len__(self):
        return len(self.positions)

    def with_tunnels(self, tunnels) -> "FacePattern":
        return FacePattern(self.color, self.positions, tuple(tunnels), self.axis,
                           self.cell_side, self.edge_margin, self.min_distance)

    def check(self, tol: float = 1e-12) -> None:
        """Raise ``ValueError`` if the margin or spacing invariant is broken."""
        pos = self.positions
        if len(pos):
            m = self.edge_margin
            if (pos < m - tol).any() or (pos > self.cell_side - m + tol).any():
                raise ValueError("face pore closer to a face edge than the edge margin")
        if len(pos) > 1 and pdist(pos).min() < self.min_distance - tol:
            raise ValueError("face pores closer than the minimum distance")


def default_edge_margin(min_distance: float, omega: float, level: float) -> float:
    """Keep face pores where their kernel is below ``level / 8`` on the adjacent faces.

    Pores on neighbouring faces near a shared edge are then at least
    ``margin * sqrt(2)`` apart, which ``min_distance / sqrt(2)`` guarantees.
    """
    return max(min_distance / math.sqrt(2.0), math.sqrt(math.log(8.0 / level) / omega))


def default_min_distance(n: int, volume: float) -> float:
    """Dart-throwing distance heuristic ``0.7 (V / n)^(1/3)``."""
    return 0.7 * (volume / max(n, 1)) ** (1.0 / 3.0)


def _throw(rng, count, low, high, dim, min_distance, max_attempts, fixed):
    """Sequential dart throwing; candidates are drawn in batches for speed."""
    pts = np.empty((count, dim))
    others = np.asarray(fixed, dtype=float).reshape(-1, dim)
    r2 = min_distance * min_distance
    for k in range(count):
        attempts = 0
        placed = False
        while attempts < max_attempts:
            batch = min(_BATCH, max_attempts - attempts)
            cand = rng.uniform(low, high, size=(batch, dim))
            ref = np.vstack([others, pts[:k]])
            if len(ref):
                d2 = ((cand[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
                ok = np.flatnonzero((d2 >= r2).all(axis=1))
            else:
                ok = np.arange(batch)
            if len(ok):
                pts[k] = cand[ok[0]]
                placed = True
                break
            attempts += batch
        if not placed:
            raise SamplingInfeasible(
                f"could not place pore {k + 1} of {count} after {max_attempts} attempts "
                f"(min distance {min_distance:g})"
            )
    return pts


def sample_face_pattern(config: SamplingConfig, color: int) -> FacePattern:
    """Dart-throw ``n_face_per_axis`` points on a canonical ``L x L`` face."""
    L = config.cell_side
    m = config.edge_margin
    n = config.n_face_per_axis
    if n and not m < L - m:
        raise SamplingInfeasible(f"edge margin {m:g} leaves no room on a face of side {L:g}")
    rng = np.random.default_rng(config.seed)
    pos = _throw(rng, n, m, L - m, 2, config.min_distance, config.max_attempts_per_pore, ())
    return FacePattern(color, pos, (), None, L, m, config.min_distance)


def sample_interior(config: SamplingConfig, partition: CellPartition, fixed_pores=(),
                    omega: float = 30.0) -> list:
    """Dart-throw interior pores in ``[d, L - d]^3``.

    The pores keep ``min_distance`` from each other and from ``fixed_pores``
    (pores or raw points).
    """
    lo, hi = partition.interior_bounds
    fixed = [p.center if isinstance(p, Pore) else tuple(p) for p in fixed_pores]
    rng = np.random.default_rng(config.seed)
    pts = _throw(rng, config.n_interior, lo, hi, 3, config.min_distance,
                 config.max_attempts_per_pore, fixed)
    return [Pore(tuple(p), omega, Region.INTERIOR) for p in pts]


def face_points(pattern: FacePattern, axis: int, side: int, L: float) -> np.ndarray:
    """3D coordinates of a pattern stamped on face ``side`` (0 or 1) normal to ``axis``."""
    u, v = FACE_AXES[axis]
    pts = np.zeros((len(pattern), 3))
    pts[:, u] = pattern.positions[:, 0]
    pts[:, v] = pattern.positions[:, 1]
    pts[:, axis] = 0.0
    if side:
        # translation, not reflection: the +L copy keeps (u, v) untouched
        pts[:, axis] = pts[:, axis] + L
    return pts


@dataclass
class CellPores:
    """Pores of one cell plus the bookkeeping needed to wire tunnels."""

    pores: list
    face_tunnels: list = field(default_factory=list)
    face_slices: dict = field(default_factory=dict)  # (axis, side) -> slice into pores

    @property
    def face_indices(self) -> list:
        return [i for i, p in enumerate(self.pores) if p.is_face]

    @property
    def interior_indices(self) -> list:
        return [i for i, p in enumerate(self.pores) if not p.is_face]


def instantiate_cell_pores(
    patterns: Sequence[FacePattern],
    interior,
    L: float = 1.0,
    omega: float = 30.0,
    mu: Optional[float] = None,
    min_distance: Optional[float] = None,
) -> CellPores:
    """Stamp one pattern per axis onto both opposite faces and append interior pores.

    Face pores come first, ordered axis by axis, the ``side=0`` copy before the
    ``side=1`` copy.  Pattern tunnels are duplicated verbatim on both faces when
    ``mu`` is given.  Raises :class:`FaceCollision` if any two resulting pores
    are closer than ``min_distance`` (defaults to the largest pattern spacing).
    """
    if len(patterns) != 3:
        raise ValueError("need exactly one face pattern per axis")
    pores = []
    tunnels = []
    slices = {}
    for axis, pat in enumerate(patterns):
        for side in (0, 1):
            start = len(pores)
            for c in face_points(pat, axis, side, L):
                pores.append(Pore(tuple(c), omega, Region.FACE, axis, side))
            slices[(axis, side)] = slice(start, len(pores))
            if mu is not None:
                tunnels.extend(Tunnel(start + a, start + b, mu) for a, b in pat.tunnels)
    for c in interior:
        c = c.center if isinstance(c, Pore) else c
        pores.append(Pore(tuple(c), omega, Region.INTERIOR))
    if min_distance is None:
        min_distance = max((p.min_distance for p in patterns), default=0.0)
    if min_distance > 0 and len(pores) > 1:
        pts = np.array([p.center for p in pores])
        d = pdist(pts)
        if d.min() < min_distance:
            k = int(np.argmin(d))
            iu = np.triu_indices(len(pts), 1)
            i, j = int(iu[0][k]), int(iu[1][k])
            raise FaceCollision(
                f"pores {i} and {j} are {d[k]:.4g} apart, below the minimum distance "
                f"{min_distance:g}"
            )
    return CellPores(pores, tunnels, slices)
