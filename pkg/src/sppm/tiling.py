"""Wang-style tile sets of unit cells and greedy stochastic assembly.

A tile carries one colour per axis; the face pattern of that colour sits on
both faces normal to the axis.  Two tiles may touch along axis ``k`` only if
they share colour ``k`` (Rule 1).  Among the tiles allowed at a position the
assembler picks one that differs most from its already placed neighbours
(Rule 2): a different tile scores 3 across a shared face, 2 across a shared
edge and 1 across a shared corner.
"""
from __future__ import annotations

import enum
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from sppm.designer import (
    DesignSpec,
    UnitCell,
    calibrate_pore_count_model,
    face_count_for,
    generate_unit,
    sample_face_patterns,
    unit_from_dict,
    unit_to_dict,
)
from sppm.sampling import FacePattern
from sppm.seeds import derive_seed
from sppm.voxel import VoxelGrid


class Adjacency(enum.IntEnum):
    FACE = 1
    LINE = 2
    POINT = 3


DIFF_SCORE = {Adjacency.FACE: 3, Adjacency.LINE: 2, Adjacency.POINT: 1}

# the 26 neighbour offsets, tagged by how many coordinates change
NEIGHBOURS = tuple(
    (off, Adjacency(sum(1 for c in off if c)))
    for off in itertools.product((-1, 0, 1), repeat=3)
    if any(off)
)


class Rule1Violation(ValueError):
    pass


class NoCandidate(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Tile:
    id: int
    colors: tuple
    unit: Optional[UnitCell] = None


@dataclass(eq=False)
class TileSet:
    """``K^3`` tiles, one per colour triple; ``tiles[id].colors`` is the triple."""

    k: int
    tiles: list
    patterns: list = field(default_factory=list)
    spec: Optional[DesignSpec] = None
    unique: bool = True  # one tile per colour triple; off for gradient bars

    def __post_init__(self):
        triples = [t.colors for t in self.tiles]
        if self.unique and len(set(triples)) != len(triples):
            raise ValueError("duplicate colour triple in tile set")
        if [t.id for t in self.tiles] != list(range(len(self.tiles))):
            raise ValueError("tile ids must be 0..n-1 in order")

    def __len__(self):
        return len(self.tiles)

    @property
    def colors(self) -> np.ndarray:
        return np.array([t.colors for t in self.tiles], dtype=int).reshape(-1, 3)

    def lookup(self, colors) -> int:
        for t in self.tiles:
            if t.colors == tuple(colors):
                return t.id
        raise KeyError(colors)


def tile_id_for(colors, k: int) -> int:
    cx, cy, cz = colors
    return (cx * k + cy) * k + cz


def color_tile_set(k: int) -> TileSet:
    """Full ``K^3`` set without geometry, for assembly-only work."""
    if k < 1:
        raise ValueError("need at least one colour")
    triples = list(itertools.product(range(k), repeat=3))
    return TileSet(k, [Tile(tile_id_for(c, k), c) for c in triples])


def _tile_job(args):
    spec, patterns, colors, model = args
    return generate_unit(spec, patterns, colors, model)


def generate_tile_set(spec: DesignSpec, k: int = 3, workers: int = 1) -> TileSet:
    """Sample ``k`` face patterns and generate one unit cell per colour triple.

    Tile ``(cx, cy, cz)`` uses pattern ``cx`` on its x faces, ``cy`` on its y
    faces and ``cz`` on its z faces, with its own interior seed.
    """
    if k < 1:
        raise ValueError("need at least one colour")
    model = calibrate_pore_count_model(spec)
    n_face = face_count_for(spec, model.invert(spec.target_porosity))
    patterns = sample_face_patterns(spec, n_face, range(k), derive_seed(spec.seed, "tileset"))
    triples = list(itertools.product(range(k), repeat=3))
    jobs = [
        (spec.replace(seed=derive_seed(spec.seed, "tile:%d:%d:%d" % c)),
         [patterns[c[0]], patterns[c[1]], patterns[c[2]]], c, model)
        for c in triples
    ]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            units = list(pool.map(_tile_job, jobs))
    else:
        units = [_tile_job(j) for j in jobs]
    tiles = [Tile(tile_id_for(c, k), c, u) for c, u in zip(triples, units)]
    return TileSet(k, tiles, patterns, spec)


def diff(a: int, b: int, adjacency: Adjacency) -> int:
    """Difference score of two neighbouring tiles, by tile identity."""
    return 0 if a == b else DIFF_SCORE[Adjacency(adjacency)]


@dataclass(eq=False)
class Assembly:
    """Grid of tile ids indexed ``[x, y, z]``; ``-1`` marks an empty slot."""

    grid: np.ndarray
    colors: np.ndarray
    seed: int = 0
    order: list = field(default_factory=list)
    tile_set_ref: str = ""

    @classmethod
    def empty(cls, dims, tile_set: TileSet, seed: int = 0, ref: str = "") -> "Assembly":
        return cls(np.full(tuple(dims), -1, dtype=int), tile_set.colors, seed, [], ref)

    @property
    def dims(self) -> tuple:
        return self.grid.shape

    def place(self, pos, tile: int) -> None:
        pos = tuple(pos)
        if self.grid[pos] != -1:
            raise ValueError(f"position {pos} already filled")
        self.grid[pos] = tile
        self.order.append(pos)

    def neighbours(self, pos):
        """Placed neighbours of ``pos`` as ``(tile, adjacency, offset)``."""
        dims = self.grid.shape
        for off, kind in NEIGHBOURS:
            q = tuple(p + o for p, o in zip(pos, off))
            if all(0 <= q[k] < dims[k] for k in range(3)) and self.grid[q] >= 0:
                yield int(self.grid[q]), kind, off

    def feasible(self, pos, tile: int) -> bool:
        c = self.colors[tile]
        for other, kind, off in self.neighbours(pos):
            if kind is Adjacency.FACE:
                axis = next(k for k in range(3) if off[k])
                if self.colors[other][axis] != c[axis]:
                    return False
        return True

    def tile_counts(self) -> np.ndarray:
        placed = self.grid[self.grid >= 0]
        return np.bincount(placed, minlength=len(self.colors))


def score_candidate(assembly: Assembly, pos, tile: int) -> int:
    """Sum of ``diff`` over the 26 neighbours; empty slots score 0."""
    pos = tuple(pos)
    if assembly.grid[pos] != -1:
        raise ValueError(f"position {pos} is not empty")
    if not assembly.feasible(pos, tile):
        raise Rule1Violation(f"tile {tile} clashes with a face neighbour at {pos}")
    return sum(diff(other, tile, kind) for other, kind, _ in assembly.neighbours(pos))


def scan_order(dims):
    """Lexicographic placement order, z outermost and x innermost."""
    nx, ny, nz = dims
    return [(x, y, z) for z in range(nz) for y in range(ny) for x in range(nx)]


def assemble(tile_set: TileSet, dims, seed: int = 0, ref: str = "") -> Assembly:
    """Greedy Rule 1 / Rule 2 assembly with seeded random tie-breaking."""
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"bad assembly dimensions {dims}")
    asm = Assembly.empty(dims, tile_set, seed, ref)
    rng = np.random.default_rng(seed)
    ids = range(len(tile_set))
    for pos in scan_order(dims):
        cands = [t for t in ids if asm.feasible(pos, t)]
        if not cands:
            # unreachable with a complete K^3 set: each colour triple has a tile
            raise NoCandidate(f"no tile fits at {pos}")
        scores = [score_candidate(asm, pos, t) for t in cands]
        top = max(scores)
        best = [t for t, s in zip(cands, scores) if s == top]
        asm.place(pos, best[int(rng.integers(len(best)))] if len(best) > 1 else best[0])
    return asm


def rule1_violations(assembly: Assembly) -> list:
    """Every interior shared face whose colours disagree, as ``(pos, axis)``."""
    g = assembly.grid
    out = []
    for axis in range(3):
        a = np.take(g, range(g.shape[axis] - 1), axis=axis)
        b = np.take(g, range(1, g.shape[axis]), axis=axis)
        both = (a >= 0) & (b >= 0)
        bad = both & (assembly.colors[a.clip(0), axis] != assembly.colors[b.clip(0), axis])
        out += [(tuple(int(i) for i in p), axis) for p in np.argwhere(bad)]
    return out


def verify_greedy(assembly: Assembly) -> bool:
    """Replay the placement order and check each choice had the top score."""
    replay = Assembly.empty(assembly.dims, TileSet(0, []), assembly.seed)
    replay.colors = assembly.colors
    n = len(assembly.colors)
    for pos in assembly.order:
        chosen = int(assembly.grid[pos])
        scores = {t: score_candidate(replay, pos, t) for t in range(n) if replay.feasible(pos, t)}
        if chosen not in scores or scores[chosen] != max(scores.values()):
            return False
        replay.place(pos, chosen)
    return True


def assembly_occupancy(assembly: Assembly, tile_set: TileSet, resolution: int) -> VoxelGrid:
    """Voxel grid of an assembly: each tile voxelized in its own cell, blocks stacked.

    Each tile owns its cell, so pores duplicated on a shared face are not
    counted twice.
    """
    blocks = {}
    for t in np.unique(assembly.grid):
        if t < 0:
            raise ValueError("assembly has empty slots")
        blocks[int(t)] = tile_set.tiles[int(t)].unit.voxelize(resolution).occupancy
    nx, ny, nz = assembly.dims
    r = resolution
    occ = np.empty((nx * r, ny * r, nz * r), dtype=bool)
    for x, y, z in itertools.product(range(nx), range(ny), range(nz)):
        occ[x * r:(x + 1) * r, y * r:(y + 1) * r, z * r:(z + 1) * r] = blocks[int(assembly.grid[x, y, z])]
    L = tile_set.tiles[0].unit.spec.cell_side
    return VoxelGrid(occ, L / r)


ASSEMBLY_HEADER = "# sppm assembly v1"


def format_assembly(assembly: Assembly) -> str:
    """Text form: header, dims, seed, tile-set reference, colours, then one grid row per (z, y)."""
    nx, ny, nz = assembly.dims
    lines = [ASSEMBLY_HEADER, f"dims {nx} {ny} {nz}", f"seed {assembly.seed}",
             f"tileset {assembly.tile_set_ref or '-'}", f"tiles {len(assembly.colors)}"]
    lines += ["color %d %d %d %d" % (i, *c) for i, c in enumerate(assembly.colors)]
    lines.append("grid z y : x0 x1 ...")
    for z in range(nz):
        for y in range(ny):
            lines.append(f"{z} {y} : " + " ".join(str(int(v)) for v in assembly.grid[:, y, z]))
    return "\n".join(lines) + "\n"


def parse_assembly(text: str) -> Assembly:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ASSEMBLY_HEADER:
        raise ValueError("not an assembly file")
    head = {}
    colors = []
    rows = []
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        if key == "color":
            colors.append([int(v) for v in rest.split()[1:]])
        elif key == "grid":
            continue
        elif ":" in ln:
            zy, _, xs = ln.partition(":")
            z, y = (int(v) for v in zy.split())
            rows.append((z, y, [int(v) for v in xs.split()]))
        else:
            head[key] = rest
    nx, ny, nz = (int(v) for v in head["dims"].split())
    grid = np.full((nx, ny, nz), -1, dtype=int)
    for z, y, xs in rows:
        grid[:, y, z] = xs
    ref = head.get("tileset", "-")
    asm = Assembly(grid, np.array(colors, dtype=int).reshape(-1, 3), int(head["seed"]),
                   [p for p in scan_order((nx, ny, nz)) if grid[p] >= 0],
                   "" if ref == "-" else ref)
    return asm


def save_tile_set(tile_set: TileSet, path) -> None:
    data = {
        "format": "sppm-tileset/1",
        "k": tile_set.k,
        "unique": tile_set.unique,
        "patterns": [
            {"color": p.color, "positions": p.positions.tolist(), "tunnels": [list(t) for t in p.tunnels],
             "cell_side": p.cell_side, "edge_margin": p.edge_margin, "min_distance": p.min_distance}
            for p in tile_set.patterns
        ],
        "tiles": [
            {"id": t.id, "colors": list(t.colors), "unit": unit_to_dict(t.unit) if t.unit else None}
            for t in tile_set.tiles
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh)
        fh.write("\n")


def load_tile_set(path) -> TileSet:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != "sppm-tileset/1":
        raise ValueError("not a tile-set file")
    patterns = [
        FacePattern(p["color"], np.array(p["positions"], dtype=float).reshape(-1, 2),
                    tuple(tuple(t) for t in p["tunnels"]), None, p["cell_side"],
                    p["edge_margin"], p["min_distance"])
        for p in data["patterns"]
    ]
    tiles = [
        Tile(t["id"], tuple(t["colors"]), unit_from_dict(t["unit"]) if t["unit"] else None)
        for t in data["tiles"]
    ]
    spec = tiles[0].unit.spec if tiles and tiles[0].unit else None
    return TileSet(data["k"], tiles, patterns, spec, data.get("unique", True))


def gradient_bar(specs: Sequence[DesignSpec], colors=None, model=None):
    """Row of ``len(specs)`` cells along x, one spec per segment, all sharing boundary patterns.

    The face patterns are sampled once at the mean target porosity and reused
    by every segment, so abutting faces match and only the interiors vary.
    With ``colors`` (one triple per segment) abutting x colours must agree.
    A single segment is exactly the unit ``generate_unit`` makes.
    Returns the per-segment tile set and the ``n x 1 x 1`` assembly.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one segment")
    if colors is not None:
        colors = [tuple(int(c) for c in t) for t in colors]
        if len(colors) != len(specs):
            raise ValueError("need one colour triple per segment")
        for i in range(len(colors) - 1):
            if colors[i][0] != colors[i + 1][0]:
                raise Rule1Violation(f"segments {i} and {i + 1} disagree on the shared x face colour")
    if colors is None:
        colors = [(0, 1, 2)] * len(specs)
    if len(specs) == 1:
        units = [generate_unit(specs[0], face_colors=colors[0], model=model)]
        by_color = dict(zip(colors[0], units[0].patterns))
    else:
        # one boundary for every segment, sized for the mean target
        mean = specs[0].replace(target_porosity=float(np.mean([s.target_porosity for s in specs])))
        n = (model or calibrate_pore_count_model(mean)).invert(mean.target_porosity)
        palette = sorted({c for t in colors for c in t})
        pats = sample_face_patterns(mean, face_count_for(mean, n), palette,
                                    derive_seed(specs[0].seed, "bar"))
        by_color = dict(zip(palette, pats))
        units = [generate_unit(spec, [by_color[c] for c in cols], cols, model)
                 for spec, cols in zip(specs, colors)]
    tiles = [Tile(i, cols, u) for i, (cols, u) in enumerate(zip(colors, units))]
    ts = TileSet(len(by_color), tiles, [by_color[c] for c in sorted(by_color)], specs[0], unique=False)
    asm = Assembly.empty((len(specs), 1, 1), ts)
    for i in range(len(specs)):
        asm.place((i, 0, 0), i)
    return ts, asm
