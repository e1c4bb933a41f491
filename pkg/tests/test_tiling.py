import numpy as np
import pytest

from sppm.designer import DesignSpec
from sppm.tiling import (
    Adjacency,
    Assembly,
    Rule1Violation,
    assemble,
    assembly_occupancy,
    color_tile_set,
    diff,
    format_assembly,
    generate_tile_set,
    gradient_bar,
    load_tile_set,
    parse_assembly,
    rule1_violations,
    save_tile_set,
    score_candidate,
    verify_greedy,
)
from sppm.voxel import face_mismatch


def exhaustive_rule1(asm):
    # plain loops over every shared face
    nx, ny, nz = asm.dims
    bad = 0
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                for axis, (dx, dy, dz) in enumerate([(1, 0, 0), (0, 1, 0), (0, 0, 1)]):
                    q = (x + dx, y + dy, z + dz)
                    if q[0] < nx and q[1] < ny and q[2] < nz:
                        a, b = asm.grid[x, y, z], asm.grid[q]
                        bad += asm.colors[a][axis] != asm.colors[b][axis]
    return bad


def test_set_sizes():
    assert len(color_tile_set(3)) == 27
    assert len(color_tile_set(2)) == 8
    assert len(color_tile_set(1)) == 1


def test_diff():
    assert diff(1, 2, Adjacency.FACE) == 3
    assert diff(1, 2, Adjacency.LINE) == 2
    assert diff(1, 2, Adjacency.POINT) == 1
    for kind in Adjacency:
        assert diff(4, 4, kind) == 0


def mixed_neighbour_scene():
    """Centre slot (1,1,1) with two face, two line and one point neighbour placed.

    Colours are chosen so the five placed tiles satisfy Rule 1 among
    themselves; the point neighbour is the candidate T1.
    """
    ts = color_tile_set(3)
    asm = Assembly.empty((3, 3, 3), ts)
    t = {
        "F1": ts.lookup((0, 1, 2)),  # x - 1
        "F2": ts.lookup((1, 1, 0)),  # y - 1
        "L1": ts.lookup((1, 1, 1)),  # x - 1, y - 1
        "L2": ts.lookup((0, 0, 0)),  # y - 1, z - 1
        "T1": ts.lookup((0, 1, 1)),
        "T3": ts.lookup((0, 1, 0)),
    }
    t["P1"] = t["T1"]  # x - 1, y - 1, z - 1
    t["T2"] = t["F1"]
    for pos, name in [((0, 1, 1), "F1"), ((1, 0, 1), "F2"), ((0, 0, 1), "L1"),
                      ((1, 0, 0), "L2"), ((0, 0, 0), "P1")]:
        asm.grid[pos] = t[name]
    return ts, asm, t


def test_mixed_neighbour_scores():
    ts, asm, t = mixed_neighbour_scene()
    assert rule1_violations(asm) == []
    pos = (1, 1, 1)
    assert score_candidate(asm, pos, t["T1"]) == 10
    assert score_candidate(asm, pos, t["T2"]) == 8
    assert score_candidate(asm, pos, t["T3"]) == 11


def test_mixed_neighbour_selects_distinct_tile():
    ts, asm, t = mixed_neighbour_scene()
    pos = (1, 1, 1)
    feasible = [k for k in range(27) if asm.feasible(pos, k)]
    assert sorted(ts.tiles[k].colors for k in feasible) == [(0, 1, 0), (0, 1, 1), (0, 1, 2)]
    scores = {k: score_candidate(asm, pos, k) for k in feasible}
    assert max(scores, key=scores.get) == t["T3"]


def test_empty_neighbourhood():
    ts = color_tile_set(3)
    asm = Assembly.empty((3, 3, 3), ts)
    assert score_candidate(asm, (1, 1, 1), 5) == 0


def test_fully_surrounded():
    ts = color_tile_set(2)
    asm = Assembly.empty((3, 3, 3), ts)
    # all-colour-0 tile in the centre, neighbours share its colours only on face axes
    T = ts.lookup((0, 0, 0))
    for x in range(3):
        for y in range(3):
            for z in range(3):
                if (x, y, z) == (1, 1, 1):
                    continue
                c = tuple(0 if v == 1 else 1 for v in (x, y, z))
                # face neighbours differ from the centre in one axis only, keep that axis 0
                off = [v - 1 for v in (x, y, z)]
                if sum(map(abs, off)) == 1:
                    axis = [abs(o) for o in off].index(1)
                    c = tuple(0 if k == axis else 1 for k in range(3))
                asm.grid[x, y, z] = ts.lookup(c)
    assert score_candidate(asm, (1, 1, 1), T) == 6 * 3 + 12 * 2 + 8 * 1


def test_rule1_violation():
    ts = color_tile_set(2)
    asm = Assembly.empty((2, 1, 1), ts)
    asm.place((0, 0, 0), ts.lookup((0, 0, 0)))
    with pytest.raises(Rule1Violation):
        score_candidate(asm, (1, 0, 0), ts.lookup((1, 0, 0)))


def test_one_cube():
    asm = assemble(color_tile_set(3), (1, 1, 1), seed=2)
    assert asm.grid.shape == (1, 1, 1) and asm.grid[0, 0, 0] >= 0


def test_two_cube_rule1():
    asm = assemble(color_tile_set(3), (2, 2, 2), seed=4)
    assert len(asm.order) == 8
    assert exhaustive_rule1(asm) == 0 and rule1_violations(asm) == []


def test_deterministic():
    ts = color_tile_set(3)
    a = assemble(ts, (4, 3, 2), seed=9)
    b = assemble(ts, (4, 3, 2), seed=9)
    assert np.array_equal(a.grid, b.grid)


@pytest.mark.parametrize("seed", range(3))
def test_six_cube_invariants(seed):
    asm = assemble(color_tile_set(3), (6, 6, 6), seed=seed)
    assert exhaustive_rule1(asm) == 0
    assert verify_greedy(asm)
    assert asm.tile_counts().max() / 216 < 0.3
    # colour k is constant along every axis-k line
    colors = asm.colors[asm.grid]
    for axis in range(3):
        c = colors[..., axis]
        assert (c == np.take(c, [0], axis=axis)).all()


def test_single_colour_is_periodic():
    asm = assemble(color_tile_set(1), (3, 3, 3), seed=0)
    assert (asm.grid == 0).all()


def test_violations_detected():
    ts = color_tile_set(2)
    asm = Assembly.empty((2, 1, 1), ts)
    asm.grid[0, 0, 0] = ts.lookup((0, 0, 0))
    asm.grid[1, 0, 0] = ts.lookup((1, 0, 0))
    assert rule1_violations(asm) == [((0, 0, 0), 0)]
    assert exhaustive_rule1(asm) == 1


def test_text_roundtrip():
    asm = assemble(color_tile_set(3), (3, 2, 4), seed=1, ref="tiles.json")
    text = format_assembly(asm)
    back = parse_assembly(text)
    assert np.array_equal(back.grid, asm.grid)
    assert back.seed == 1 and back.tile_set_ref == "tiles.json"
    assert format_assembly(back) == text


@pytest.fixture(scope="module")
def small_set():
    spec = DesignSpec(target_porosity=0.5, seed=5, resolution=32)
    return generate_tile_set(spec, k=2)


def test_generated_set(small_set):
    assert len(small_set) == 8
    for tile in small_set.tiles:
        assert abs(tile.unit.porosity - 0.5) <= 0.001
        assert tile.unit.face_colors == tile.colors


def test_generated_faces_match_across_tiles(small_set):
    # two tiles sharing colour c on axis 0 carry the same x-face pores
    def xface(tile):
        return sorted(p.center[1:] for p in tile.unit.pores if p.is_face and p.axis == 0 and p.side == 0)

    a = small_set.tiles[small_set.lookup((1, 0, 0))]
    b = small_set.tiles[small_set.lookup((1, 1, 1))]
    assert xface(a) == xface(b)


def test_assembly_voxels_periodic_across_tiles(small_set):
    asm = assemble(small_set, (2, 2, 2), seed=3)
    grid = assembly_occupancy(asm, small_set, 32)
    assert grid.occupancy.shape == (64, 64, 64)
    assert max(face_mismatch(grid)) <= 0.01


def test_tile_set_file(small_set, tmp_path):
    path = tmp_path / "set.json"
    save_tile_set(small_set, path)
    back = load_tile_set(path)
    assert [t.colors for t in back.tiles] == [t.colors for t in small_set.tiles]
    assert np.array_equal(back.tiles[3].unit.field.centers, small_set.tiles[3].unit.field.centers)
    assert np.array_equal(back.patterns[1].positions, small_set.patterns[1].positions)


def test_gradient_bar_rejects_mismatched_faces():
    specs = [DesignSpec(target_porosity=0.5, seed=1)] * 2
    with pytest.raises(Rule1Violation):
        gradient_bar(specs, colors=[(0, 0, 0), (1, 0, 0)])


def test_gradient_bar_monotone(tmp_path):
    targets = np.linspace(0.7, 0.3, 6)
    ts, asm = gradient_bar([DesignSpec(target_porosity=t, seed=4) for t in targets])
    assert asm.dims == (6, 1, 1) and rule1_violations(asm) == []
    grid = assembly_occupancy(asm, ts, 32)
    void = 1 - grid.occupancy.reshape(6, 32, 32, 32).mean(axis=(1, 2, 3))
    assert (np.diff(void) < 0).all()
    assert np.abs(void - targets).max() <= 0.002
    # all segments carry the same x-face pores
    xf = {tuple(sorted(p.center[1:] for p in t.unit.pores if p.is_face and p.axis == 0)) for t in ts.tiles}
    assert len(xf) == 1
    save_tile_set(ts, tmp_path / "bar.json")
    back = load_tile_set(tmp_path / "bar.json")
    assert not back.unique and len(back) == 6
