"""Command line front end: ``sppm <command> [config] [options]``.

The optional config file holds ``key = value`` lines (``#`` starts a
comment).  Tuples are written as space-separated values and ``none`` clears
an optional field.  Unknown keys are rejected.  Exit codes: 0 success,
1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import typing
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from sppm.designer import DesignSpec

USAGE_ERROR = 2
DOMAIN_ERROR = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectConfig:
    # unit design
    target_porosity: float = 0.5
    omega: float = 30.0
    mu: float = 30.0
    level: float = 0.25
    cell_side: float = 2.0
    seed: int = 0
    tolerance: float = 0.001
    max_attempts: int = 40
    resolution: int = 64
    degree_bounds: tuple = (3, 5)
    cutoff_epsilon: float = 1e-4
    face_resolution: int = 32
    face_tolerance: float = 0.01
    n_face_per_axis: Optional[int] = None
    min_distance: Optional[float] = None
    edge_margin: Optional[float] = None
    max_attempts_per_pore: int = 10000
    # tiling
    k_colors: int = 3
    assembly_dims: tuple = (3, 3, 3)
    workers: int = 1
    # slicing, physical units
    layer_um: float = 50.0
    pixel_um: float = 50.0
    cell_mm: float = 2.0
    # analysis
    homog_resolution: int = 32
    base_E: float = 1.0
    base_nu: float = 0.3
    sweep_targets: tuple = (0.3, 0.4, 0.5, 0.6, 0.7)
    sweep_seeds: int = 3
    # gradient bar, one target per segment
    segments: tuple = (0.7, 0.62, 0.54, 0.46, 0.38, 0.3)
    # benchmark cube edges (units per axis)
    bench_sizes: tuple = (3,)
    out_dir: str = "sppm_out"

    def design_spec(self, **overrides) -> DesignSpec:
        names = {f.name for f in fields(DesignSpec)}
        kw = {k: v for k, v in dataclasses.asdict(self).items() if k in names}
        kw.update(overrides)
        return DesignSpec(**kw)

    def replace(self, **kw) -> "ProjectConfig":
        return dataclasses.replace(self, **kw)

    def digest(self) -> str:
        return hashlib.sha256(format_config(self).encode()).hexdigest()[:16]


_HINTS = typing.get_type_hints(ProjectConfig)
_TUPLE_ITEM = {"degree_bounds": int, "assembly_dims": int, "bench_sizes": int,
               "sweep_targets": float, "segments": float}


def _parse_value(key, text):
    hint = _HINTS[key]
    text = text.strip()
    if key in _TUPLE_ITEM:
        conv = _TUPLE_ITEM[key]
        return tuple(conv(v) for v in text.replace(",", " ").split())
    optional = typing.get_origin(hint) is typing.Union
    if optional:
        if text.lower() == "none":
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    if hint is int:
        return int(text)
    if hint is float:
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("not finite")
        return v
    return text


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return " ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str) -> ProjectConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _HINTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return ProjectConfig(**values)


def format_config(cfg: ProjectConfig) -> str:
    lines = ["# sppm project config"]
    lines += [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def load_config(path) -> ProjectConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# commands -------------------------------------------------------------------

def _out(cfg, *parts):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, *parts)


def _header(cfg, out):
    print(f"seed {cfg.seed}", file=out)
    print(f"config {cfg.digest()}", file=out)


def cmd_gen_unit(cfg, args, out):
    from sppm.designer import generate_unit, save_unit
    from sppm.voxel import extract_mesh, write_obj

    unit = generate_unit(cfg.design_spec())
    path = _out(cfg, "unit.json")
    save_unit(unit, path)
    print(f"pores {unit.n_pores} (interior {unit.n_interior}, face {unit.n_face_per_axis} per axis)", file=out)
    print(f"tunnels {unit.n_tunnels}", file=out)
    print(f"porosity {unit.porosity:.6f} target {cfg.target_porosity}", file=out)
    print(f"band_depth {unit.band_depth:.6f} attempts {unit.attempts}", file=out)
    print(f"valid yes removed_components {unit.removed_components}", file=out)
    print("face_mismatch " + " ".join("%.4f" % m for m in unit.face_mismatch), file=out)
    print(f"wrote {path}", file=out)
    if args.obj:
        mesh = extract_mesh(unit.field, cfg.level, cfg.resolution, close_boundary=True)
        n = write_obj(mesh, _out(cfg, "unit.obj"))
        print(f"wrote {_out(cfg, 'unit.obj')} ({n} bytes)", file=out)
    return 0


def cmd_tileset(cfg, args, out):
    from sppm.tiling import generate_tile_set, save_tile_set

    ts = generate_tile_set(cfg.design_spec(), cfg.k_colors, cfg.workers)
    path = _out(cfg, "tileset.json")
    save_tile_set(ts, path)
    rho = [t.unit.porosity for t in ts.tiles]
    print(f"tiles {len(ts)} colours {cfg.k_colors}", file=out)
    print(f"porosity min {min(rho):.6f} max {max(rho):.6f}", file=out)
    print(f"max face_mismatch {max(max(t.unit.face_mismatch) for t in ts.tiles):.4f}", file=out)
    print(f"wrote {path}", file=out)
    return 0


def cmd_assemble(cfg, args, out):
    from sppm.seeds import derive_seed
    from sppm.tiling import assemble, color_tile_set, format_assembly, load_tile_set, rule1_violations

    ref = args.tileset or _out(cfg, "tileset.json")
    if os.path.exists(ref):
        ts = load_tile_set(ref)
        ref_text = os.path.relpath(ref, cfg.out_dir)
    elif args.tileset:
        raise FileNotFoundError(ref)
    else:
        ts, ref_text = color_tile_set(cfg.k_colors), ""
    asm = assemble(ts, cfg.assembly_dims, derive_seed(cfg.seed, "assembly"), ref_text)
    bad = rule1_violations(asm)
    if bad:
        raise RuntimeError(f"{len(bad)} Rule 1 violations")
    path = _out(cfg, "assembly.txt")
    with open(path, "w") as fh:
        fh.write(format_assembly(asm))
    counts = asm.tile_counts()
    print("dims " + " ".join(map(str, asm.dims)), file=out)
    print(f"rule1 ok; most frequent tile {counts.max() / counts.sum():.3f} of positions", file=out)
    print(f"wrote {path}", file=out)
    return 0


def _load_assembly(path):
    from sppm.tiling import load_tile_set, parse_assembly

    with open(path) as fh:
        asm = parse_assembly(fh.read())
    if not asm.tile_set_ref:
        raise ValueError("assembly has no tile-set reference")
    ref = os.path.join(os.path.dirname(os.path.abspath(path)), asm.tile_set_ref)
    return asm, load_tile_set(ref)


def cmd_slice(cfg, args, out):
    from sppm.slicer import SliceJob, slice_assembly

    src = args.assembly or _out(cfg, "assembly.txt")
    asm, ts = _load_assembly(src)
    layer = (args.layer_um or cfg.layer_um) / 1000.0
    pixel = (args.pixel_um or cfg.pixel_um) / 1000.0
    out_dir = args.slices or _out(cfg, "slices")
    model = args.model or "box:0,0,0,%r,%r,%r" % tuple(d * cfg.cell_mm for d in asm.dims)
    job = SliceJob(layer, pixel, cfg.cell_mm, out_dir, assembly_ref=src)
    res = slice_assembly(model, asm, ts, job)
    m = res.manifest
    print(f"layers {m['layers']} image {m['image_size'][0]}x{m['image_size'][1]}", file=out)
    print("physical_mm " + " ".join("%.4f" % v for v in m["physical_size_mm"]), file=out)
    print(f"bytes {res.bytes_written}", file=out)
    print(f"wrote {out_dir}/manifest.json", file=out)
    return 0


def _tensor_report(C, base, out):
    from sppm.analysis import engineering_constants, isotropy_deviation

    Ex, nu = engineering_constants(C)
    xi = isotropy_deviation(C, base.E)
    for row in C.C:
        print(" ".join("%12.6f" % v for v in row), file=out)
    print(f"E_x {Ex:.6f} nu_xy {nu:.6f} xi {xi:.6g}", file=out)
    return {"C": C.C.tolist(), "E_x": Ex, "nu_xy": nu, "xi": xi}


def cmd_homogenize(cfg, args, out):
    from sppm.analysis import BaseMaterial, homogenize
    from sppm.designer import load_unit
    from sppm.tiling import assembly_occupancy

    base = BaseMaterial(cfg.base_E, cfg.base_nu)
    r = cfg.homog_resolution
    if args.assembly:
        asm, ts = _load_assembly(args.assembly)
        grid = assembly_occupancy(asm, ts, r)
    else:
        unit = load_unit(args.unit or _out(cfg, "unit.json"))
        grid = unit.voxelize(r)
    res = homogenize(grid, base, full_output=True)
    print(f"resolution {grid.occupancy.shape} porosity {1 - res.solid_fraction:.6f}", file=out)
    print("cg iterations " + " ".join(map(str, res.iterations)), file=out)
    report = _tensor_report(res.tensor, base, out)
    path = _out(cfg, "homogenization.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    print(f"wrote {path}", file=out)
    return 0


def cmd_sweep(cfg, args, out):
    from sppm.analysis import BaseMaterial, format_csv, sweep
    from sppm.seeds import derive_seed

    specs = [cfg.design_spec(target_porosity=t, seed=derive_seed(cfg.seed, f"sweep:{s}"))
             for t in cfg.sweep_targets for s in range(cfg.sweep_seeds)]
    rows = sweep(specs, cfg.homog_resolution, BaseMaterial(cfg.base_E, cfg.base_nu))
    path = _out(cfg, "sweep.csv")
    with open(path, "w") as fh:
        fh.write(format_csv(rows))
    for t in cfg.sweep_targets:
        ok = [r for r in rows if r["target"] == t and r["status"] == "ok"]
        if ok:
            print(f"target {t}: mean E_x {np.mean([r['E_x'] for r in ok]):.5f} "
                  f"mean nu_xy {np.mean([r['nu_xy'] for r in ok]):.4f} ({len(ok)} ok)", file=out)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"rows {len(rows)} failed {failed}", file=out)
    print(f"wrote {path}", file=out)
    return 0


def cmd_curve(cfg, args, out):
    from sppm.analysis import analyze_compression_curve, read_curve_csv

    curve = read_curve_csv(args.input, math.radians(args.angle_deg))
    m = analyze_compression_curve(curve, args.area_mm2, args.drop)
    print(f"yield_strength_MPa {m.yield_strength:.6g}", file=out)
    print(f"effective_displacement_mm {m.effective_displacement:.6g}", file=out)
    print(f"energy_J {m.energy:.6g}", file=out)
    return 0


def cmd_gradient_bar(cfg, args, out):
    from sppm.slicer import SliceJob, slice_assembly
    from sppm.tiling import format_assembly, gradient_bar, save_tile_set

    targets = tuple(float(v) for v in args.segments.split(",")) if args.segments else cfg.segments
    specs = [cfg.design_spec(target_porosity=t) for t in targets]
    ts, asm = gradient_bar(specs)
    save_tile_set(ts, _out(cfg, "bar_tileset.json"))
    asm.tile_set_ref = "bar_tileset.json"
    with open(_out(cfg, "bar_assembly.txt"), "w") as fh:
        fh.write(format_assembly(asm))
    for i, t in enumerate(ts.tiles):
        print(f"segment {i} target {targets[i]} porosity {t.unit.porosity:.6f} pores {t.unit.n_pores}",
              file=out)
    if args.slice:
        job = SliceJob(cfg.layer_um / 1000, cfg.pixel_um / 1000, cfg.cell_mm, _out(cfg, "bar_slices"),
                       assembly_ref="bar_assembly.txt")
        model = "box:0,0,0,%r,%r,%r" % (len(targets) * cfg.cell_mm, cfg.cell_mm, cfg.cell_mm)
        res = slice_assembly(model, asm, ts, job)
        print(f"wrote {len(res.paths)} slices to {job.out_dir}", file=out)
    print(f"wrote {_out(cfg, 'bar_assembly.txt')}", file=out)
    return 0


def cmd_bench(cfg, args, out):
    from sppm.analysis import format_csv
    from sppm.seeds import derive_seed
    from sppm.slicer import BENCH_COLUMNS, benchmark
    from sppm.tiling import assemble, generate_tile_set

    rows = []
    sizes = [s for s in cfg.bench_sizes if s > 0]
    if sizes:
        ts = generate_tile_set(cfg.design_spec(resolution=cfg.homog_resolution), cfg.k_colors, cfg.workers)
        for n in sizes:
            asm = assemble(ts, (n, n, n), derive_seed(cfg.seed, "bench"))
            try:
                rows.append(benchmark(asm, ts, _out(cfg, f"bench_{n}"), cfg.homog_resolution))
            except (MemoryError, OSError) as exc:
                rows.append({"units": n ** 3, "resolution": cfg.homog_resolution,
                             "mesh_bytes": f"failed: {exc}"})
    path = _out(cfg, "bench.csv")
    with open(path, "w") as fh:
        fh.write(format_csv(rows, BENCH_COLUMNS))
    for r in rows:
        print(" ".join(f"{k}={r.get(k, '')}" for k in BENCH_COLUMNS), file=out)
    print(f"wrote {path}", file=out)
    return 0


COMMANDS = {
    "gen-unit": cmd_gen_unit,
    "tileset": cmd_tileset,
    "assemble": cmd_assemble,
    "slice": cmd_slice,
    "homogenize": cmd_homogenize,
    "sweep": cmd_sweep,
    "curve": cmd_curve,
    "gradient-bar": cmd_gradient_bar,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sppm", description="Stochastic periodic porous microstructures")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", nargs="?", help="key = value config file")
        s.add_argument("--seed", type=int, help="master seed override")
        s.add_argument("--out", help="output directory override")
        s.add_argument("--resolution", type=int,
                       help="voxels per cell (design for gen-unit/tileset, analysis otherwise)")
        if name == "gen-unit":
            s.add_argument("--obj", action="store_true", help="also write a closed OBJ mesh")
        if name == "assemble":
            s.add_argument("--tileset", help="tile-set file (default: <out>/tileset.json)")
        if name == "slice":
            s.add_argument("--assembly", help="assembly text file")
            s.add_argument("--model", help="OBJ path or box:/sphere:/cylinder: primitive in mm")
            s.add_argument("--layer-um", type=float)
            s.add_argument("--pixel-um", type=float)
            s.add_argument("--slices", help="slice directory (default: <out>/slices)")
        if name == "homogenize":
            s.add_argument("--unit", help="unit design file")
            s.add_argument("--assembly", help="assembly text file instead of a unit")
        if name == "curve":
            s.add_argument("--input", required=True, help="two-column CSV: displacement mm, force N")
            s.add_argument("--area-mm2", type=float, required=True)
            s.add_argument("--angle-deg", type=float, default=0.0)
            s.add_argument("--drop", type=float, default=0.95)
        if name == "gradient-bar":
            s.add_argument("--segments", help="comma-separated target porosities")
            s.add_argument("--slice", action="store_true", help="also write PNG slices")
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code else 0
    try:
        cfg = load_config(args.config) if args.config else ProjectConfig()
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.out:
            over["out_dir"] = args.out
        if args.resolution:
            over["resolution" if args.command in ("gen-unit", "tileset") else "homog_resolution"] = args.resolution
        cfg = cfg.replace(**over)
        cfg.design_spec()
    except (ConfigError, OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    _header(cfg, out)
    try:
        return COMMANDS[args.command](cfg, args, out)
    except (ValueError, RuntimeError, ArithmeticError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return DOMAIN_ERROR


if __name__ == "__main__":
    sys.exit(main())
