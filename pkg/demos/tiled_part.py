"""Build a K = 2 tile set, assemble 3 x 3 x 3 tiles and slice a sphere through it."""
from pathlib import Path

from sppm.designer import DesignSpec
from sppm.slicer import SliceJob, slice_assembly, sphere
from sppm.tiling import assemble, format_assembly, generate_tile_set, rule1_violations

out = Path("demo_out")
out.mkdir(exist_ok=True)

tiles = generate_tile_set(DesignSpec(target_porosity=0.6, seed=4, resolution=32), k=2)
asm = assemble(tiles, (3, 3, 3), seed=4)
assert rule1_violations(asm) == []
(out / "assembly.txt").write_text(format_assembly(asm))
print("tile usage", asm.tile_counts().tolist())

# 6 mm cube of 2 mm cells, 50 um pixels and layers
job = SliceJob(0.05, 0.05, 2.0, out_dir=str(out / "slices"))
res = slice_assembly(sphere((3, 3, 3), 2.9), asm, tiles, job)
print(f"{len(res.paths)} layers, {res.bytes_written} bytes in {res.seconds:.2f} s")
