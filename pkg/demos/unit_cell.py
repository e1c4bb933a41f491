"""Generate one unit cell, report its statistics and write it out.

    python3 demos/unit_cell.py [porosity] [seed]
"""
import sys
from pathlib import Path

from sppm.designer import DesignSpec, generate_unit, save_unit
from sppm.voxel import extract_mesh, write_obj

target = float(sys.argv[1]) if len(sys.argv) > 1 else 0.6
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 1
out = Path("demo_out")
out.mkdir(exist_ok=True)

unit = generate_unit(DesignSpec(target_porosity=target, seed=seed))
print(f"porosity {unit.porosity:.4f} (target {target})")
print(f"pores {unit.n_pores}  tunnels {unit.n_tunnels}  band depth {unit.band_depth:.4f}")
print("face mismatch", ", ".join(f"{m:.4f}" for m in unit.face_mismatch))

save_unit(unit, out / "unit.json")
mesh = extract_mesh(unit.field, unit.spec.level, 64, extent=unit.spec.cell_side)
write_obj(mesh, out / "unit.obj")
print(f"wrote {out / 'unit.json'} and {out / 'unit.obj'} ({mesh.n_faces} triangles)")
