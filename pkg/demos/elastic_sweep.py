"""Homogenized stiffness against porosity, printed as CSV."""
import sys

from sppm.analysis import format_csv, sweep
from sppm.designer import DesignSpec

targets = (0.3, 0.4, 0.5, 0.6, 0.7)
seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 1
specs = [DesignSpec(target_porosity=t, seed=100 + s) for t in targets for s in range(seeds)]
print(format_csv(sweep(specs, resolution=24)), end="")
