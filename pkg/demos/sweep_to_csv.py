"""
A small sweep written to CSV
============================

The same grid the ``lvtsch sweep`` command runs, cut down to a few seeds and
one burst size.  The two output files are described in ``lvtsch.metrics``.
"""

import csv
import sys
from pathlib import Path

from lvtsch.engine import SimConfig
from lvtsch.experiments import ScenarioGrid, sweep
from lvtsch.metrics import emit_csv

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "sweep-out")
grid = ScenarioGrid(thresholds=(0, 4), parents=(1, 3), packets_per_burst=(25,), seeds=4)
results = sweep(SimConfig(), grid)
series_path, agg_path = emit_csv([rep for rep, _ in results], out_dir)

with agg_path.open() as fh:
    for row in csv.DictReader(fh):
        if row["metric"] == "total_charge":
            print(
                f"{row['scheduler']:>3} thr={row['threshold'] or '-':>2} K={row['parents']}"
                f"  {float(row['mean']):10.0f} uC  [{float(row['ci_low']):.0f}, {float(row['ci_high']):.0f}]"
            )
print("wrote", series_path, "and", agg_path)
