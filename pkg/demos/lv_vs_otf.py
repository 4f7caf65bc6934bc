"""
Local Voting against a threshold allocator
==========================================

Fifty nodes, two bursts of five packets per node, three RPL parents.  Both
schedulers see the same topologies and channel draws for a given seed.
"""

from dataclasses import replace

import numpy as np

from lvtsch.engine import SimConfig
from lvtsch.experiments import run_seeds

SEEDS = range(10)
base = SimConfig(rpl_parents=3, packets_per_burst=5)

results = {
    "LV": run_seeds(base, SEEDS),
    "OTF(0)": run_seeds(replace(base, scheduler="otf", otf_threshold=0), SEEDS),
    "OTF(4)": run_seeds(replace(base, scheduler="otf", otf_threshold=4), SEEDS),
    "OTF(10)": run_seeds(replace(base, scheduler="otf", otf_threshold=10), SEEDS),
}

print(f"{'':8}{'charge uC':>12}{'latency s':>12}{'delivered':>11}{'requests':>10}")
for name, runs in results.items():
    col = lambda k: np.mean([getattr(r, k) for r in runs])
    print(
        f"{name:8}{col('total_charge'):12.0f}{col('max_end_to_end_latency'):12.2f}"
        f"{col('delivered'):11.1f}{col('requests'):10.1f}"
    )

# Cells held over time, seed 0: LV hands cells back as queues drain
lv, otf = results["LV"][0].series, results["OTF(4)"][0].series
for f in (19, 20, 25, 40, 60, 65, 99):
    print(f"frame {f:>2}: LV {lv.allocated_rx_cells[f]:>4} cells   OTF(4) {otf.allocated_rx_cells[f]:>4} cells")
