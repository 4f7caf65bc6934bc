"""
Who competes with whom
======================

Links that share a node can never use the same slot.  Endpoint-disjoint links
interfere when one's receiver hears the other's transmitter, and then only on
the same (slot, channel).  Local Voting weighs the first kind fully and the
second by 1/M.
"""

import numpy as np

from lvtsch.local_voting import conflict_weight
from lvtsch.replay import EXAMPLE_LINKS, example_topology
from lvtsch.schedule import Schedule, add_cells, scan_violations
from lvtsch.topology import Link, interference_sets

topo, tree = example_topology()
cs = interference_sets(topo, EXAMPLE_LINKS)

for link in EXAMPLE_LINKS:
    prim = ", ".join(f"({a},{b})" for a, b in cs.primary(link))
    sec = ", ".join(f"({a},{b})" for a, b in cs.secondary(link)) or "-"
    print(f"({link.src},{link.dst})  primary: {prim:<22} secondary: {sec}")

print("w((5,3),(4,2)) =", conflict_weight(Link(5, 3), Link(4, 2), 5))

# With global knowledge the allocator steers clear of both kinds
schedule = Schedule(15, 5, mode="strict")
rng = np.random.default_rng(0)
for link in EXAMPLE_LINKS:
    add_cells(schedule, link, 4, cs, rng)
print("strict:", schedule.total_cells(), "cells,", len(scan_violations(schedule, cs)), "violations")

# Knowing only its own nodes' cells, a pair can land on an interferer's cell
schedule = Schedule(15, 1, mode="local")
for link in EXAMPLE_LINKS:
    add_cells(schedule, link, 6, cs, rng)
for v in scan_violations(schedule, cs):
    print("local:", v.kind.value, "clash at", tuple(v.cell), tuple(v.a), tuple(v.b))
