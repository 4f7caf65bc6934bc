"""
Replaying the nine-node voting example
======================================

Seven links below node 1 start with queues (10, 20, 5, 25, 45, 7, 14) on a
15-slot, 5-channel frame.  Replay mode is lossless and deterministic, so the
trace can be compared entry by entry with the reference table shipped in the
package.
"""

from lvtsch.replay import EXAMPLE_LINKS, diff_table, format_table, load_table, replay_trace
from lvtsch.topology import Link

rows = replay_trace()
print(format_table(rows))

# Every (p, q, x, u) entry against the packaged table
_, expected = load_table()
print("\nmismatches:", len(diff_table(expected, rows)))

# Link (5,3) on its own: three cells voted at frame 0, queue 14 -> 20
for f in range(3):
    p, q, x, u = rows[f][Link(5, 3)]
    print(f"frame {f}: p={p} q={q} x={x} u={u}")

# By frame 12 everything has drained except what node 1's children still hold
left = {l: rows[12][l][1] for l in EXAMPLE_LINKS if rows[12][l][1]}
print("queued at frame 12:", left or "nothing")
