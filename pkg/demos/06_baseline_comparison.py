"""
Against a trimming baseline
===========================

W-MSR discards extreme neighbour values.  It stays inside the range of
honest values but cannot undo what the attacker already injected, so it
settles away from the exact average.
"""

# %%
from resilient_consensus.config import load
from resilient_consensus.engine import compare

cfg = load("fig1_ddcc").run
for row in compare(cfg, ["ddcc", "wmsr", "plain"]):
    print(f"{row.algorithm:>6}: final {row.final_value:.6f}  target {row.target:.6f}  error {row.error:.2e}")
