"""
Link failures and consensus in expectation
==========================================

With links delivering only 80% of broadcasts, some errors go unseen.  Each
neighbour estimates them from the mean of the errors it did see.  The
outcome is random, but its expectation is the exact average.
"""

# %%
import math
from dataclasses import replace

from resilient_consensus.analysis import analyze_batch, variance_inputs, variance_bound
from resilient_consensus.config import load
from resilient_consensus.engine import run_monte_carlo, run_single

cfg = load("table2_batch").run
one = run_single(cfg, run=0, record=False).summary
print("node 0 isolated at round", one.isolation_rounds.get(0))
print("detections per neighbour at isolation:", one.detections_at_isolation.get(0))
print(f"final {one.final_value:.4f} vs target {one.target:.4f}")
print("per-run variance bound:", round(variance_bound(variance_inputs(one, cfg)), 4))

# %%
# A modest batch (the bundled recipe runs 1000).
batch = run_monte_carlo(replace(cfg, runs=100))
se = batch.std / math.sqrt(batch.count)
print(f"{batch.count} runs: mean {batch.mean:.4f} +- {se:.4f}, target {batch.target:.4f}")
for key, value in analyze_batch(batch, cfg).items:
    print(f"  {key} = {value}")
