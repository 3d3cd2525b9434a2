"""
How close is the mean-based compensation to the real errors?
============================================================

After M detections the compensation is roughly normal with the error's
mean and variance / M.  The 1-D Wasserstein distance measures the gap to
the true (atom + mixture) error law, and a closed-form bound caps it.
"""

# %%
from resilient_consensus.analysis import (
    attack_compensation_distance,
    cdf_grid,
    malicious_M,
    wasserstein_bound_gmm,
)
from resilient_consensus.config import load
from resilient_consensus.engine import run_single

cfg = load("fig4_wasserstein").run
attack = cfg.misbehaving[0].model
M = malicious_M(run_single(cfg, record=False).summary, 0)
print("fewest detections before isolation, M =", M)
print(f"distance {attack_compensation_distance(attack, M):.4f}, bound {wasserstein_bound_gmm(attack, M):.4f}")

# %%
# The distance depends on M alone once the model is fixed.
for m in (2, 5, 10, 20, 40):
    d = attack_compensation_distance(attack, m)
    b = wasserstein_bound_gmm(attack, m)
    print(f"M={m:>2}: distance {d:.4f}  bound {b:.4f}")

# %%
# CDF curves for plotting elsewhere: columns x, F_error, F_compensation.
grid = cdf_grid(attack, M, points=9)
for row in grid:
    print("  ".join(f"{v:+.4f}" for v in row))
