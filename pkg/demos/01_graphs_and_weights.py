"""
Topologies and update matrices
==============================

Build a random network, check it is connected, and compare the two
doubly stochastic weight constructions.
"""

# %%
import numpy as np

from resilient_consensus.graph import (
    Topology,
    connected_erdos_renyi,
    metropolis_weights,
    perron_weights,
)

# A 10-node G(n, p) graph.  Disconnected draws are rejected and the seed is
# bumped until one is connected; the seed actually used is returned.
topology, seed_used = connected_erdos_renyi(10, 0.7, seed=1)
print("seed used:", seed_used)
print("degrees:  ", topology.degrees)
print("edges:    ", len(topology.edges))

# %%
# Perron weights W = I - gamma L need 0 < gamma < 1/d_max.
gamma = 0.9 / topology.max_degree
W = perron_weights(topology, gamma).matrix
print("row sums:", np.round(W.sum(axis=1), 15))
print("col sums:", np.round(W.sum(axis=0), 15))

# Metropolis weights only need each endpoint's degree.
M = metropolis_weights(topology).matrix
print("Metropolis diagonal:", np.round(np.diag(M), 3))

# %%
# Plain iteration x <- W x keeps the sum and so converges to the mean.
x = np.random.default_rng(0).uniform(0, 2, topology.n)
target = x.mean()
for _ in range(300):
    x = W @ x
print(f"target {target:.12f}, spread after 300 rounds {np.ptp(x):.2e}")

# %%
# Edge lists round-trip through a small text format: n, then "i j" lines.
text = Topology(3, [(0, 1), (1, 2)]).to_edgelist()
print(text)
assert Topology.from_edgelist(text).edges == {(0, 1), (1, 2)}
