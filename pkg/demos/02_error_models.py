"""
Error models of misbehaving nodes
=================================

Deterministic sequences, Bernoulli x Gaussian-mixture errors, and the
moments and CDFs the analysis layer relies on.
"""

# %%
import numpy as np

from resilient_consensus._random import stream
from resilient_consensus.adversary import (
    DeterministicErrorModel,
    GmmSpec,
    StochasticErrorModel,
    Window,
    error_cdf,
    mixture_moments,
    sample_errors,
)

cosine = DeterministicErrorModel("cosine", amplitude=0.5, frequency=1.0)
fading = DeterministicErrorModel("geometric", amplitude=0.5, ratio=0.6)
print("cosine:", [round(cosine.error(k), 3) for k in range(6)])
print("fading:", [round(fading.error(k), 4) for k in range(6)])

# A finite window turns any law into a transient fault.
burst = DeterministicErrorModel("constant", amplitude=0.2, window=Window(3, 5))
print("burst: ", [burst.error(k) for k in range(8)])

# %%
# Attacks happen with probability theta; their size follows a mixture.
gmm = GmmSpec(((0.5, 0.05, 0.05), (0.5, 0.15, 0.2)))
attack = StochasticErrorModel(theta=0.8, gmm=gmm)
mu, var = mixture_moments(gmm)
print(f"mixture mean {mu:.4f}, variance {var:.4f}")
print(f"error mean {attack.mean:.4f}, error variance {attack.error_variance:.4f}")

draws = sample_errors(attack, stream(7, "demo"), 200_000)
print(f"sampled mean {draws.mean():.4f}, variance {draws.var():.4f}, zeros {np.mean(draws == 0):.3f}")

# %%
# The error CDF has an atom of mass 1 - theta at zero.
for x in (-0.5, -1e-9, 0.0, 0.5):
    print(f"F({x:+.1e}) = {error_cdf(attack, x):.4f}")
