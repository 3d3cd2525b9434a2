"""W-MSR baseline: trim extreme neighbour values, average the rest."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Collection, Mapping

import numpy as np

from .graph import Topology, WeightMatrix


@dataclass(frozen=True)
class MsrParams:
    trim: int = 1

    def __post_init__(self):
        if self.trim < 0:
            raise ValueError("trim count must be >= 0")


def wmsr_update(own: float, neighbor_values, trim: int) -> float:
    """Drop up to ``trim`` values strictly above ``own`` (largest first) and
    up to ``trim`` strictly below (smallest first); equal-weight average of
    ``own`` and the survivors."""
    vals = sorted(neighbor_values)
    above = [v for v in vals if v > own]
    below = [v for v in vals if v < own]
    equal = [v for v in vals if v == own]
    keep = below[min(trim, len(below)):] + equal + above[: len(above) - min(trim, len(above))]
    return (own + sum(keep)) / (1 + len(keep))


def step_wmsr(
    states: np.ndarray,
    topology: Topology,
    params: MsrParams,
    injections: Mapping[int, float] | None = None,
    misbehaving: Collection[int] = (),
    weights: WeightMatrix | None = None,
) -> np.ndarray:
    """One synchronous W-MSR round.

    Normal nodes apply :func:`wmsr_update`.  Nodes in ``misbehaving`` ignore
    the trimming rule and follow the nominal weighted update (``weights``,
    or plain neighbourhood averaging if none is given) plus their injected
    error.
    """
    x = np.asarray(states, dtype=float)
    injections = injections or {}
    out = np.empty_like(x)
    xl = x.tolist()
    for i in range(topology.n):
        nb = topology.neighbors[i]
        if i in misbehaving:
            if weights is not None:
                val = float(weights.matrix[i] @ x)
            else:
                val = (xl[i] + sum(xl[l] for l in nb)) / (1 + len(nb))
            out[i] = val + injections.get(i, 0.0)
        else:
            out[i] = wmsr_update(xl[i], [xl[l] for l in nb], params.trim)
    return out
