"""Error processes of misbehaving nodes.

Two kinds of error law are supported:

* :class:`DeterministicErrorModel` -- closed-form sequences (cosine,
  geometric, constant, or a literal table), used for the reliable-link
  experiments.
* :class:`StochasticErrorModel` -- ``X * Y`` with ``X ~ Bernoulli(theta)``
  and ``Y`` a Gaussian mixture, used when links may fail.

Both carry an activity window ``[start, end]`` outside of which the error is
exactly zero; a finite window models a faulty node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import erfc

SQRT2 = math.sqrt(2.0)


def normal_cdf(z):
    """Standard normal CDF through ``erfc``; accurate in both tails."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / SQRT2)


@dataclass(frozen=True)
class Window:
    start: int = 0
    end: int | None = None

    def __post_init__(self):
        if self.start < 0:
            raise ValueError("window start must be >= 0")
        if self.end is not None and self.end < self.start:
            raise ValueError("window end precedes start")

    def __contains__(self, k: int) -> bool:
        return k >= self.start and (self.end is None or k <= self.end)


@dataclass(frozen=True)
class GmmSpec:
    """Gaussian mixture given as ``(weight, mean, variance)`` triples."""

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = tuple((float(a), float(m), float(v)) for a, m, v in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        if any(a < 0 for a, _, _ in comps):
            raise ValueError("mixture weights must be nonnegative")
        if abs(sum(a for a, _, _ in comps) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if any(not v > 0 for _, _, v in comps):
            raise ValueError("component variances must be positive")
        object.__setattr__(self, "components", comps)

    @classmethod
    def normal(cls, mean: float, variance: float) -> GmmSpec:
        return cls(((1.0, mean, variance),))

    @property
    def weights(self) -> np.ndarray:
        return np.array([c[0] for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([c[1] for c in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.array([c[2] for c in self.components])

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = np.searchsorted(np.cumsum(self.weights), rng.random(size), side="right")
        idx = np.minimum(idx, len(self.components) - 1)
        return self.means[idx] + self.stds[idx] * rng.standard_normal(size)


def mixture_moments(gmm: GmmSpec) -> tuple[float, float]:
    a, m, v = gmm.weights, gmm.means, gmm.variances
    mean = float(np.dot(a, m))
    return mean, float(np.dot(a, v + m * m) - mean * mean)


def gmm_cdf(gmm: GmmSpec, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for a, m, v in gmm.components:
        out = out + a * normal_cdf((x - m) / math.sqrt(v))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class StochasticErrorModel:
    theta: float
    gmm: GmmSpec
    window: Window = field(default_factory=Window)

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")

    @property
    def mu(self) -> float:
        return mixture_moments(self.gmm)[0]

    @property
    def sigma2(self) -> float:
        return mixture_moments(self.gmm)[1]

    @property
    def mean(self) -> float:
        return self.theta * self.mu

    @property
    def error_variance(self) -> float:
        t, mu = self.theta, self.mu
        return t * self.sigma2 + (1.0 - t) * t * mu * mu

    def error(self, k: int, rng: np.random.Generator) -> float:
        return sample_error(self, rng) if k in self.window else 0.0


def sample_error(model: StochasticErrorModel, rng: np.random.Generator) -> float:
    """One draw of ``X * Y``.

    Always consumes two uniforms and one normal so the stream position does
    not depend on the outcome.
    """
    u_attack, u_comp = rng.random(2)
    z = rng.standard_normal()
    if u_attack >= model.theta:
        return 0.0
    acc = 0.0
    comps = model.gmm.components
    for a, m, v in comps:
        acc += a
        if u_comp < acc:
            return m + math.sqrt(v) * z
    _, m, v = comps[-1]
    return m + math.sqrt(v) * z


def sample_errors(model: StochasticErrorModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorised counterpart of :func:`sample_error` for large batches."""
    attack = rng.random(size) < model.theta
    return np.where(attack, model.gmm.sample(rng, size), 0.0)


def error_cdf(model: StochasticErrorModel, x):
    """CDF of ``X * Y``: an atom of mass ``1 - theta`` sits at zero."""
    x = np.asarray(x, dtype=float)
    fy = model.theta * np.asarray(gmm_cdf(model.gmm, x))
    out = np.where(x < 0, fy, 1.0 - model.theta + fy)
    return out if out.ndim else float(out)


FAMILIES = ("cosine", "geometric", "constant", "table")


@dataclass(frozen=True)
class DeterministicErrorModel:
    """Closed-form error law.

    ``cosine``: ``amplitude * cos(frequency * k)``;
    ``geometric``: ``amplitude * ratio**k``;
    ``constant``: ``amplitude``;
    ``table``: explicit ``{k: value}``, zero elsewhere.
    """

    family: str
    amplitude: float = 0.0
    frequency: float = 1.0
    ratio: float = 1.0
    table: Mapping[int, float] = field(default_factory=dict)
    window: Window = field(default_factory=Window)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown error family {self.family!r}; expected one of {FAMILIES}")
        for name in ("amplitude", "frequency", "ratio"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "table", {int(k): float(v) for k, v in dict(self.table).items()})

    def error(self, k: int, rng: np.random.Generator | None = None) -> float:
        return deterministic_error(self, k)


def deterministic_error(model: DeterministicErrorModel, k: int) -> float:
    if k < 0:
        raise ValueError("round index must be >= 0")
    if k not in model.window:
        return 0.0
    if model.family == "cosine":
        return model.amplitude * math.cos(model.frequency * k)
    if model.family == "geometric":
        return model.amplitude * model.ratio**k
    if model.family == "constant":
        return model.amplitude
    return model.table.get(k, 0.0)


ErrorModel = DeterministicErrorModel | StochasticErrorModel

ROLES = ("malicious", "faulty")
CHANNELS = ("state", "echo")


@dataclass(frozen=True)
class Misbehavior:
    """How a misbehaving node injects its errors.

    ``channel="state"`` adds the error to the node's own update (caught by
    the update-rule audit).  ``channel="echo"`` instead falsifies the echoed
    state of ``target`` by the error and updates consistently with the
    falsified value, so only ``target``'s echo audit sees it.
    """

    node: int
    model: ErrorModel
    role: str = "malicious"
    channel: str = "state"
    target: int | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}, got {self.channel!r}")


def gmm_from_triples(triples: Sequence[Sequence[float]]) -> GmmSpec:
    return GmmSpec(tuple(tuple(t) for t in triples))
