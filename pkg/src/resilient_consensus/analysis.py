"""Post-hoc metrics: consensus error, variance and deviation bounds, and
1-D Wasserstein distances between error and compensation laws."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .adversary import GmmSpec, StochasticErrorModel, error_cdf, normal_cdf
from .engine import BatchSummary, ExperimentSummary, RunConfig


@dataclass(frozen=True)
class MaliciousTerm:
    node: int
    k_iso: int
    M: int
    sigma2: float

    def __post_init__(self):
        if self.M > self.k_iso:
            raise ValueError(f"M={self.M} exceeds k_iso={self.k_iso}")
        if self.sigma2 < 0:
            raise ValueError("variance must be >= 0")


@dataclass(frozen=True)
class FaultyTerm:
    node: int
    k0: int
    k1: int
    p: float
    theta: float
    mu: float
    sigma2: float
    M: int

    def __post_init__(self):
        if self.k0 > self.k1:
            raise ValueError("k0 must not exceed k1")
        if self.sigma2 < 0:
            raise ValueError("variance must be >= 0")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must lie in (0, 1]")


@dataclass(frozen=True)
class VarianceBoundInputs:
    malicious: tuple[MaliciousTerm, ...] = ()
    faulty: tuple[FaultyTerm, ...] = ()


def d_malicious(k_iso: int, M: int, sigma2: float) -> float:
    if M <= 0:
        return math.inf
    gap = k_iso - M
    return gap * (1.0 + gap / M) * sigma2


def d_faulty(k0: int, k1: int, p: float, theta: float, mu: float, sigma2: float, M: int) -> float:
    if M <= 0:
        return math.inf
    span = k1 - k0
    link = (1.0 - p) / p**2 * (sigma2 / M + theta**2 * mu**2)
    return link + span * (1.0 + span / M) * sigma2


def variance_bound(inputs: VarianceBoundInputs) -> float:
    """Sum of the per-node variance terms; ``inf`` if any ``M`` is zero."""
    total = 0.0
    for t in inputs.malicious:
        total += d_malicious(t.k_iso, t.M, t.sigma2)
    for t in inputs.faulty:
        total += d_faulty(t.k0, t.k1, t.p, t.theta, t.mu, t.sigma2, t.M)
    return total


def deviation_bound(alpha: float, rho: float, n_malicious: int, n_remaining: int) -> float:
    """``alpha * rho * |V_m| / ((1 - rho) * |V_r|)``."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if n_remaining < 1:
        raise ValueError("need at least one remaining node")
    return alpha * rho * n_malicious / ((1.0 - rho) * n_remaining)


def _model_moments(model) -> tuple[float, float, float]:
    """``(theta, mu, error variance)``; deterministic laws carry no variance."""
    if isinstance(model, StochasticErrorModel):
        return model.theta, model.mu, model.error_variance
    return 1.0, 0.0, 0.0


def variance_inputs(summary: ExperimentSummary, cfg: RunConfig) -> VarianceBoundInputs:
    """Per-run bound inputs from the recorded statistics.

    A node isolated while auditing round ``k`` is out from ``k + 1`` on, so
    that is its ``k_iso``.  ``M`` is the smallest detection count over its
    normal neighbours, taken at isolation (malicious) or at the end of the
    error window (faulty).  A malicious node never isolated is charged up
    to the horizon with its final counts.
    """
    mal, fau = [], []
    for m in cfg.misbehaving:
        theta, mu, s2 = _model_moments(m.model)
        if m.role == "malicious":
            if m.node in summary.isolation_rounds:
                k_iso = summary.isolation_rounds[m.node] + 1
                counts = summary.detections_at_isolation.get(m.node, {})
            else:
                k_iso = summary.horizon
                counts = {j: int(v["m"]) for j, v in summary.scheme4.get(m.node, {}).items()}
            M = min(counts.values()) if counts else 0
            mal.append(MaliciousTerm(m.node, k_iso, min(M, k_iso), s2))
        else:
            w = m.model.window
            k0 = w.start - 1
            k1 = w.end if w.end is not None else summary.horizon
            counts = summary.window_detections.get(m.node)
            if counts is None:
                counts = {j: int(v["m"]) for j, v in summary.scheme4.get(m.node, {}).items()}
            M = min(counts.values()) if counts else 0
            fau.append(FaultyTerm(m.node, k0, k1, cfg.link_reliability, theta, mu, s2, M))
    return VarianceBoundInputs(tuple(mal), tuple(fau))


def worst_case_inputs(batch: BatchSummary, cfg: RunConfig) -> VarianceBoundInputs:
    """Per node, the latest isolation and the fewest detections seen in any run."""
    per_run = [variance_inputs(s, cfg) for s in batch.runs]
    mal = []
    for terms in zip(*(vi.malicious for vi in per_run)):
        k_iso = max(t.k_iso for t in terms)
        mal.append(MaliciousTerm(terms[0].node, k_iso, min(t.M for t in terms), terms[0].sigma2))
    fau = []
    for terms in zip(*(vi.faulty for vi in per_run)):
        fau.append(replace(terms[0], M=min(t.M for t in terms)))
    return VarianceBoundInputs(tuple(mal), tuple(fau))


def worst_case_variance_bound(batch: BatchSummary, cfg: RunConfig) -> float:
    return variance_bound(worst_case_inputs(batch, cfg))


def run_deviation_bound(summary: ExperimentSummary, cfg: RunConfig) -> float:
    """Deviation bound with the network-wide ``alpha = N * alpha_i``."""
    n_mal = sum(1 for m in cfg.misbehaving if m.role == "malicious")
    n = len(summary.initial)
    return deviation_bound(n * cfg.alpha, cfg.rho, n_mal, len(summary.retained))


def consensus_error(summary: ExperimentSummary) -> float:
    """``|mean of final retained states - mean of their initial states|``."""
    keep = summary.retained
    final = math.fsum(summary.final_states[i] for i in keep) / len(keep)
    target = math.fsum(summary.initial[i] for i in keep) / len(keep)
    return abs(final - target)


# --- Wasserstein ----------------------------------------------------------


class RefinementError(RuntimeError):
    pass


def _midpoint_integral(f, pieces: Sequence[tuple[float, float]], per_unit: float) -> float:
    total = 0.0
    for lo, hi in pieces:
        m = max(2, int(math.ceil((hi - lo) * per_unit)))
        h = (hi - lo) / m
        xs = lo + h * (np.arange(m) + 0.5)
        total += h * float(np.sum(f(xs)))
    return total


def wasserstein_1d(
    cdf_a: Callable,
    cdf_b: Callable,
    support: tuple[float, float],
    grid: int = 2000,
    tol: float = 1e-6,
    breakpoints: Iterable[float] = (),
    max_halvings: int = 16,
) -> float:
    """``integral |F_a - F_b| dx`` over ``support``.

    Composite midpoint rule, so CDF jumps at ``breakpoints`` are never
    sampled; the step is halved until two successive estimates differ by
    less than ``tol``.  Both CDFs must accept numpy arrays.
    """
    lo, hi = float(support[0]), float(support[1])
    if not hi > lo:
        raise ValueError("empty support")
    cuts = sorted({lo, hi, *(float(b) for b in breakpoints if lo < b < hi)})
    pieces = list(zip(cuts[:-1], cuts[1:]))

    def gap(xs):
        return np.abs(np.asarray(cdf_a(xs), dtype=float) - np.asarray(cdf_b(xs), dtype=float))

    per_unit = grid / (hi - lo)
    prev = _midpoint_integral(gap, pieces, per_unit)
    for _ in range(max_halvings):
        per_unit *= 2
        cur = _midpoint_integral(gap, pieces, per_unit)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise RefinementError(f"no convergence to {tol} after {max_halvings} halvings")


def compensation_moments(model: StochasticErrorModel, M: int) -> tuple[float, float]:
    """Mean and variance of the mean-based compensation after ``M`` detections."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return model.mean, model.error_variance / M


def compensation_cdf(model: StochasticErrorModel, M: int) -> Callable:
    mean, var = compensation_moments(model, M)
    sd = math.sqrt(var)

    def cdf(x):
        return normal_cdf((np.asarray(x, dtype=float) - mean) / sd)

    return cdf


def wasserstein_support(model: StochasticErrorModel, width: float = 10.0) -> tuple[float, float]:
    """Covers ``theta*mu +- width*sigma_eps``, every component ``+- width*sigma``, and 0."""
    c = model.mean
    s = math.sqrt(model.error_variance)
    lo, hi = min(c - width * s, 0.0), max(c + width * s, 0.0)
    for _, m, v in model.gmm.components:
        lo = min(lo, m - width * math.sqrt(v))
        hi = max(hi, m + width * math.sqrt(v))
    return lo, hi


def attack_compensation_distance(model: StochasticErrorModel, M: int, grid: int = 2000, tol: float = 1e-6) -> float:
    """Distance between the error law and its compensation law."""
    return wasserstein_1d(
        lambda x: error_cdf(model, x),
        compensation_cdf(model, M),
        wasserstein_support(model),
        grid=grid,
        tol=tol,
        breakpoints=(0.0,),
    )


def expected_abs_normal(mu: float, sigma: float) -> float:
    """``E|Z|`` for ``Z ~ N(mu, sigma^2)`` (folded-normal mean)."""
    return float(
        math.sqrt(2.0 / math.pi) * sigma * math.exp(-(mu * mu) / (2.0 * sigma * sigma))
        + mu * (1.0 - 2.0 * normal_cdf(-mu / sigma))
    )


def expected_abs_gmm(gmm: GmmSpec) -> float:
    return sum(a * expected_abs_normal(m, math.sqrt(v)) for a, m, v in gmm.components)


def wasserstein_bound_gmm(model: StochasticErrorModel, M: int) -> float:
    """Upper bound on :func:`attack_compensation_distance` for a GMM error law."""
    if M < 1:
        raise ValueError("M must be >= 1")
    theta = model.theta
    s_bar = math.sqrt(model.error_variance / M)
    total = (1.0 - theta) * expected_abs_gmm(model.gmm)
    for a, m, v in model.gmm.components:
        total += a * (abs(theta * model.mu - m) + abs(s_bar - math.sqrt(v)))
    return total


def cdf_grid(model: StochasticErrorModel, M: int, points: int = 401) -> np.ndarray:
    """Rows ``(x, F_error(x), F_compensation(x))`` on the analysis support."""
    lo, hi = wasserstein_support(model, width=4.0)
    xs = np.linspace(lo, hi, points)
    return np.column_stack([xs, error_cdf(model, xs), compensation_cdf(model, M)(xs)])


def malicious_M(summary: ExperimentSummary, node: int) -> int | None:
    """Smallest neighbour detection count at isolation, if ``node`` was isolated."""
    counts = summary.detections_at_isolation.get(node)
    return min(counts.values()) if counts else None


# --- reports --------------------------------------------------------------


@dataclass
class AnalysisReport:
    """Ordered key/value pairs written as ``key = value`` lines."""

    items: list[tuple[str, object]] = field(default_factory=list)

    def add(self, key: str, value) -> None:
        self.items.append((key, value))

    def as_dict(self) -> dict:
        return dict(self.items)


def analyze_run(summary: ExperimentSummary, cfg: RunConfig, wasserstein: bool = True, bounds: bool = True) -> AnalysisReport:
    rep = AnalysisReport()
    err = consensus_error(summary)
    rep.add("consensus_error", err)
    if bounds and cfg.algorithm in ("ddcc", "sdcc"):
        dev = run_deviation_bound(summary, cfg)
        rep.add("deviation_bound", dev)
        rep.add("deviation_within_bound", err <= dev)
        if cfg.algorithm == "sdcc":
            rep.add("variance_bound", variance_bound(variance_inputs(summary, cfg)))
    if wasserstein and cfg.algorithm == "sdcc":
        for m in cfg.misbehaving:
            if m.role != "malicious" or not isinstance(m.model, StochasticErrorModel):
                continue
            M = malicious_M(summary, m.node)
            if not M:
                rep.add(f"node{m.node}.wasserstein", "undefined (no detections before isolation)")
                continue
            w = attack_compensation_distance(m.model, M)
            b = wasserstein_bound_gmm(m.model, M)
            rep.add(f"node{m.node}.M", M)
            rep.add(f"node{m.node}.wasserstein", w)
            rep.add(f"node{m.node}.wasserstein_bound", b)
            rep.add(f"node{m.node}.wasserstein_within_bound", w <= b + 1e-6)
    return rep


def analyze_batch(batch: BatchSummary, cfg: RunConfig, bounds: bool = True) -> AnalysisReport:
    rep = AnalysisReport()
    sd = batch.std
    rep.add("runs", batch.count)
    rep.add("target", batch.target)
    rep.add("mean", batch.mean)
    rep.add("variance", batch.variance)
    rep.add("mean_error", abs(batch.mean - batch.target))
    tol = 3.0 * sd / math.sqrt(batch.count) if batch.count > 1 else 0.0
    rep.add("mean_tolerance_3se", tol)
    rep.add("mean_within_tolerance", abs(batch.mean - batch.target) <= tol)
    if bounds and cfg.algorithm in ("ddcc", "sdcc"):
        vb = worst_case_variance_bound(batch, cfg)
        rep.add("variance_bound_worst_case", vb)
        rep.add("variance_within_bound", batch.variance <= vb)
        devs = [consensus_error(s) for s in batch.runs]
        dev_b = min(run_deviation_bound(s, cfg) for s in batch.runs)
        rep.add("max_run_deviation", max(devs))
        rep.add("deviation_bound", dev_b)
        rep.add("deviations_within_bound", max(devs) <= dev_b)
    return rep
