"""Seeded synchronous-round simulations and Monte-Carlo batches."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _random
from .adversary import Misbehavior
from .graph import Topology, WeightMatrix, build_weights, connected_erdos_renyi, is_connected
from .msr import MsrParams, step_wmsr
from .protocol import (
    DetectionOutcome,
    Network,
    RoundResult,
    make_network,
    step_ddcc,
    step_plain,
    step_sdcc,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("ddcc", "sdcc", "wmsr", "plain")
DEFAULT_HORIZON = {"ddcc": 500, "sdcc": 1000, "wmsr": 500, "plain": 500}


class ConfigError(ValueError):
    """Malformed or out-of-range experiment configuration."""


class AssumptionError(ValueError):
    """The configured network violates a modelling assumption."""


@dataclass(frozen=True)
class GraphSpec:
    kind: str = "erdos_renyi"
    n: int = 10
    p_edge: float = 0.7
    seed: int | None = None
    edges: tuple[tuple[int, int], ...] = ()
    edges_file: str | None = None


@dataclass(frozen=True)
class RunConfig:
    graph: GraphSpec = field(default_factory=GraphSpec)
    weight_scheme: str = "perron"
    gamma: float | None = None
    initial_values: tuple[float, ...] | None = None
    initial_range: tuple[float, float] = (0.0, 2.0)
    misbehaving: tuple[Misbehavior, ...] = ()
    algorithm: str = "ddcc"
    alpha: float = 5.0
    rho: float = 0.9
    delta: float | None = None
    link_reliability: float = 1.0
    horizon: int | None = None
    seed: int = 0
    runs: int = 1
    msr_trim: int = 1

    @property
    def steps(self) -> int:
        return self.horizon if self.horizon is not None else DEFAULT_HORIZON[self.algorithm]

    def with_algorithm(self, algorithm: str) -> RunConfig:
        from dataclasses import replace

        return replace(self, algorithm=algorithm)


@dataclass(frozen=True)
class Setup:
    """Everything shared by all runs of one configuration."""

    topology: Topology
    weights: WeightMatrix
    initial: np.ndarray
    graph_seed: int | None
    misbehaving: dict[int, Misbehavior]


def validate(cfg: RunConfig) -> None:
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {cfg.algorithm!r}; expected one of {ALGORITHMS}")
    if not 0.0 <= cfg.link_reliability <= 1.0:
        raise ConfigError("link_reliability must lie in [0, 1]")
    if cfg.steps < 1:
        raise ConfigError("horizon must be >= 1")
    if cfg.runs < 1:
        raise ConfigError("runs must be >= 1")
    if cfg.alpha <= 0 or not 0.0 <= cfg.rho < 1.0:
        raise ConfigError("need alpha > 0 and 0 <= rho < 1")
    if cfg.delta is not None and cfg.delta < 0:
        raise ConfigError("delta must be >= 0")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    if cfg.msr_trim < 0:
        raise ConfigError("msr trim must be >= 0")
    ids = [m.node for m in cfg.misbehaving]
    if len(set(ids)) != len(ids):
        raise ConfigError("a node is listed as misbehaving twice")


def _topology(cfg: RunConfig) -> tuple[Topology, int | None]:
    g = cfg.graph
    if g.kind == "erdos_renyi":
        seed = g.seed if g.seed is not None else cfg.seed
        try:
            return connected_erdos_renyi(g.n, g.p_edge, seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if g.kind == "edges":
        try:
            t = Topology.read(g.edges_file) if g.edges_file else Topology(g.n, g.edges)
        except OSError as exc:
            raise ConfigError(f"cannot read edge list: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not is_connected(t):
            raise AssumptionError("the communication graph is disconnected")
        return t, None
    raise ConfigError(f"unknown graph kind {g.kind!r}")


def prepare(cfg: RunConfig) -> Setup:
    """Build topology, weights and initial states; check the assumptions."""
    validate(cfg)
    t, graph_seed = _topology(cfg)
    bad = [m.node for m in cfg.misbehaving if not 0 <= m.node < t.n]
    if bad:
        raise ConfigError(f"misbehaving node ids out of range: {bad}")
    adv = {m.node: m for m in cfg.misbehaving}
    for a in adv:
        for b in adv:
            if a < b and t.has_edge(a, b):
                raise AssumptionError(
                    f"misbehaving nodes {a} and {b} are neighbours (Assumption 1 requires them to be non-adjacent)"
                )
    for m in adv.values():
        if m.channel == "echo" and m.target is not None and not t.has_edge(m.node, m.target):
            raise ConfigError(f"echo target {m.target} is not a neighbour of node {m.node}")
    try:
        weights = build_weights(t, cfg.weight_scheme, cfg.gamma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.initial_values is not None:
        x0 = np.array(cfg.initial_values, dtype=float)
        if x0.shape != (t.n,):
            raise ConfigError(f"expected {t.n} initial values, got {x0.size}")
    else:
        lo, hi = cfg.initial_range
        x0 = _random.stream(cfg.seed, "initial").uniform(lo, hi, t.n)
    return Setup(t, weights, x0, graph_seed, adv)


def sample_link_mask(topology: Topology, p: float, rng: np.random.Generator) -> list[list[bool]]:
    """Symmetric delivery flags, one Bernoulli(p) draw per edge (sorted order)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    n = topology.n
    mask = [[False] * n for _ in range(n)]
    edges = topology.sorted_edges()
    draws = rng.random(len(edges)) < p
    for (a, b), ok in zip(edges, draws.tolist()):
        mask[a][b] = mask[b][a] = ok
    return mask


@dataclass
class Trace:
    """Per-round observables; row ``k`` is taken at the start of round ``k``.

    ``inputs[k]`` is the input entering ``x(k+1)`` (a normal node's released
    compensation, a misbehaving node's error) and ``ledgers[k]`` is what is
    still held back after that release.  The last row has no error draw.
    """

    states: np.ndarray
    inputs: np.ndarray
    ledgers: np.ndarray
    flags: np.ndarray
    isolated_counts: np.ndarray
    active: np.ndarray
    detections: list[DetectionOutcome]
    normal: tuple[int, ...]

    @property
    def rounds(self) -> int:
        return self.states.shape[0]


@dataclass
class ExperimentSummary:
    algorithm: str
    run: int
    seed: int
    graph_seed: int | None
    horizon: int
    initial: list[float]
    final_states: list[float]
    retained: list[int]
    normal: list[int]
    isolation_rounds: dict[int, int]
    first_detections: dict[int, dict[int, int]] = field(default_factory=dict)
    detections_at_isolation: dict[int, dict[int, int]] = field(default_factory=dict)
    window_detections: dict[int, dict[int, int]] = field(default_factory=dict)
    scheme4: dict[int, dict[int, dict[str, float]]] = field(default_factory=dict)
    residual_connected: bool = True
    stopped_early: bool = False

    @property
    def target(self) -> float:
        return float(np.mean([self.initial[i] for i in self.retained]))

    @property
    def final_value(self) -> float:
        return float(np.mean([self.final_states[i] for i in self.retained]))

    @property
    def error(self) -> float:
        return abs(self.final_value - self.target)

    @property
    def max_deviation(self) -> float:
        t = self.target
        return max(abs(self.final_states[i] - t) for i in self.retained)


@dataclass
class BatchSummary:
    runs: list[ExperimentSummary]

    @property
    def count(self) -> int:
        return len(self.runs)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.final_value for r in self.runs])

    @property
    def target(self) -> float:
        return self.runs[0].target

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def variance(self) -> float:
        return float(self.values.var(ddof=1)) if self.count > 1 else 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass
class RunResult:
    summary: ExperimentSummary
    trace: Trace | None
    network: Network | None = None


def _error_rngs(cfg: RunConfig, setup: Setup, run: int) -> dict[int, np.random.Generator]:
    return {m: _random.stream(cfg.seed, "error", m, run) for m in setup.misbehaving}


def _summarize_dcc(cfg, setup, net: Network, run: int, window_counts, stopped) -> ExperimentSummary:
    t = setup.topology
    retained = [i for i in range(t.n) if net.active[i]]
    first, at_iso, s4 = {}, {}, {}
    for i in setup.misbehaving:
        first[i], at_iso[i], s4[i] = {}, {}, {}
        for j in t.neighbors[i]:
            node = net.nodes.get(j)
            if node is None:
                continue
            rec = node.records[i]
            if rec.first_detection is not None:
                first[i][j] = rec.first_detection
            if rec.detections_at_isolation is not None:
                at_iso[i][j] = rec.detections_at_isolation
            s4[i][j] = {
                "m": rec.detections,
                "mean": rec.mean_share,
                "eta4": rec.eta4,
                "baseline": rec.baseline,
            }
    sub, _ = t.without(set(range(t.n)) - set(retained))
    stochastic = cfg.algorithm == "sdcc"
    return ExperimentSummary(
        algorithm=cfg.algorithm,
        run=run,
        seed=cfg.seed,
        graph_seed=setup.graph_seed,
        horizon=cfg.steps,
        initial=setup.initial.tolist(),
        final_states=net.x.tolist(),
        retained=retained,
        normal=sorted(net.nodes),
        isolation_rounds=dict(net.isolation_rounds),
        first_detections=first,
        detections_at_isolation={i: v for i, v in at_iso.items() if v} if stochastic else {},
        window_detections=window_counts if stochastic else {},
        scheme4=s4,
        residual_connected=is_connected(sub),
        stopped_early=stopped,
    )


def _run_dcc(cfg: RunConfig, setup: Setup, run: int, record: bool, stop) -> RunResult:
    t = setup.topology
    n = t.n
    K = cfg.steps
    net = make_network(
        setup.weights,
        setup.initial,
        setup.misbehaving,
        _error_rngs(cfg, setup, run),
        alpha=cfg.alpha,
        rho=cfg.rho,
        delta=cfg.delta,
    )
    link_rng = _random.stream(cfg.seed, "link", run)
    p = cfg.link_reliability
    window_ends: dict[int, list[int]] = {}
    for i, m in setup.misbehaving.items():
        end = m.model.window.end
        if end is not None:
            window_ends.setdefault(end, []).append(i)
    window_counts: dict[int, dict[int, int]] = {}

    if record:
        states = np.zeros((K + 1, n))
        inputs = np.zeros((K + 1, n))
        ledgers = np.zeros((K + 1, n))
        flags = np.zeros((K + 1, n), dtype=int)
        iso = np.zeros((K + 1, n), dtype=int)
        active = np.zeros((K + 1, n), dtype=bool)
        detections: list[DetectionOutcome] = []

        def snapshot(k):
            states[k] = net.x
            active[k] = net.active
            for j, node in net.nodes.items():
                inputs[k, j] = node.last_input
                ledgers[k, j] = node.ledger
                flags[k, j] = int(node.flag)
                iso[k, j] = len(node.isolated)

    stopped = False
    for k in range(K):
        if record:
            snapshot(k)
        if cfg.algorithm == "sdcc":
            res = step_sdcc(net, sample_link_mask(t, p, link_rng), k)
        else:
            res = step_ddcc(net, k)
        if record:
            for m in setup.misbehaving:
                inputs[k, m] = res.inputs[m]
            detections.extend(res.detections)
        for i in window_ends.get(k, ()):
            window_counts[i] = {
                j: net.nodes[j].records[i].detections for j in t.neighbors[i] if j in net.nodes
            }
        if stop is not None and stop(net, res):
            stopped = True
            break
    summary = _summarize_dcc(cfg, setup, net, run, window_counts, stopped)
    trace = None
    if record:
        last = k + 1
        snapshot(last)
        sl = slice(0, last + 1)
        trace = Trace(
            states[sl], inputs[sl], ledgers[sl], flags[sl], iso[sl], active[sl], detections, tuple(sorted(net.nodes))
        )
    return RunResult(summary, trace, net)


def _injections(setup: Setup, rngs, k: int) -> dict[int, float]:
    out = {}
    W = setup.weights.matrix
    t = setup.topology
    for i, m in setup.misbehaving.items():
        e = m.model.error(k, rngs.get(i))
        if m.channel == "echo":
            target = m.target if m.target is not None else t.neighbors[i][0]
            e = W[i, target] * e
        out[i] = e
    return out


def _run_simple(cfg: RunConfig, setup: Setup, run: int, record: bool) -> RunResult:
    """``plain`` and ``wmsr``: no auditing, no ledgers."""
    t = setup.topology
    n = t.n
    K = cfg.steps
    rngs = _error_rngs(cfg, setup, run)
    x = setup.initial.copy()
    states = np.zeros((K + 1, n)) if record else None
    inputs = np.zeros((K + 1, n)) if record else None
    params = MsrParams(cfg.msr_trim)
    for k in range(K):
        inj = _injections(setup, rngs, k)
        if record:
            states[k] = x
            for i, e in inj.items():
                inputs[k, i] = e
        if cfg.algorithm == "wmsr":
            x = step_wmsr(x, t, params, inj, setup.misbehaving, setup.weights)
        else:
            e = np.zeros(n)
            for i, v in inj.items():
                e[i] = v
            x = setup.weights.matrix @ x + e
    if cfg.algorithm == "wmsr":
        retained = [i for i in range(n) if not (i in setup.misbehaving and setup.misbehaving[i].role == "malicious")]
    else:
        retained = list(range(n))
    normal = [i for i in range(n) if i not in setup.misbehaving]
    summary = ExperimentSummary(
        algorithm=cfg.algorithm,
        run=run,
        seed=cfg.seed,
        graph_seed=setup.graph_seed,
        horizon=K,
        initial=setup.initial.tolist(),
        final_states=x.tolist(),
        retained=retained,
        normal=normal,
        isolation_rounds={},
    )
    trace = None
    if record:
        states[K] = x
        zeros = np.zeros((K + 1, n))
        trace = Trace(
            states,
            inputs,
            zeros,
            zeros.astype(int),
            zeros.astype(int),
            np.ones((K + 1, n), dtype=bool),
            [],
            tuple(normal),
        )
    return RunResult(summary, trace)


def run_single(
    cfg: RunConfig,
    run: int = 0,
    record: bool = True,
    setup: Setup | None = None,
    stop: Callable[[Network, RoundResult], bool] | None = None,
) -> RunResult:
    """Simulate one run; deterministic in ``(cfg, run)``.

    ``stop`` (D-DCC/S-DCC only) is called after every round and ends the run
    early when it returns true.
    """
    setup = setup or prepare(cfg)
    if cfg.algorithm in ("ddcc", "sdcc"):
        return _run_dcc(cfg, setup, run, record, stop)
    return _run_simple(cfg, setup, run, record)


def run_monte_carlo(cfg: RunConfig, runs: int | None = None, setup: Setup | None = None) -> BatchSummary:
    """``runs`` independent runs sharing topology and initial states."""
    R = cfg.runs if runs is None else runs
    if R < 1:
        raise ConfigError("runs must be >= 1")
    setup = setup or prepare(cfg)
    out = []
    for r in range(R):
        out.append(run_single(cfg, r, record=False, setup=setup).summary)
        if (r + 1) % 100 == 0:
            log.info("monte carlo: %d/%d runs", r + 1, R)
    return BatchSummary(out)


def first_detection_times(
    cfg: RunConfig, target: int, detector: int | None = None, runs: int | None = None, setup: Setup | None = None
) -> np.ndarray:
    """Rounds elapsed until ``detector`` first sees a nonzero error from ``target``.

    A detection in round ``k`` (audit of ``x(k+1)``) counts as ``k + 1``
    elapsed rounds.  Runs stop at the first detection; a run that never
    detects within the horizon yields ``nan``.
    """
    setup = setup or prepare(cfg)
    if detector is None:
        detector = min(j for j in setup.topology.neighbors[target] if j not in setup.misbehaving)
    R = cfg.runs if runs is None else runs

    def seen(net, res):
        return net.nodes[detector].records[target].first_detection is not None

    out = np.full(R, np.nan)
    for r in range(R):
        res = run_single(cfg, r, record=False, setup=setup, stop=seen)
        k = res.summary.first_detections.get(target, {}).get(detector)
        if k is not None:
            out[r] = k + 1
    return out


def compare(cfg: RunConfig, algorithms: Sequence[str], setup: Setup | None = None) -> list[ExperimentSummary]:
    """Run each algorithm on identical topology, initial states and error streams."""
    if not algorithms:
        raise ConfigError("comparison list is empty")
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}")
    setup = setup or prepare(cfg)
    return [run_single(cfg.with_algorithm(a), 0, record=False, setup=setup).summary for a in algorithms]


def detect_convergence(trace: Trace, tol: float, window: int = 1) -> int | None:
    """First row from which the spread of the retained states stays below
    ``tol`` for ``window`` consecutive rows."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    keep = trace.active[-1]
    x = trace.states[:, keep]
    spread = x.max(axis=1) - x.min(axis=1)
    ok = spread < tol
    run = 0
    for k, flag in enumerate(ok):
        run = run + 1 if flag else 0
        if run >= window:
            return k - window + 1
    return None
