"""Detection-compensation consensus: the per-node state machine.

A round ``k -> k+1`` runs in this order:

1. every active node updates ``x(k+1) = W x(k) + eps(k)``;
2. every active node broadcasts its information set ``Psi(k+1)``;
3. every normal node audits each delivered neighbour set (echo audit and
   update-rule audit), books the detected error into its compensator ledger,
   and, in the stochastic variant, refreshes the mean-based estimate of the
   errors it could not observe;
4. any neighbour whose single-round error exceeds the detector's decaying
   bound is isolated by *all* of its neighbours, each booking its share of
   the neighbour's accumulated drift;
5. every normal node releases part of its ledger as ``eps(k+1)``.

:func:`step_ddcc` runs the round with reliable links, :func:`step_sdcc` with a
per-round link mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .adversary import Misbehavior
from .graph import Topology, WeightMatrix

ZERO_TOL = 1e-12


class InformationSet(NamedTuple):
    """Broadcast payload of ``sender`` at time ``k+1``.

    ``echoes`` holds the neighbour states at time ``k`` the sender claims to
    have used; a missing key is read as a zero state.  ``previous_state`` is
    the sender's own time-``k`` state, which the update-rule audit needs.
    """

    sender: int
    state: float
    previous_state: float
    flag: int
    declared_input: float
    echoes: Mapping[int, float]
    neighbor_count: int
    isolation_notices: frozenset[int] = frozenset()


@dataclass(slots=True)
class NeighborRecord:
    """What node ``j`` remembers about one neighbour ``i``."""

    initial_state: float
    neighbor_count: int
    samples: list[float] = field(default_factory=list)
    sample_sum: float = 0.0
    baseline: int = -1
    last_clean: int = -1
    flagged: bool = False
    eta4: float = 0.0
    first_detection: int | None = None
    detections_at_isolation: int | None = None
    last_declared: float = 0.0
    last_declared_round: int = -1

    @property
    def detections(self) -> int:
        return len(self.samples)

    @property
    def mean_share(self) -> float:
        return self.sample_sum / len(self.samples) if self.samples else 0.0


@dataclass(slots=True)
class NodeRuntime:
    id: int
    state: float
    alpha: float
    rho: float
    delta: float
    ledger: float = 0.0
    last_input: float = 0.0
    flag: bool = False
    records: dict[int, NeighborRecord] = field(default_factory=dict)
    isolated: set[int] = field(default_factory=set)
    known_isolated: set[int] = field(default_factory=set)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    _bound_round: int = field(default=-1, repr=False, compare=False)
    _bound_value: float = field(default=0.0, repr=False, compare=False)

    def bound(self, k: int) -> float:
        if k != self._bound_round:
            self._bound_round = k
            self._bound_value = self.alpha * self.rho**k
        return self._bound_value


class DetectionOutcome(NamedTuple):
    detector: int
    target: int
    k: int
    eps1: float
    eps2: float
    share: float
    bound: float
    violated: bool

    @property
    def nonzero(self) -> bool:
        return self.eps1 != 0.0 or self.eps2 != 0.0


def detect_strategy_1(j: NodeRuntime, psi: InformationSet, own_prev_state: float, w_ij: float) -> float:
    """Echo audit: how far ``psi.sender`` misreported ``j``'s state, weighted."""
    echo = psi.echoes.get(j.id, 0.0)
    return w_ij * (echo - own_prev_state)


def declared_input_accepted(j: NodeRuntime, psi: InformationSet, k: int) -> bool:
    """Whether ``psi.declared_input`` counts as legitimate compensation.

    Requires the attack flag, the detector's decaying bound, and the
    steadiness limit ``delta`` per elapsed round since the last declared
    value ``j`` saw from this sender.
    """
    d = psi.declared_input
    if d == 0.0 or not psi.flag:
        return False
    if abs(d) > j.bound(k) + ZERO_TOL:
        return False
    rec = j.records[psi.sender]
    gap = k - rec.last_declared_round
    return abs(d - rec.last_declared) <= j.delta * gap + ZERO_TOL


def detect_strategy_2(j: NodeRuntime, psi: InformationSet, weights: WeightMatrix, k: int) -> float:
    """Update-rule audit: residual of the sender's new state.

    The sender's row is the base row with weight on isolated nodes (as
    announced network-wide) folded back onto the diagonal.  Accepted
    declared compensation is netted out.
    """
    prev = psi.previous_state
    expected = prev
    isolated = j.known_isolated
    echoes = psi.echoes
    for l, w in weights.neighbor_weights(psi.sender):
        if l in isolated:
            continue
        expected += w * (echoes.get(l, 0.0) - prev)
    residual = psi.state - expected
    if psi.declared_input != 0.0 and declared_input_accepted(j, psi, k):
        residual -= psi.declared_input
    return residual


def detect(j: NodeRuntime, psi: InformationSet, own_prev_state: float, weights: WeightMatrix, k: int) -> DetectionOutcome:
    """Run both audits on ``psi`` and compare their sum with ``j``'s bound."""
    i = psi.sender
    rec = j.records[i]
    eps1 = detect_strategy_1(j, psi, own_prev_state, weights.weight(i, j.id))
    if -ZERO_TOL <= eps1 <= ZERO_TOL:
        eps1 = 0.0
    eps2 = detect_strategy_2(j, psi, weights, k)
    if -ZERO_TOL <= eps2 <= ZERO_TOL:
        eps2 = 0.0
    rec.last_declared = psi.declared_input
    rec.last_declared_round = k
    bound = j.bound(k)
    total = eps1 + eps2
    return DetectionOutcome(j.id, i, k, eps1, eps2, eps1 + eps2 / rec.neighbor_count, bound, abs(total) > bound)


def accrue_compensation_1_2(j: NodeRuntime, outcome: DetectionOutcome) -> float:
    """Book the negated echo error in full and ``1/|N_i|`` of the residual."""
    if not outcome.nonzero:
        return 0.0
    delta = -outcome.share
    j.ledger += delta
    j.flag = True
    return delta


def isolate_and_compensate_3(j: NodeRuntime, i: int, x_i_now: float) -> bool:
    """Cut ``i`` off and book ``(x_i_now - x_i(0)) / |N_i|``.

    Returns ``False`` (and changes nothing) if ``i`` was already isolated.
    """
    if i in j.isolated:
        return False
    rec = j.records[i]
    j.isolated.add(i)
    j.known_isolated.add(i)
    j.ledger += (x_i_now - rec.initial_state) / rec.neighbor_count
    rec.detections_at_isolation = rec.detections
    j.flag = True
    return True


def accrue_compensation_4(j: NodeRuntime, i: int, k: int, share: float | None = None) -> float:
    """Refresh the estimate of ``i``'s unobserved errors up to round ``k``.

    With ``share`` given, it is appended to the detected-error samples first.
    The previous estimate is swapped out of the ledger for the new one;
    returns the ledger change.
    """
    rec = j.records[i]
    if share is not None:
        rec.samples.append(share)
        rec.sample_sum += share
    m = rec.detections
    if m == 0:
        return 0.0
    new = -(k - rec.baseline - m) * (rec.sample_sum / m)
    delta = new - rec.eta4
    rec.eta4 = new
    if delta != 0.0:
        j.ledger += delta
    return delta


def select_compensation_input(j: NodeRuntime, k_next: int) -> float:
    """Release ``sign(eta) * min(|eta|, bound(k_next), |previous release| + delta)``.

    The release never overshoots the ledger, so ``|ledger|`` never grows.
    """
    eta = j.ledger
    if eta == 0.0:
        value = 0.0
    else:
        mag = min(abs(eta), j.bound(k_next), abs(j.last_input) + j.delta)
        value = mag if eta > 0 else -mag
    j.ledger = eta - value
    j.last_input = value
    return value


@dataclass
class Network:
    """Mutable state of one simulated network."""

    weights: WeightMatrix
    x: np.ndarray
    initial: np.ndarray
    nodes: dict[int, NodeRuntime]
    adversaries: dict[int, Misbehavior]
    rngs: dict[int, np.random.Generator]
    effective: np.ndarray = None
    active: list[bool] = None
    isolation_rounds: dict[int, int] = field(default_factory=dict)
    notices: frozenset[int] = frozenset()

    def __post_init__(self):
        n = self.weights.n
        if self.effective is None:
            self.effective = self.weights.matrix.copy()
        if self.active is None:
            self.active = [True] * n

    @property
    def topology(self) -> Topology:
        return self.weights.topology

    @property
    def n(self) -> int:
        return self.weights.n


def make_network(
    weights: WeightMatrix,
    initial,
    adversaries: Mapping[int, Misbehavior] | None = None,
    rngs: Mapping[int, np.random.Generator] | None = None,
    alpha=5.0,
    rho=0.9,
    delta=None,
) -> Network:
    """Initialise every normal node; ``alpha``/``rho``/``delta`` may be scalars or per-node sequences.

    Models the honest initial exchange: each normal node stores its
    neighbours' true initial states and neighbour counts.
    """
    t = weights.topology
    x0 = np.array(initial, dtype=float)
    if x0.shape != (t.n,):
        raise ValueError(f"expected {t.n} initial states, got shape {x0.shape}")
    adversaries = dict(adversaries or {})

    def per_node(v, i):
        return float(v[i]) if np.ndim(v) else float(v)

    nodes = {}
    for j in range(t.n):
        if j in adversaries:
            continue
        a = per_node(alpha, j)
        d = 2.0 * a if delta is None else per_node(delta, j)
        node = NodeRuntime(j, float(x0[j]), a, per_node(rho, j), d)
        for i in t.neighbors[j]:
            node.records[i] = NeighborRecord(float(x0[i]), t.degrees[i])
        nodes[j] = node
    return Network(weights, x0.copy(), x0.copy(), nodes, adversaries, dict(rngs or {}))


@dataclass
class RoundResult:
    k: int
    inputs: np.ndarray
    states: np.ndarray
    detections: list[DetectionOutcome]
    isolated: list[int]


def _isolate(net: Network, i: int, x_i: float, k: int, stochastic: bool) -> None:
    t = net.topology
    W = net.effective
    for j in t.neighbors[i]:
        node = net.nodes.get(j)
        if node is not None and net.active[j]:
            if stochastic and node.records[i].flagged:
                accrue_compensation_4(node, i, k)
            isolate_and_compensate_3(node, i, x_i)
        W[j, j] += W[j, i]
        W[j, i] = 0.0
        W[i, j] = 0.0
    W[i, :] = 0.0
    W[:, i] = 0.0
    W[i, i] = 1.0
    for node in net.nodes.values():
        node.known_isolated.add(i)
    net.active[i] = False
    net.isolation_rounds[i] = k


def _run_round(net: Network, k: int, link_mask, stochastic: bool) -> RoundResult:
    t = net.topology
    n = t.n
    active = net.active
    x = net.x
    xl = x.tolist()
    W = net.effective

    eps = np.zeros(n)
    tamper: dict[int, tuple[int, float]] = {}
    for j, node in net.nodes.items():
        if active[j]:
            eps[j] = node.last_input
    for m, adv in net.adversaries.items():
        if not active[m]:
            continue
        e = adv.model.error(k, net.rngs.get(m))
        if adv.channel == "state":
            eps[m] += e
        else:
            target = adv.target if adv.target is not None else t.neighbors[m][0]
            if active[target] and e != 0.0:
                tamper[m] = (target, e)
                eps[m] += W[m, target] * e
    x_next = W @ x + eps
    xn = x_next.tolist()

    psis: dict[int, InformationSet] = {}
    for i in range(n):
        if not active[i]:
            continue
        echoes = {l: xl[l] for l in t.neighbors[i] if active[l]}
        node = net.nodes.get(i)
        if node is not None:
            flag, declared = int(node.flag), node.last_input
        else:
            flag, declared = 0, 0.0
            if i in tamper:
                target, e = tamper[i]
                echoes[target] += e
        psis[i] = InformationSet(i, xn[i], xl[i], flag, declared, echoes, t.degrees[i], net.notices)

    detections: list[DetectionOutcome] = []
    to_isolate: dict[int, float] = {}
    for j, node in net.nodes.items():
        if not active[j]:
            continue
        own_prev = xl[j]
        for i in t.neighbors[j]:
            if not active[i] or i in node.isolated:
                continue
            if link_mask is not None and not link_mask[i][j]:
                continue
            out = detect(node, psis[i], own_prev, net.weights, k)
            accrue_compensation_1_2(node, out)
            rec = node.records[i]
            if out.nonzero:
                detections.append(out)
                if not rec.flagged:
                    rec.flagged = True
                    rec.first_detection = k
                    rec.baseline = rec.last_clean
            elif not rec.flagged:
                rec.last_clean = k
            if stochastic and rec.flagged:
                accrue_compensation_4(node, i, k, out.share)
            if out.violated and i not in to_isolate:
                to_isolate[i] = xn[i]

    for i, x_i in to_isolate.items():
        _isolate(net, i, x_i, k, stochastic)
    net.notices = frozenset(to_isolate)

    for j, node in net.nodes.items():
        if active[j]:
            select_compensation_input(node, k + 1)
            node.state = xn[j]

    net.x = x_next
    return RoundResult(k, eps, x_next, detections, list(to_isolate))


def step_ddcc(net: Network, k: int) -> RoundResult:
    """One reliable-link round (every information set is delivered)."""
    return _run_round(net, k, None, stochastic=False)


def step_sdcc(net: Network, link_mask, k: int) -> RoundResult:
    """One round with link failures.

    ``link_mask[i][j]`` says whether the ``i``/``j`` link delivered its
    information sets this round.  Only the audit channel is affected; state
    values still propagate through ``W``.
    """
    return _run_round(net, k, link_mask, stochastic=True)


def step_plain(net: Network, k: int) -> RoundResult:
    """``x(k+1) = W x(k) + eps(k)`` with no auditing at all."""
    eps = np.zeros(net.n)
    for m, adv in net.adversaries.items():
        eps[m] = adv.model.error(k, net.rngs.get(m))
    x_next = net.effective @ net.x + eps
    net.x = x_next
    return RoundResult(k, eps, x_next, [], [])


def conserved_total(net: Network) -> float:
    """``sum(active x) + sum(ledgers) + sum(pending inputs)``.

    Under reliable links this equals the sum of the active nodes' initial
    states at every round boundary.
    """
    total = sum(float(net.x[i]) for i in range(net.n) if net.active[i])
    for j, node in net.nodes.items():
        if net.active[j]:
            total += node.ledger + node.last_input
    return total
