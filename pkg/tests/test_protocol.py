import math

import numpy as np
import pytest
from conftest import deterministic_setup
from hypothesis import given, settings
from hypothesis import strategies as st

from resilient_consensus.adversary import DeterministicErrorModel, Misbehavior, StochasticErrorModel, GmmSpec
from resilient_consensus.engine import prepare, run_single
from resilient_consensus.graph import Topology, generate_erdos_renyi, is_connected, perron_weights
from resilient_consensus.protocol import (
    DetectionOutcome,
    InformationSet,
    NeighborRecord,
    NodeRuntime,
    accrue_compensation_1_2,
    accrue_compensation_4,
    conserved_total,
    declared_input_accepted,
    detect,
    detect_strategy_1,
    detect_strategy_2,
    isolate_and_compensate_3,
    make_network,
    select_compensation_input,
    step_ddcc,
    step_plain,
    step_sdcc,
)

STAR = Topology(4, [(0, 1), (0, 2), (0, 3)])
W_STAR = perron_weights(STAR, 0.25)


def node(j=1, alpha=5.0, rho=0.9, delta=10.0, neighbors=None):
    n = NodeRuntime(j, 1.0, alpha, rho, delta)
    for i, (x0, deg) in (neighbors or {0: (1.0, 3)}).items():
        n.records[i] = NeighborRecord(x0, deg)
    return n


def psi(sender=0, state=1.0, prev=1.0, echoes=None, flag=0, declared=0.0, count=3):
    return InformationSet(sender, state, prev, flag, declared, echoes or {}, count)


def outcome(eps1=0.0, eps2=0.0, count=1):
    return DetectionOutcome(1, 0, 0, eps1, eps2, eps1 + eps2 / count, 5.0, False)


# --- echo audit ---------------------------------------------------------------


def test_strategy1_honest_echo():
    assert detect_strategy_1(node(), psi(echoes={1: 1.0}), 1.0, 0.25) == 0.0


def test_strategy1_tampered_echo():
    assert detect_strategy_1(node(), psi(echoes={1: 1.2}), 1.0, 0.25) == pytest.approx(0.05)


def test_strategy1_deleted_echo_reads_as_zero():
    assert detect_strategy_1(node(), psi(echoes={}), 1.0, 0.25) == pytest.approx(-0.25)


# --- update-rule audit --------------------------------------------------------


def _star_echoes():
    return {1: 1.0, 2: 2.0, 3: 0.6}


def _nominal_hub(prev=1.2):
    e = _star_echoes()
    return prev + sum(0.25 * (v - prev) for v in e.values())


def test_strategy2_honest():
    j = node()
    p = psi(state=_nominal_hub(), prev=1.2, echoes=_star_echoes())
    assert detect_strategy_2(j, p, W_STAR, 3) == pytest.approx(0.0, abs=1e-15)


def test_strategy2_residual():
    j = node()
    p = psi(state=_nominal_hub() + 0.1, prev=1.2, echoes=_star_echoes())
    assert detect_strategy_2(j, p, W_STAR, 3) == pytest.approx(0.1)


def test_strategy2_nets_out_accepted_compensation():
    j = node()
    p = psi(state=_nominal_hub() + 0.1, prev=1.2, echoes=_star_echoes(), flag=1, declared=0.1)
    assert declared_input_accepted(j, p, 3)
    assert detect_strategy_2(j, p, W_STAR, 3) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize(
    "flag,declared,k",
    [
        (0, 0.1, 3),  # no attack flag
        (1, 6.0, 0),  # beyond the detector's bound 5.0
    ],
)
def test_declared_input_rejected(flag, declared, k):
    j = node()
    p = psi(state=_nominal_hub() + declared, prev=1.2, echoes=_star_echoes(), flag=flag, declared=declared)
    assert not declared_input_accepted(j, p, k)
    assert detect_strategy_2(j, p, W_STAR, k) == pytest.approx(declared)


def test_declared_input_steadiness():
    j = node(delta=0.05)
    rec = j.records[0]
    rec.last_declared, rec.last_declared_round = 0.1, 4
    assert declared_input_accepted(j, psi(flag=1, declared=0.14), 5)
    assert not declared_input_accepted(j, psi(flag=1, declared=0.2), 5)
    # two rounds unseen allow twice the step
    assert declared_input_accepted(j, psi(flag=1, declared=0.19), 6)


def test_strategy2_ignores_isolated_neighbours():
    j = node()
    j.known_isolated.add(3)
    e = {1: 1.0, 2: 2.0}
    prev = 1.2
    state = prev + 0.25 * (1.0 - prev) + 0.25 * (2.0 - prev)
    assert detect_strategy_2(j, psi(state=state, prev=prev, echoes=e), W_STAR, 3) == pytest.approx(0.0, abs=1e-15)


def test_detect_combines_and_checks_bound():
    j = node(alpha=0.5, rho=0.5)
    # echo of node 1 inflated by 0.4; update itself off by a further 0.1
    p = psi(state=_nominal_hub() + 0.25 * 0.4 + 0.1, prev=1.2, echoes={**_star_echoes(), 1: 1.4})
    out = detect(j, p, 1.0, W_STAR, 2)
    assert out.eps1 == pytest.approx(0.25 * 0.4)
    assert out.eps2 == pytest.approx(0.1)
    assert out.share == pytest.approx(0.1 + 0.1 / 3)
    assert out.bound == pytest.approx(0.125)
    assert out.violated == (abs(out.eps1 + out.eps2) > 0.125)
    assert out.violated


def test_detect_zero_tolerance():
    j = node()
    p = psi(state=_nominal_hub() + 1e-13, prev=1.2, echoes=_star_echoes())
    out = detect(j, p, 1.0, W_STAR, 0)
    assert out.eps2 == 0.0 and not out.nonzero


# --- ledger bookings and isolation ------------------------------------------------


def test_scheme1():
    j = node()
    accrue_compensation_1_2(j, outcome(eps1=0.05))
    assert j.ledger == pytest.approx(-0.05)
    assert j.flag


def test_scheme2_splits_over_neighbour_count():
    j = node()
    accrue_compensation_1_2(j, outcome(eps2=0.1, count=4))
    assert j.ledger == pytest.approx(-0.025)


def test_schemes_zero_outcome_no_change():
    j = node()
    assert accrue_compensation_1_2(j, outcome()) == 0.0
    assert j.ledger == 0.0 and not j.flag


def test_scheme3_accrues_share_of_drift():
    j = node(neighbors={0: (1.0, 2)})
    assert isolate_and_compensate_3(j, 0, 1.4)
    assert j.ledger == pytest.approx(0.2)
    assert 0 in j.isolated


def test_scheme3_no_drift():
    j = node(neighbors={0: (1.0, 2)})
    isolate_and_compensate_3(j, 0, 1.0)
    assert j.ledger == 0.0 and 0 in j.isolated


def test_scheme3_idempotent():
    j = node(neighbors={0: (1.0, 2)})
    isolate_and_compensate_3(j, 0, 1.4)
    assert not isolate_and_compensate_3(j, 0, 3.0)
    assert j.ledger == pytest.approx(0.2)


# --- mean-based estimate of missed errors -----------------------------------------


def _record_with(j, samples, baseline):
    rec = j.records[0]
    rec.samples = list(samples)
    rec.sample_sum = sum(samples)
    rec.baseline = baseline
    rec.flagged = True
    return rec


def test_scheme4_direct_arithmetic():
    j = node()
    _record_with(j, [0.02] * 5, baseline=-1)
    accrue_compensation_4(j, 0, 9, share=0.02)  # k - k0 = 10, m = 6, mean 0.02
    assert j.records[0].eta4 == pytest.approx(-0.08)
    assert j.ledger == pytest.approx(-0.08)


def test_scheme4_all_detected():
    j = node()
    _record_with(j, [0.1, 0.0, 0.3], baseline=2)
    accrue_compensation_4(j, 0, 6, share=0.2)
    assert j.records[0].eta4 == 0.0


def test_scheme4_replaces_previous_estimate():
    j = node()
    rec = _record_with(j, [0.02] * 6, baseline=-1)
    rec.eta4 = -0.08
    j.ledger = -0.08
    # k - k0 = 11, m = 6 -> -(5) * 0.02 = -0.10
    delta = accrue_compensation_4(j, 0, 10)
    assert delta == pytest.approx(-0.02)
    assert j.ledger == pytest.approx(-0.10)


# --- input selection -----------------------------------------------------------


def test_select_zero_ledger():
    j = node()
    assert select_compensation_input(j, 3) == 0.0


def test_select_fits_within_caps():
    j = node(alpha=0.5, rho=0.9, delta=0.4)
    j.ledger = 0.3
    assert select_compensation_input(j, 0) == pytest.approx(0.3)
    assert j.ledger == pytest.approx(0.0)


def test_select_capped_by_bound():
    cap = 5 * 0.9**10
    j = node(alpha=5.0, rho=0.9, delta=0.1)
    j.ledger, j.last_input = 2.0, 1.7
    v = select_compensation_input(j, 10)
    assert v == pytest.approx(cap, abs=1e-12)
    assert v == pytest.approx(1.7433922005, abs=1e-9)
    assert j.ledger == pytest.approx(2.0 - cap)


def test_select_capped_by_steadiness():
    j = node(delta=0.1)
    j.ledger, j.last_input = -2.0, -0.3
    assert select_compensation_input(j, 0) == pytest.approx(-0.4)


@given(st.floats(-10, 10), st.floats(-5, 5), st.floats(0.1, 10), st.floats(0, 0.99), st.floats(0, 10), st.integers(0, 60))
def test_select_invariants(eta, prev, alpha, rho, delta, k):
    j = node(alpha=alpha, rho=rho, delta=delta)
    j.ledger, j.last_input = eta, prev
    v = select_compensation_input(j, k)
    assert abs(j.ledger) <= abs(eta) + 1e-15
    assert abs(v) <= alpha * rho**k + 1e-15
    assert abs(v) <= abs(prev) + delta + 1e-15
    assert v == 0.0 or math.copysign(1, v) == math.copysign(1, eta)
    assert j.ledger + v == pytest.approx(eta, abs=1e-12)


# --- rounds ---------------------------------------------------------------------


def _reference_network(ddcc_cfg):
    s = prepare(ddcc_cfg)
    return s, make_network(s.weights, s.initial, s.misbehaving, {}, alpha=5.0, rho=0.9)


def test_no_adversary_round_equals_plain_update():
    s = prepare(deterministic_setup(misbehaving=()))
    net = make_network(s.weights, s.initial)
    x = s.initial.copy()
    for k in range(50):
        step_ddcc(net, k)
        x = s.weights.matrix @ x
        assert np.array_equal(net.x, x)
        assert all(nd.ledger == 0.0 and nd.last_input == 0.0 for nd in net.nodes.values())


def test_ddcc_isolates_at_first_bound_violation(ddcc_cfg):
    # oracle: first round whose injected error exceeds 5 * 0.9**k
    expected = next(k for k in range(1000) if abs(0.5 * math.cos(k)) > 5 * 0.9**k)
    assert expected == 22
    s, net = _reference_network(ddcc_cfg)
    for k in range(100):
        step_ddcc(net, k)
    assert net.isolation_rounds == {0: expected}
    assert 4 not in net.isolation_rounds


def test_faulty_geometric_error_never_exceeds_bound():
    assert all(0.5 * 0.6**k < 5 * 0.9**k for k in range(2000))


def test_isolation_is_by_all_neighbours_in_same_round(ddcc_cfg):
    s, net = _reference_network(ddcc_cfg)
    for k in range(30):
        step_ddcc(net, k)
    for j in s.topology.neighbors[0]:
        assert 0 in net.nodes[j].isolated
    assert net.effective[0, 0] == 1.0
    assert np.allclose(net.effective.sum(axis=0), 1) and np.allclose(net.effective.sum(axis=1), 1)


def test_isolated_state_is_frozen(ddcc_cfg):
    s, net = _reference_network(ddcc_cfg)
    for k in range(23):
        step_ddcc(net, k)
    frozen = net.x[0]
    for k in range(23, 60):
        step_ddcc(net, k)
        assert net.x[0] == frozen


def test_sdcc_full_delivery_matches_ddcc(ddcc_cfg):
    s, a = _reference_network(ddcc_cfg)
    _, b = _reference_network(ddcc_cfg)
    everyone = [[True] * 10 for _ in range(10)]
    for k in range(120):
        step_ddcc(a, k)
        step_sdcc(b, everyone, k)
        assert np.array_equal(a.x, b.x)


def test_sdcc_no_delivery_drifts_like_plain(ddcc_cfg):
    s, a = _reference_network(ddcc_cfg)
    _, b = _reference_network(ddcc_cfg)
    nobody = [[False] * 10 for _ in range(10)]
    for k in range(80):
        r = step_sdcc(a, nobody, k)
        step_plain(b, k)
        assert r.detections == []
    assert np.allclose(a.x, b.x, atol=1e-12)
    assert a.isolation_rounds == {}


def test_echo_tampering_caught_by_target_only():
    t = Topology(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    w = perron_weights(t, 0.3)
    x0 = [0.2, 1.0, 1.5, 0.7]
    mis = {0: Misbehavior(0, DeterministicErrorModel("constant", 0.05), channel="echo", target=3)}
    net = make_network(w, x0, mis)
    r = step_ddcc(net, 0)
    assert r.detections
    assert {d.detector for d in r.detections if d.eps1 != 0} == {3}
    assert all(d.eps2 == 0 for d in r.detections)


def test_conservation_holds_each_round(ddcc_cfg):
    s, net = _reference_network(ddcc_cfg)
    for k in range(150):
        step_ddcc(net, k)
        base = sum(s.initial[i] for i in range(10) if net.active[i])
        assert abs(conserved_total(net) - base) < 1e-9


@settings(max_examples=25)
@given(
    st.integers(0, 10_000),
    st.sampled_from(["cosine", "constant", "geometric"]),
    st.floats(0.05, 2.0),
    st.integers(6, 9),
)
def test_property_conservation_bound_compliance_and_exactness(seed, family, amp, n):
    t = generate_erdos_renyi(n, 0.6, seed)
    if not is_connected(t):
        return
    bad = 0
    model = DeterministicErrorModel(family, amp, frequency=1.3, ratio=0.97)
    w = perron_weights(t, 0.9 / t.max_degree)
    x0 = np.random.default_rng(seed).uniform(0, 2, n)
    net = make_network(w, x0, {bad: Misbehavior(bad, model)}, alpha=5.0, rho=0.9)
    for k in range(400):
        before = {j: abs(nd.ledger) for j, nd in net.nodes.items()}
        step_ddcc(net, k)
        base = sum(x0[i] for i in range(n) if net.active[i])
        assert abs(conserved_total(net) - base) < 1e-9
        for j, nd in net.nodes.items():
            assert abs(nd.last_input) <= 5.0 * 0.9 ** (k + 1) + 1e-15
            assert nd.last_input == 0.0 or nd.flag
    keep = [i for i in range(n) if net.active[i]]
    if bad in net.isolation_rounds:
        sub, _ = t.without([bad])
        if is_connected(sub):
            target = x0[keep].mean()
            assert np.max(np.abs(net.x[keep] - target)) < 1e-6
