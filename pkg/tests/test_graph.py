import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resilient_consensus.graph import (
    Topology,
    build_weights,
    check_doubly_stochastic,
    connected_erdos_renyi,
    default_gamma,
    generate_erdos_renyi,
    is_connected,
    metropolis_weights,
    perron_weights,
)

K3 = Topology(3, [(0, 1), (1, 2), (0, 2)])
PATH3 = Topology(3, [(0, 1), (1, 2)])

# Recorded once from generate_erdos_renyi(5, 0.5, seed=42) and frozen.
GOLDEN_ER_5_05_42 = {(0, 1), (0, 3), (0, 4), (1, 4), (2, 4)}


def test_topology_canonicalises_edges():
    t = Topology(3, [(1, 0), (2, 1), (0, 1)])
    assert t.edges == {(0, 1), (1, 2)}
    assert t.neighbors == ((1,), (0, 2), (1,))
    assert t.degrees == (1, 2, 1)
    assert t.max_degree == 2
    assert t.has_edge(2, 1) and not t.has_edge(0, 2)


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 3)], [(-1, 1)]])
def test_topology_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        Topology(3, edges)


def test_laplacian_rows_sum_to_zero():
    L = K3.laplacian()
    assert np.allclose(L.sum(axis=1), 0)
    assert np.allclose(np.diag(L), 2)


def test_er_complete_pair():
    assert generate_erdos_renyi(2, 1.0, 123).edges == {(0, 1)}


def test_er_ten_nodes():
    t = generate_erdos_renyi(10, 0.7, 5)
    assert t.n == 10


def test_er_golden_regression():
    assert set(generate_erdos_renyi(5, 0.5, 42).edges) == GOLDEN_ER_5_05_42


@pytest.mark.parametrize("n,p", [(1, 0.5), (3, -0.1), (3, 1.5)])
def test_er_rejects_bad_parameters(n, p):
    with pytest.raises(ValueError):
        generate_erdos_renyi(n, p, 0)


def test_connectivity_examples():
    assert is_connected(PATH3)
    assert not is_connected(Topology(4, [(0, 1), (2, 3)]))
    assert not is_connected(Topology(3, []))


def test_connected_er_resamples_and_records_seed():
    t, used = connected_erdos_renyi(10, 0.15, 0)
    assert is_connected(t)
    assert t == generate_erdos_renyi(10, 0.15, used)
    for s in range(0, used):
        assert not is_connected(generate_erdos_renyi(10, 0.15, s))


def test_perron_triangle():
    W = perron_weights(K3, 0.25).matrix
    assert np.allclose(np.diag(W), 0.5)
    assert np.allclose(W[~np.eye(3, dtype=bool)], 0.25)


def test_perron_path():
    W = perron_weights(PATH3, 0.4).matrix
    assert W[1, 1] == pytest.approx(0.2)
    assert W[0, 0] == pytest.approx(0.6) and W[2, 2] == pytest.approx(0.6)
    assert W[0, 1] == pytest.approx(0.4) and W[1, 2] == pytest.approx(0.4)
    assert W[0, 2] == 0.0


@pytest.mark.parametrize("gamma", [0.5, 0.0, -0.1, 0.7])
def test_perron_rejects_gamma_outside_open_interval(gamma):
    with pytest.raises(ValueError):
        perron_weights(PATH3, gamma)


def test_metropolis_examples():
    W = metropolis_weights(PATH3).matrix
    assert W[0, 1] == pytest.approx(1 / 3) and W[1, 2] == pytest.approx(1 / 3)
    assert W[0, 0] == pytest.approx(2 / 3) and W[2, 2] == pytest.approx(2 / 3)
    assert W[1, 1] == pytest.approx(1 / 3)
    assert np.allclose(metropolis_weights(K3).matrix, 1 / 3)
    W2 = metropolis_weights(Topology(2, [(0, 1)])).matrix
    assert np.allclose(W2, 0.5)


def test_weight_matrix_lookup_and_read_only():
    w = perron_weights(PATH3, 0.4)
    assert w.weight(0, 1) == pytest.approx(0.4)
    assert w.weight(0, 2) == 0.0
    assert w.weight(1, 1) == pytest.approx(0.2)
    assert w.neighbor_weights(1) == ((0, pytest.approx(0.4)), (2, pytest.approx(0.4)))
    with pytest.raises(ValueError):
        w.matrix[0, 0] = 1.0


def test_check_rejects_non_edge_weight():
    W = np.full((3, 3), 1 / 3)
    with pytest.raises(ValueError):
        check_doubly_stochastic(W, PATH3)


def test_edgelist_round_trip(tmp_path):
    t = generate_erdos_renyi(7, 0.5, 3)
    p = tmp_path / "g.txt"
    t.write(p)
    assert p.read_text().splitlines()[0] == "7"
    assert Topology.read(p) == t


def test_without_relabels():
    sub, keep = K3.without({1})
    assert keep == [0, 2]
    assert sub.edges == {(0, 1)}


@st.composite
def topologies(draw, max_n=9):
    n = draw(st.integers(2, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Topology(n, [e for e, m in zip(pairs, mask) if m])


@given(topologies(), st.floats(0.01, 0.99))
def test_weight_constructions_are_doubly_stochastic(t, frac):
    if t.max_degree == 0:
        return
    for w in (perron_weights(t, frac / t.max_degree), metropolis_weights(t)):
        m = w.matrix
        assert np.max(np.abs(m.sum(axis=0) - 1)) <= 1e-12
        assert np.max(np.abs(m.sum(axis=1) - 1)) <= 1e-12
        assert np.all(m >= 0)
        for i in range(t.n):
            for j in range(t.n):
                if i != j and not t.has_edge(i, j):
                    assert m[i, j] == 0.0


@given(st.integers(2, 12), st.floats(0, 1), st.integers(0, 2**32))
def test_er_is_pure(n, p, seed):
    assert generate_erdos_renyi(n, p, seed) == generate_erdos_renyi(n, p, seed)


@given(topologies(max_n=8), st.lists(st.floats(-10, 10), min_size=8, max_size=8))
def test_plain_iteration_reaches_initial_mean(t, values):
    if not is_connected(t) or t.n < 2:
        return
    x0 = np.array(values[: t.n])
    W = build_weights(t, "perron", default_gamma(t)).matrix
    x = x0.copy()
    for _ in range(20000):
        x = W @ x
        if np.ptp(x) < 1e-11:
            break
    assert np.max(np.abs(x - x0.mean())) < 1e-9
