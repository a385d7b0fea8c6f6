import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optikv import _accel
from optikv.workloads.graph import (
    GenerationError,
    Graph,
    closed_form_q,
    color_offline,
    generate_powerlaw_graph,
    high_degree_threshold,
    is_proper,
    preprocess_high_degree,
    read_edge_list,
    write_edge_list,
)

edge_lists = st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1]), max_size=30),
))


def adjacency(n, edges):
    adj = [set() for _ in range(n)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    return adj


# ---- graph structure ------------------------------------------------------


def test_graph_normalises_edges():
    g = Graph(4, np.array([[2, 1], [1, 2], [0, 3]]))
    assert g.edges.tolist() == [[0, 3], [1, 2]]
    assert g.m == 2


@pytest.mark.parametrize("edges", [[[1, 1]], [[0, 4]], [[-1, 2]]])
def test_graph_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        Graph(4, np.array(edges))


@given(edge_lists)
def test_csr_matches_adjacency_sets(args):
    n, edges = args
    g = Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    adj = adjacency(n, edges)
    assert g.degree().tolist() == [len(a) for a in adj]
    for v in range(n):
        assert g.neighbors(v).tolist() == sorted(adj[v])


# ---- generator ------------------------------------------------------------


def test_generator_is_deterministic():
    a = generate_powerlaw_graph(2000, seed=5)
    b = generate_powerlaw_graph(2000, seed=5)
    c = generate_powerlaw_graph(2000, seed=6)
    assert np.array_equal(a.edges, b.edges)
    assert not np.array_equal(a.edges, c.edges)


def test_generator_edge_count_and_tail():
    g = generate_powerlaw_graph(20_000, 60_000, seed=1)
    assert 0.8 * 60_000 <= g.m <= 1.05 * 60_000
    deg = g.degree()
    assert deg.min() >= 0 and deg.max() > 10 * deg.mean()


@pytest.mark.parametrize("n,m", [(1, None), (3, 4), (5, 0)])
def test_generator_rejects_impossible_requests(n, m):
    with pytest.raises(GenerationError):
        generate_powerlaw_graph(n, m)


def test_two_node_graph():
    assert generate_powerlaw_graph(2).edges.tolist() == [[0, 1]]


# ---- edge lists -----------------------------------------------------------


def test_edge_list_roundtrip(tmp_path):
    g = generate_powerlaw_graph(300, seed=2)
    path = tmp_path / "g.txt"
    write_edge_list(g, path)
    back = read_edge_list(path)
    assert np.array_equal(back.edges, g.edges)


def test_edge_list_comments_and_loops(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# header\n0 1\n\n1 1  # loop\n2 1\n")
    assert read_edge_list(path).edges.tolist() == [[0, 1], [1, 2]]
    path.write_text("0 1 2\n")
    with pytest.raises(ValueError):
        read_edge_list(path)


# ---- high-degree threshold and colouring ----------------------------------


@given(st.lists(st.integers(0, 40), min_size=1, max_size=60))
def test_threshold_is_smallest_valid_q(degrees):
    deg = np.array(degrees)
    q = high_degree_threshold(deg)
    assert (deg > q).sum() <= q
    assert q == 0 or (deg > q - 1).sum() > q - 1


def test_closed_form_q():
    assert closed_form_q(50_000) == pytest.approx(math.exp(math.log(11 * 50_000 / 3) / 2.5))


@settings(max_examples=50, deadline=None)
@given(edge_lists)
def test_greedy_colouring_is_proper(args):
    n, edges = args
    g = Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    pre = preprocess_high_degree(g)
    assert (pre.colors[pre.high] >= 0).all()
    colors = color_offline(g, pre)
    assert is_proper(g, colors)
    assert colors.max(initial=0) <= g.degree().max(initial=0)


def test_is_proper_detects_clash_and_gaps():
    g = Graph(3, np.array([[0, 1], [1, 2]]))
    assert is_proper(g, [0, 1, 0])
    assert not is_proper(g, [0, 0, 1])
    assert not is_proper(g, [0, 1, -1])


# ---- compiled kernels agree with their array fallbacks ---------------------


def test_kernels_match_fallbacks():
    rng = np.random.default_rng(0)
    proc = rng.integers(0, 4, 300)
    send_of = np.full(300, -1)
    for i in range(1, 300, 3):
        send_of[i] = rng.integers(0, i)
    assert np.array_equal(_accel._replay_jit(proc, send_of, 4), _accel._replay_numpy(proc, send_of, 4))
    x = rng.integers(0, 5, (40, 3))
    assert np.array_equal(_accel._less_jit(x, x), _accel._less_numpy(x, x))
    g = generate_powerlaw_graph(500, seed=3)
    indptr, indices = g.csr()
    order = np.arange(g.n)
    blank = np.full(g.n, -1)
    assert np.array_equal(_accel._greedy_jit(indptr, indices, order, blank.copy()),
                          _accel._greedy_numpy(indptr, indices, order, blank.copy()))
    assert _accel.backend() in ("numba", "numpy")
