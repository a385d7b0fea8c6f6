import numpy as np
import pytest
from hypothesis import given, strategies as st

from optikv.client import ReplicationConfig, StoreClient
from optikv.netsim import Network, Simulator, Topology
from optikv.predicate import Connective, Kind
from optikv.store import StoreNode
from optikv.workloads.coloring import ColoringParams, ColoringWorkload, edge_vars
from optikv.workloads.conjunctive import ConjunctiveParams, ConjunctiveWorkload
from optikv.workloads.mix import OpMix
from optikv.workloads.random_ops import RandomParams, RandomWorkload
from optikv.workloads.weather import WeatherParams, WeatherWorkload


@given(st.integers(0, 100), st.integers(1, 5))
def test_op_mix_hits_share_exactly(pct, hundreds):
    mix = OpMix(pct)
    assert sum(mix.next_is_put() for _ in range(100 * hundreds)) == pct * hundreds


def test_op_mix_range():
    with pytest.raises(ValueError):
        OpMix(101)


# ---- colouring ------------------------------------------------------------


def test_partition_covers_every_free_node_once():
    wl = ColoringWorkload(ColoringParams(nodes=300, edges=900), n_clients=4, seed=2)
    flat = sorted(v for nodes in wl.assigned for v in nodes)
    assert flat == np.nonzero(wl.fixed < 0)[0].tolist()
    for c, nodes in enumerate(wl.assigned):
        assert (wl.owner[nodes] == c).all()
    assert len(wl.preload()) == int((wl.fixed >= 0).sum()) == len(wl.pre.high)


def test_cross_edges_and_subscribers():
    wl = ColoringWorkload(ColoringParams(nodes=200, edges=600), n_clients=3, seed=1)
    names = ["c0", "c1", "c2"]
    subs = wl.subscribers(names)
    for v in range(wl.graph.n):
        for a, b in wl.cross_edges(v):
            assert v in (a, b) and a < b and wl.owner[a] != wl.owner[b]
            assert subs(f"mutex_{a}_{b}") == sorted({names[wl.owner[a]], names[wl.owner[b]]})
    assert subs("conj_0") == []
    assert edge_vars(3, 7) == ("flag3_7_3", "flag3_7_7", "turn3_7")


def lock_cluster(r, w):
    nodes = {"s0": "r0", "s1": "r1", "s2": "r2", "c0": "r0", "c1": "r1"}
    delays = {("r0", "r1"): 30.0, ("r0", "r2"): 45.0, ("r1", "r2"): 60.0}
    sim = Simulator()
    net = Network(sim, Topology(nodes, delays, intra_ms=1.0), seed=5)
    servers = ("s0", "s1", "s2")
    for i, s in enumerate(servers):
        StoreNode(s, i, 5, net)
    cfg = ReplicationConfig(3, r, w, servers)
    return sim, [StoreClient(f"c{i}", 3 + i, 5, net, cfg) for i in range(2)]


@pytest.mark.parametrize("r,w", [(1, 3), (2, 2)])
def test_peterson_lock_excludes_under_sequential_quorums(r, w):
    wl = ColoringWorkload(ColoringParams(nodes=2, preprocess=False, poll_budget=500), n_clients=2)
    sim, clients = lock_cluster(r, w)
    sections = []

    def worker(client, me, rounds):
        for _ in range(rounds):
            ok = yield from wl.acquire(client, (0, 1), me)
            assert ok
            start = sim.now
            yield 20.0
            sections.append((start, sim.now))
            yield from wl.release(client, (0, 1), me)

    sim.spawn(worker(clients[0], 0, 3))
    sim.spawn(worker(clients[1], 1, 3))
    sim.run_until()
    sections.sort()
    assert len(sections) == 6
    assert all(a_end <= b_start for (_, a_end), (b_start, _) in zip(sections, sections[1:]))


# ---- weather, conjunctive, random -----------------------------------------


def test_weather_border_predicates():
    wl = WeatherWorkload(WeatherParams(width=6, height=4), n_clients=3)
    specs = wl.predicates()
    assert [s.name for s in specs] == ["border_0_1", "border_1_2"]
    first = specs[0]
    assert first.kind is Kind.LINEAR and first.connective is Connective.AND
    assert [c.literals[0].var for c in first.clauses] == ["cell1_2", "cell2_2"]
    assert wl.subscribers(["a", "b", "c"])("border_1_2") == ["b", "c"]
    with pytest.raises(ValueError):
        WeatherWorkload(WeatherParams(width=2), n_clients=3)


def test_conjunctive_groups():
    wl = ConjunctiveWorkload(ConjunctiveParams(l=3), n_clients=7)
    assert wl.members == [[0, 1, 2], [3, 4, 5], [6]]
    assert [len(s.clauses) for s in wl.predicates()] == [3, 3, 1]
    assert wl.var(4) == "local1_4"
    assert wl.subscribers(["c%d" % i for i in range(7)])("conj_1") == ["c3", "c4", "c5"]
    for bad in (ConjunctiveParams(l=0), ConjunctiveParams(l=8), ConjunctiveParams(l=2, beta=1.5)):
        with pytest.raises(ValueError):
            ConjunctiveWorkload(bad, n_clients=7)


def test_random_workload_values_cover_literals():
    conj = ConjunctiveWorkload(ConjunctiveParams(l=2), n_clients=2)
    wl = RandomWorkload(RandomParams(vars=["extra"], values=["v"]), 2, specs=conj.predicates())
    assert wl.vars == ["extra", "local0_0", "local0_1"]
    assert wl.values["local0_0"] == ["other", "true", "v"]
    with pytest.raises(ValueError):
        RandomWorkload(RandomParams(), 2)
