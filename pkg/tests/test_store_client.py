import pytest
from hypothesis import given, strategies as st

from optikv.client import (
    Consistency,
    ReplicationConfig,
    StoreClient,
    Unavailable,
    classify_consistency,
)
from optikv.netsim import Network, Simulator, Topology
from optikv.store import ProtocolError, StoreNode
from optikv.versions import VersionedValue, VersionVector

SERVERS = ("s0", "s1", "s2")


def cluster(r=1, w=1, clients=1, down=(), timeout=200.0):
    nodes = {s: "r0" for s in SERVERS} | {f"c{i}": "r1" for i in range(clients)}
    sim = Simulator()
    net = Network(sim, Topology(nodes, {("r0", "r1"): 20.0}, intra_ms=1.0), seed=3)
    n = len(nodes)
    servers = [StoreNode(s, i, n, net) for i, s in enumerate(SERVERS)]
    cfg = ReplicationConfig(3, r, w, SERVERS, timeout_ms=timeout)
    cs = [StoreClient(f"c{i}", 3 + i, n, net, cfg) for i in range(clients)]
    for s in down:
        net.register(s, lambda *a: None)
    return sim, servers, cs


def drive(sim, gen):
    out = {}

    def proc():
        try:
            out["value"] = yield from gen
        except Exception as exc:
            out["error"] = exc

    sim.spawn(proc())
    sim.run_until()
    if "error" in out:
        raise out["error"]
    return out.get("value")


# ---- configuration --------------------------------------------------------


@pytest.mark.parametrize("n,r,w,want", [
    (3, 1, 3, Consistency.SEQUENTIAL),
    (3, 2, 2, Consistency.SEQUENTIAL),
    (3, 1, 1, Consistency.EVENTUAL),
    (3, 1, 2, Consistency.EVENTUAL),
    (4, 3, 2, Consistency.OTHER),
])
def test_classification(n, r, w, want):
    cfg = ReplicationConfig(n, r, w, tuple(f"s{i}" for i in range(n)))
    assert classify_consistency(cfg) is want


@given(st.integers(1, 7).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n), st.integers(1, n))))
def test_classification_rules(args):
    n, r, w = args
    got = classify_consistency(ReplicationConfig(n, r, w, tuple(map(str, range(n)))))
    if r + w > n and 2 * w > n:
        assert got is Consistency.SEQUENTIAL
    elif r + w <= n:
        assert got is Consistency.EVENTUAL
    else:
        assert got is Consistency.OTHER


@pytest.mark.parametrize("kw", [
    dict(n=2, r=1, w=1, servers=SERVERS),
    dict(n=3, r=0, w=1, servers=SERVERS),
    dict(n=3, r=1, w=4, servers=SERVERS),
    dict(n=3, r=1, w=1, servers=SERVERS, timeout_ms=0),
    dict(n=3, r=2, w=1, servers=SERVERS, preferred_reads=1),
])
def test_bad_configs(kw):
    with pytest.raises(ValueError):
        ReplicationConfig(**kw)


def test_label_and_waits():
    cfg = ReplicationConfig(3, 1, 2, SERVERS)
    assert cfg.label == "N3R1W2"
    assert cfg.wait_reads == 3 and cfg.wait_writes == 2


# ---- store ----------------------------------------------------------------


def test_store_keeps_concurrent_siblings():
    sim, (s0, *_), _ = cluster()
    a = VersionedValue(VersionVector({"c0": 1}), "a")
    b = VersionedValue(VersionVector({"c1": 1}), "b")
    s0.apply_put("k", a)
    value, version = s0.apply_put("k", b.to_wire())
    assert sorted(v.value for v in s0.handle_get("k")) == ["a", "b"]
    assert (value, version) == ("a", a.version)
    s0.apply_put("k", VersionedValue(VersionVector({"c0": 1, "c1": 1}), "m"))
    assert s0.handle_get_version("k") == [VersionVector({"c0": 1, "c1": 1})]


def test_store_rejects_malformed_value():
    sim, (s0, *_), _ = cluster()
    with pytest.raises(ProtocolError):
        s0.apply_put("k", {"nope": 1})


def test_absent_key():
    sim, (s0, *_), _ = cluster()
    assert s0.handle_get("missing") == [] and s0.resolved("missing") is None


def test_requests_are_serialised():
    sim, servers, (c,) = cluster(w=3)
    drive(sim, c.put("k", "v"))
    # one GET_VERSION plus one PUT per replica, 3 ms each, served back to back
    assert all(s.busy_until > 0 for s in servers)
    assert all(s.applied_puts == 1 for s in servers)


# ---- client ---------------------------------------------------------------


def test_put_then_get_roundtrip():
    sim, servers, (c,) = cluster()
    vv = drive(sim, c.put("k", "hello"))
    assert vv.version == VersionVector({"c0": 1})
    assert drive(sim, c.get_value("k")) == "hello"
    assert drive(sim, c.get_value("other")) is None


def test_second_put_supersedes_first():
    sim, servers, (c,) = cluster(w=3)
    drive(sim, c.put("k", "1"))
    vv = drive(sim, c.put("k", "2"))
    assert vv.version == VersionVector({"c0": 2})
    assert all([v.value for v in s.handle_get("k")] == ["2"] for s in servers)


def test_get_prunes_dominated_copies():
    sim, (s0, s1, s2), (c,) = cluster()
    old = VersionedValue(VersionVector({"c9": 1}), "old")
    new = VersionedValue(VersionVector({"c9": 2}), "new")
    s0.preload("k", old)
    s1.preload("k", new)
    assert drive(sim, c.get("k")) == [new]


def test_one_replica_down_still_serves_quorum():
    sim, servers, (c,) = cluster(r=2, w=2, down=("s2",))
    drive(sim, c.put("k", "x"))
    assert drive(sim, c.get_value("k")) == "x"
    assert sim.now >= 200.0


def test_unavailable_when_quorum_lost():
    sim, servers, (c,) = cluster(r=2, w=2, down=("s1", "s2"), timeout=50.0)
    with pytest.raises(Unavailable):
        drive(sim, c.put("k", "x"))
    with pytest.raises(Unavailable):
        drive(sim, c.get("k"))


def test_error_reply_is_ignored():
    sim, (s0, *_), (c,) = cluster()
    s0.on_message({"type": "BOGUS", "key": "k", "req_id": 99, "hvc": c.clock}, "c0", 0)
    c._pending[99] = lambda *a: pytest.fail("error reply delivered")
    sim.run_until()
    assert 99 not in c._pending


def test_counter_hooks():
    seen = []
    sim, servers, (c,) = cluster()
    c.count = lambda t, scope, who, op: seen.append((scope, op))
    for s in servers:
        s.count = lambda t, scope, who, op: seen.append((scope, op))
    drive(sim, c.put("k", "x"))
    assert ("app", "PUT") in seen
    assert seen.count(("server", "PUT")) == 3
    assert seen.count(("server", "GET_VERSION")) == 3
