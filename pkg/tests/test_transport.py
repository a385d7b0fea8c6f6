import asyncio
import json
import socket

import pytest

from optikv.client import ReplicationConfig, StoreClient
from optikv.detector import Candidate
from optikv.hvc import HvcInterval, HybridVectorClock
from optikv.netsim import Future
from optikv.store import StoreNode
from optikv.transport import SocketNetwork, WallClock, WireError, decode, encode, from_json, to_json, wait
from optikv.versions import VersionedValue, VersionVector


def clock(owner, times):
    return HybridVectorClock.from_times(owner, times)


# ---- codec ----------------------------------------------------------------


def test_put_roundtrip():
    vv = VersionedValue(VersionVector({"c0": 2}), "red")
    msg = {"type": "PUT", "key": "color3", "req_id": 4, "value": vv, "hvc": clock(1, [3, 5])}
    src, back = decode(encode("c0", msg))
    assert src == "c0"
    assert back == msg


def test_get_response_roundtrip():
    vs = [VersionedValue(VersionVector({"c0": 1}), "a"), VersionedValue(VersionVector({"c1": 1}), "b")]
    msg = {"type": "GET_RESP", "key": "k", "req_id": 1, "versions": vs, "hvc": clock(0, [1, 0])}
    assert from_json(json.loads(json.dumps(to_json(msg))))["versions"] == vs
    only = {"type": "GET_RESP", "key": "k", "req_id": 2, "versions": [v.version for v in vs], "hvc": clock(0, [1, 0])}
    assert from_json(to_json(only))["versions"] == [v.version for v in vs]


def test_candidate_message_roundtrip():
    cand = Candidate("mutex_0_1", 1, 3, HvcInterval(1, clock(1, [0, 4]), clock(1, [2, 9])),
                     {"turn0_1": ("1", VersionVector({"c1": 1}))})
    wire = to_json({"type": "CAND", "cand": cand, "hvc": clock(1, [2, 9])})
    assert {"pred", "server", "seq", "start_hvc", "end_hvc", "state"} <= set(wire)
    back = from_json(json.loads(json.dumps(wire)))
    assert back["cand"] == cand and back["hvc"] == clock(1, [2, 9])


@pytest.mark.parametrize("line", [b"not json", b'{"type": "GET"}', b'{"src": "c0"}',
                                  b'{"src": "c0", "type": "PUT", "value": {"version": 3}}'])
def test_bad_lines_rejected(line):
    with pytest.raises(WireError):
        decode(line)


# ---- live loopback --------------------------------------------------------


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_store_and_client_over_tcp():
    async def scenario():
        wc = WallClock(asyncio.get_running_loop())
        names = ["s0", "s1", "s2", "c0"]
        addresses = {n: ("127.0.0.1", free_port()) for n in names}
        server_net = SocketNetwork(wc, addresses)
        client_net = SocketNetwork(wc, addresses)
        servers = [StoreNode(s, i, 4, server_net, processing_ms=0.0) for i, s in enumerate(names[:3])]
        cfg = ReplicationConfig(3, 1, 3, tuple(names[:3]), timeout_ms=2000.0)
        client = StoreClient("c0", 3, 4, client_net, cfg)
        await server_net.start()
        await client_net.start()
        done = Future()

        def proc():
            yield from client.put("k", "hello")
            value = yield from client.get_value("k")
            done.resolve(value)

        wc.spawn(proc())
        try:
            value = await asyncio.wait_for(wait(done), 10)
        finally:
            await client_net.close()
            await server_net.close()
        return value, servers

    value, servers = asyncio.run(scenario())
    assert value == "hello"
    assert all([v.value for v in s.handle_get("k")] == ["hello"] for s in servers)


def test_unknown_node_address():
    async def scenario():
        net = SocketNetwork(WallClock(asyncio.get_running_loop()), {})
        with pytest.raises(KeyError):
            net.register("s0", lambda *a: None)

    asyncio.run(scenario())
