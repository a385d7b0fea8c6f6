"""Socket transport for live runs.

Messages travel as newline-delimited JSON using the same schema as the
simulator.  :class:`WallClock` stands in for the simulator (same ``now`` /
``at`` / ``after`` / ``timeout`` / ``spawn`` surface, driven by an asyncio
loop) and :class:`SocketNetwork` stands in for the simulated network, so
unmodified :class:`~optikv.store.StoreNode` and
:class:`~optikv.client.StoreClient` objects can run over TCP.  Each
(src, dst) pair uses one connection, which keeps channels FIFO.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
from typing import Callable

from .detector import Candidate
from .hvc import HybridVectorClock
from .netsim import Future, Process
from .versions import VersionedValue, VersionVector

log = logging.getLogger(__name__)


class WireError(ValueError):
    pass


# --------------------------------------------------------------------------
# codec
# --------------------------------------------------------------------------


def to_json(msg: dict) -> dict:
    """Convert an in-process message to its JSON wire form."""
    out = {}
    for k, v in msg.items():
        if k == "cand":
            continue
        if isinstance(v, HybridVectorClock):
            v = v.to_wire()
        elif isinstance(v, VersionedValue):
            v = v.to_wire()
        elif k == "versions":
            v = [x.to_wire() if isinstance(x, VersionedValue) else dict(x) for x in v]
        out[k] = v
    if "cand" in msg:
        out.update(msg["cand"].to_wire())
    return out


def from_json(obj: dict) -> dict:
    """Inverse of :func:`to_json`."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise WireError("message must be an object with a type")
    msg = dict(obj)
    try:
        if "hvc" in msg:
            msg["hvc"] = HybridVectorClock.from_wire(msg["hvc"])
        kind = msg["type"]
        if kind == "CAND":
            cand = Candidate.from_wire(obj)
            msg = {"type": "CAND", "cand": cand, "hvc": msg.get("hvc")}
        elif kind == "PUT" and isinstance(msg.get("value"), dict):
            msg["value"] = VersionedValue.from_wire(msg["value"])
        elif "versions" in msg:
            msg["versions"] = [
                VersionedValue.from_wire(x) if "value" in x and "version" in x else VersionVector(x)
                for x in msg["versions"]
            ]
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError(f"malformed {obj.get('type')} message: {exc}") from exc
    return msg


def encode(src: str, msg: dict) -> bytes:
    body = to_json(msg)
    body["src"] = src
    return (json.dumps(body, sort_keys=True) + "\n").encode()


def decode(line: bytes) -> tuple[str, dict]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"not JSON: {exc}") from exc
    src = obj.pop("src", None)
    if not isinstance(src, str):
        raise WireError("message lacks a src")
    return src, from_json(obj)


# --------------------------------------------------------------------------
# wall-clock scheduler
# --------------------------------------------------------------------------


class WallClock:
    """Milliseconds since construction on an asyncio loop."""

    def __init__(self, loop: asyncio.AbstractEventLoop | None = None):
        self.loop = loop or asyncio.get_event_loop()
        self._t0 = self.loop.time()

    @property
    def now(self) -> float:
        return (self.loop.time() - self._t0) * 1000.0

    def at(self, time: float, fn: Callable, *args) -> None:
        self.loop.call_at(self._t0 + max(time, 0.0) / 1000.0, fn, *args)

    def after(self, delay: float, fn: Callable, *args) -> None:
        self.loop.call_later(max(delay, 0.0) / 1000.0, fn, *args)

    def timeout(self, delay: float, value=None) -> Future:
        fut = Future()
        self.after(delay, fut.resolve, value)
        return fut

    def spawn(self, gen, name: str = "") -> Process:
        return Process(self, gen, name)


def wait(fut: Future) -> asyncio.Future:
    """Bridge a scheduler future to an awaitable."""
    loop = asyncio.get_event_loop()
    af = loop.create_future()
    fut.add_callback(lambda v: af.done() or af.set_result(v))
    return af


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------


class SocketNetwork:
    """Drop-in for the simulated network over TCP.

    ``addresses`` maps every node name to ``(host, port)``.  Nodes registered
    here are served locally; sends to any other name go over a socket.
    """

    def __init__(self, clock: WallClock, addresses: dict[str, tuple[str, int]]):
        self.sim = clock
        self.addresses = dict(addresses)
        self.handlers: dict[str, Callable] = {}
        self._servers: list[asyncio.base_events.Server] = []
        self._writers: dict[tuple[str, str], asyncio.StreamWriter] = {}
        self._pending: dict[tuple[str, str], list[bytes]] = {}
        self._mid = itertools.count()
        self.sent = 0
        self.errors = 0

    def register(self, name: str, handler: Callable) -> None:
        if name not in self.addresses:
            raise KeyError(f"no address for node {name!r}")
        self.handlers[name] = handler

    async def start(self) -> None:
        for name in self.handlers:
            host, port = self.addresses[name]
            srv = await asyncio.start_server(lambda r, w, n=name: self._serve(n, r, w), host, port)
            self._servers.append(srv)

    async def close(self) -> None:
        for w in self._writers.values():
            w.close()
        for srv in self._servers:
            srv.close()
            await srv.wait_closed()

    async def _serve(self, name: str, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        handler = self.handlers[name]
        try:
            while line := await reader.readline():
                try:
                    src, msg = decode(line)
                except WireError as exc:
                    self.errors += 1
                    log.warning("%s dropped bad message: %s", name, exc)
                    continue
                handler(msg, src, next(self._mid))
        finally:
            writer.close()

    def send(self, src: str, dst: str, msg: dict) -> int:
        mid = next(self._mid)
        data = encode(src, msg)
        self.sent += 1
        if dst in self.handlers:
            # local delivery still goes through the loop, never re-entrantly
            self.sim.after(0.0, self.handlers[dst], from_json(json.loads(data)), src, mid)
            return mid
        key = (src, dst)
        w = self._writers.get(key)
        if w is not None:
            w.write(data)
        elif key in self._pending:
            self._pending[key].append(data)
        else:
            self._pending[key] = [data]
            asyncio.ensure_future(self._connect(key))
        return mid

    async def _connect(self, key: tuple[str, str]) -> None:
        host, port = self.addresses[key[1]]
        _, writer = await asyncio.open_connection(host, port)
        for data in self._pending.pop(key):
            writer.write(data)
        self._writers[key] = writer
        await writer.drain()
