"""Deterministic discrete-event network simulator.

Time is simulated milliseconds (float).  Node logic runs inside event
callbacks; client logic runs as generator processes that yield either a
sleep duration or a :class:`Future`.

Delays follow ``D = D_det * (1 + g * 0.2)`` with ``g ~ Gamma(0.8, 1)``.  Each
ordered channel draws from its own seeded stream and delivers in send order,
so traffic on one channel never perturbs delays on another.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

log = logging.getLogger(__name__)

MULTIPLIER_RATIO = 0.2
FIFO_GAP_MS = 0.001


class ConfigurationError(ValueError):
    pass


class ScheduleError(ValueError):
    pass


# --------------------------------------------------------------------------
# event loop
# --------------------------------------------------------------------------


class Future:
    __slots__ = ("done", "value", "_callbacks")

    def __init__(self):
        self.done = False
        self.value = None
        self._callbacks: list[Callable[[Any], None]] = []

    def resolve(self, value=None) -> bool:
        if self.done:
            return False
        self.done = True
        self.value = value
        cbs, self._callbacks = self._callbacks, []
        for cb in cbs:
            cb(value)
        return True

    def add_callback(self, cb: Callable[[Any], None]) -> None:
        if self.done:
            cb(self.value)
        else:
            self._callbacks.append(cb)


class Process:
    """Drives a generator.  ``yield <float>`` sleeps, ``yield <Future>`` waits."""

    __slots__ = ("sim", "gen", "finished", "name")

    def __init__(self, sim: Simulator, gen, name: str = ""):
        self.sim = sim
        self.gen = gen
        self.name = name
        self.finished = Future()
        sim.after(0.0, self._step, None)

    def _step(self, value) -> None:
        try:
            target = self.gen.send(value)
        except StopIteration as stop:
            self.finished.resolve(stop.value)
            return
        if isinstance(target, Future):
            target.add_callback(self._resume)
        else:
            self.sim.after(float(target), self._step, None)

    def _resume(self, value) -> None:
        # resume from the event loop, never re-entrantly from a resolve() call
        self.sim.after(0.0, self._step, value)


class Simulator:
    def __init__(self):
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()
        self.events = 0

    def at(self, time: float, fn: Callable, *args) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time} before now={self.now}")
        heapq.heappush(self._queue, (time, next(self._seq), fn, args))

    def after(self, delay: float, fn: Callable, *args) -> None:
        self.at(self.now + delay, fn, *args)

    def timeout(self, delay: float, value=None) -> Future:
        fut = Future()
        self.after(delay, fut.resolve, value)
        return fut

    def spawn(self, gen, name: str = "") -> Process:
        return Process(self, gen, name)

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, until: float | None = None, max_events: int | None = None) -> int:
        """Drain events in (time, insertion) order.  Stops at quiescence, at
        ``until`` (events at exactly ``until`` still run) or after
        ``max_events``.  Returns the number of events executed."""
        q = self._queue
        count = 0
        while q:
            if until is not None and q[0][0] > until:
                self.now = max(self.now, until)
                break
            if max_events is not None and count >= max_events:
                break
            time, _, fn, args = heapq.heappop(q)
            self.now = time
            fn(*args)
            count += 1
        else:
            if until is not None and until > self.now:
                self.now = until
        self.events += count
        return count


# --------------------------------------------------------------------------
# topology and delay model
# --------------------------------------------------------------------------


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class Topology:
    """Nodes placed in regions.  One-way deterministic delays are given per
    region pair; nodes in one region see ``intra_ms``; co-hosted nodes see
    ``local_ms``."""

    nodes: dict[str, str]
    region_delay: dict[tuple[str, str], float] = field(default_factory=dict)
    intra_ms: float = 1.0
    local_ms: float = 0.05
    hosts: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.order = sorted(self.nodes)
        self.index = {n: i for i, n in enumerate(self.order)}
        self._cache: dict[tuple[str, str], float] = {}

    @property
    def regions(self) -> list[str]:
        return sorted(set(self.nodes.values()))

    def base_delay(self, a: str, b: str) -> float:
        key = (a, b)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if a not in self.nodes or b not in self.nodes:
            raise ConfigurationError(f"unknown node in pair {a!r}, {b!r}")
        if a == b:
            d = 0.0
        elif self.hosts.get(a, a) == self.hosts.get(b, b):
            d = self.local_ms
        else:
            ra, rb = self.nodes[a], self.nodes[b]
            if ra == rb:
                d = self.intra_ms
            else:
                try:
                    d = self.region_delay[_pair(ra, rb)]
                except KeyError:
                    raise ConfigurationError(f"no delay between regions {ra} and {rb}") from None
        self._cache[key] = d
        return d

    def matrix(self) -> np.ndarray:
        n = len(self.order)
        m = np.zeros((n, n))
        for i, a in enumerate(self.order):
            for j, b in enumerate(self.order):
                m[i, j] = self.base_delay(a, b)
        return m

    def add_node(self, name: str, region: str, host: str | None = None) -> None:
        self.nodes[name] = region
        if host is not None:
            self.hosts[name] = host
        self.__post_init__()

    @classmethod
    def from_config(cls, block: dict, nodes: dict[str, str], hosts: dict[str, str] | None = None,
                    gamma_shape: float = 0.8) -> Topology:
        """Build from the experiment ``topology`` block.

        ``base_delay_ms`` maps ``"intra"`` and ``"rA|rB"`` to one-way
        deterministic delays.  ``rtt_ms`` may be given instead (halved).  With
        ``calibrate_mean`` the deterministic part is scaled down so that the
        *mean* one-way delay equals the configured value.
        """
        scale = 1.0
        if block.get("calibrate_mean"):
            scale = 1.0 / (1.0 + gamma_shape * MULTIPLIER_RATIO)
        delays: dict[tuple[str, str], float] = {}
        intra = block.get("intra_ms", 1.0)
        for src_key, factor in (("base_delay_ms", 1.0), ("rtt_ms", 0.5)):
            for k, v in (block.get(src_key) or {}).items():
                if k == "intra":
                    intra = v * factor
                    continue
                a, b = k.split("|")
                delays[_pair(a, b)] = float(v) * factor * scale
        regions = set(nodes.values())
        for ra in regions:
            for rb in regions:
                if ra < rb and (ra, rb) not in delays:
                    raise ConfigurationError(f"no delay between regions {ra} and {rb}")
        return cls(dict(nodes), delays, float(intra), float(block.get("local_ms", 0.05)), dict(hosts or {}))


@dataclass(frozen=True)
class DelayModel:
    shape: float = 0.8
    multiplier_ratio: float = MULTIPLIER_RATIO

    def __post_init__(self):
        if not 0.6 <= self.shape <= 1.0:
            raise ConfigurationError(f"gamma shape {self.shape} outside [0.6, 1.0]")

    @property
    def mean_factor(self) -> float:
        return 1.0 + self.shape * self.multiplier_ratio


def sample_delay(topology: Topology, a: str, b: str, rng: np.random.Generator,
                 model: DelayModel = DelayModel()) -> float:
    if a == b:
        raise ValueError("sample_delay needs two distinct nodes")
    return topology.base_delay(a, b) * (1.0 + rng.gamma(model.shape, 1.0) * model.multiplier_ratio)


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------

_BATCH = 256


class _Channel:
    __slots__ = ("rng", "buf", "pos", "last", "seq", "base")

    def __init__(self, rng: np.random.Generator, base: float):
        self.rng = rng
        self.buf = None
        self.pos = _BATCH
        self.last = -1.0
        self.seq = 0
        self.base = base


@dataclass
class _Override:
    src: str
    dst: str
    delay_ms: float
    seq: int | None = None
    match: dict | None = None
    nth: int = 0
    seen: int = 0
    used: bool = False


class Network:
    def __init__(self, sim: Simulator, topology: Topology, model: DelayModel = DelayModel(), seed: int = 0):
        self.sim = sim
        self.topology = topology
        self.model = model
        self.seed = int(seed)
        self.handlers: dict[str, Callable[[dict, str, int], None]] = {}
        self._channels: dict[tuple[str, str], _Channel] = {}
        self._mid = itertools.count()
        self._overrides: dict[tuple[str, str], list[_Override]] = {}
        self.override_log: list[dict] = []
        self.sent = 0

    def register(self, name: str, handler: Callable[[dict, str, int], None]) -> None:
        if name not in self.topology.nodes:
            raise ConfigurationError(f"node {name!r} is not in the topology")
        self.handlers[name] = handler

    def _channel(self, src: str, dst: str) -> _Channel:
        ch = self._channels.get((src, dst))
        if ch is None:
            idx = self.topology.index
            ss = np.random.SeedSequence([self.seed, idx[src], idx[dst]])
            ch = _Channel(np.random.Generator(np.random.PCG64(ss)), self.topology.base_delay(src, dst))
            self._channels[(src, dst)] = ch
        return ch

    def _draw(self, ch: _Channel) -> float:
        if ch.pos >= _BATCH:
            ch.buf = ch.rng.gamma(self.model.shape, 1.0, size=_BATCH).tolist()
            ch.pos = 0
        g = ch.buf[ch.pos]
        ch.pos += 1
        return ch.base * (1.0 + g * self.model.multiplier_ratio)

    def inject_schedule(self, script: Iterable[dict]) -> None:
        """Per-message delay overrides.

        Entries are ``{"src", "dst", "seq", "delay_ms"}`` (``seq`` counts the
        channel's messages from 0) or ``{"src", "dst", "match", "nth",
        "delay_ms"}`` where ``match`` is a subset of message fields.
        """
        for item in script:
            src, dst = item["src"], item["dst"]
            for n in (src, dst):
                if n not in self.topology.nodes:
                    raise ScheduleError(f"schedule names unknown node {n!r}")
            if "seq" not in item and "match" not in item:
                raise ScheduleError("schedule entry needs 'seq' or 'match'")
            ov = _Override(src, dst, float(item["delay_ms"]), item.get("seq"), item.get("match"), int(item.get("nth", 0)))
            self._overrides.setdefault((src, dst), []).append(ov)

    def check_schedule(self) -> None:
        """Raise if any scripted override never fired."""
        missing = [ov for ovs in self._overrides.values() for ov in ovs if not ov.used]
        if missing:
            ov = missing[0]
            what = f"seq {ov.seq}" if ov.seq is not None else f"match {ov.match} nth {ov.nth}"
            raise ScheduleError(f"override {ov.src}->{ov.dst} {what} matched no message")

    def _scripted(self, src: str, dst: str, seq: int, msg: dict) -> float | None:
        ovs = self._overrides.get((src, dst))
        if not ovs:
            return None
        for ov in ovs:
            if ov.used:
                continue
            if ov.seq is not None:
                if ov.seq == seq:
                    ov.used = True
                    return ov.delay_ms
            elif all(msg.get(k) == v for k, v in ov.match.items()):
                if ov.seen == ov.nth:
                    ov.used = True
                    return ov.delay_ms
                ov.seen += 1
        return None

    def send(self, src: str, dst: str, msg: dict) -> int:
        handler = self.handlers.get(dst)
        if handler is None:
            raise ConfigurationError(f"send to unregistered node {dst!r}")
        ch = self._channel(src, dst)
        seq = ch.seq
        ch.seq += 1
        now = self.sim.now
        natural = self._draw(ch) if src != dst else 0.0
        scripted = self._scripted(src, dst, seq, msg) if self._overrides else None
        delay = natural if scripted is None else scripted
        deliver = max(now + delay, ch.last + FIFO_GAP_MS)
        ch.last = deliver
        mid = next(self._mid)
        if scripted is not None:
            self.override_log.append({
                "src": src, "dst": dst, "seq": seq, "sent_at": now,
                "natural_at": now + natural, "deliver_at": deliver,
            })
        self.sent += 1
        self.sim.at(deliver, handler, msg, src, mid)
        return mid
