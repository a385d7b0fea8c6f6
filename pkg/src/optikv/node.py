"""Base class for simulated processes that carry a hybrid vector clock."""

from __future__ import annotations

from .hvc import INFINITE, HybridVectorClock, stamp_receive, stamp_send, tick
from .netsim import Network


class Node:
    """A named process with a clock.  Every send and receive is stamped and,
    when a recorder is attached, written to the execution trace."""

    def __init__(self, name: str, pid: int, n_procs: int, net: Network, recorder=None, epsilon: float = INFINITE):
        self.name = name
        self.pid = pid
        self.net = net
        self.sim = net.sim
        self.recorder = recorder
        self.clock = HybridVectorClock.zero(pid, n_procs, epsilon)
        net.register(name, self.on_message)

    def now_ms(self) -> int:
        return int(self.sim.now)

    def send(self, dst: str, msg: dict) -> int:
        self.clock = stamp_send(self.clock, self.now_ms())
        msg["hvc"] = self.clock
        mid = self.net.send(self.name, dst, msg)
        if self.recorder is not None:
            self.recorder.record(self.pid, "send", self.sim.now, self.clock.entries, mid)
        return mid

    def receive(self, msg: dict, mid: int, kind: str = "receive", delta=None) -> None:
        self.clock = stamp_receive(self.clock, msg["hvc"], self.now_ms())
        if self.recorder is not None:
            self.recorder.record(self.pid, kind, self.sim.now, self.clock.entries, mid, delta)

    def local_event(self, delta=None) -> None:
        self.clock = tick(self.clock, self.now_ms())
        if self.recorder is not None:
            self.recorder.record(self.pid, "local", self.sim.now, self.clock.entries, -1, delta)

    def on_message(self, msg: dict, src: str, mid: int) -> None:  # pragma: no cover - abstract
        raise NotImplementedError
