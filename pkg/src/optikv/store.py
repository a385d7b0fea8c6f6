"""A single replica: multi-version key store with a local detector hook."""

from __future__ import annotations

import logging
from typing import Callable

from .detector import Candidate, LocalDetector
from .node import Node
from .predicate import PredicateSpec, assign_monitor
from .versions import KeyEntry, VersionedValue, VersionVector, resolve_versions

log = logging.getLogger(__name__)


class ProtocolError(ValueError):
    pass


def _as_versioned(obj) -> VersionedValue:
    if isinstance(obj, VersionedValue):
        return obj
    try:
        return VersionedValue.from_wire(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed versioned value: {exc}") from exc


class StoreNode(Node):
    """Serves GET / GET_VERSION / PUT one request at a time.

    A request occupies the server for ``processing_ms`` (plus
    ``detector_ms`` when the detector handles a relevant key).  The request
    takes effect, and is stamped, when processing finishes.
    """

    def __init__(
        self,
        name: str,
        pid: int,
        n_procs: int,
        net,
        recorder=None,
        epsilon: float = float("inf"),
        processing_ms: float = 3.0,
        detector_ms: float = 0.05,
        monitoring: bool = False,
        monitors: list[str] | None = None,
        predicates: list[PredicateSpec] = (),
        infer: bool = True,
        count: Callable[[float, str, str, str], None] | None = None,
    ):
        super().__init__(name, pid, n_procs, net, recorder, epsilon)
        self.store: dict[str, KeyEntry] = {}
        self.processing_ms = processing_ms
        self.detector_ms = detector_ms
        self.monitors = list(monitors or [])
        self.detector = LocalDetector(pid, self.resolved, infer) if monitoring else None
        self.busy_until = 0.0
        self.count = count
        self.applied_puts = 0
        self.candidates_sent = 0
        if self.detector is not None:
            for spec in predicates:
                self.detector.activate_predicate(spec, self.clock)

    # ---- pure store operations -------------------------------------------

    def handle_get(self, key: str) -> list[VersionedValue]:
        entry = self.store.get(key)
        return list(entry.versions) if entry else []

    def handle_get_version(self, key: str) -> list[VersionVector]:
        return [v.version for v in self.handle_get(key)]

    def apply_put(self, key: str, incoming) -> tuple[str, VersionVector]:
        """Insert ``incoming`` and return the key's resolved copy."""
        vv = _as_versioned(incoming)
        entry = self.store.get(key)
        if entry is None:
            entry = self.store[key] = KeyEntry(key)
        entry.insert(vv)
        self.applied_puts += 1
        best = resolve_versions(entry.versions)
        return best.value, best.version

    def preload(self, key: str, value: VersionedValue) -> None:
        """Seed the store before a run; bypasses the detector and the trace."""
        entry = self.store.setdefault(key, KeyEntry(key))
        entry.insert(value)

    def resolved(self, key: str) -> tuple[str, VersionVector] | None:
        entry = self.store.get(key)
        if not entry or not entry.versions:
            return None
        best = resolve_versions(entry.versions)
        return best.value, best.version

    # ---- message handling --------------------------------------------------

    def _relevant(self, key: str) -> bool:
        d = self.detector
        return d is not None and (key in d.watch or key.startswith(("flag", "turn")))

    def on_message(self, msg: dict, src: str, mid: int) -> None:
        cost = self.processing_ms
        if self._relevant(msg.get("key", "")):
            cost += self.detector_ms
        start = max(self.sim.now, self.busy_until)
        self.busy_until = start + cost
        self.sim.at(self.busy_until, self._process, msg, src, mid)

    def _process(self, msg: dict, src: str, mid: int) -> None:
        kind = msg.get("type")
        key = msg.get("key")
        reply = {"key": key, "req_id": msg.get("req_id")}
        if self.count is not None:
            self.count(self.sim.now, "server", self.name, kind)
        if kind == "PUT":
            try:
                copy = self.apply_put(key, msg.get("value"))
            except ProtocolError as exc:
                self.receive(msg, mid)
                reply.update(type="ERROR", error=str(exc))
                self.send(src, reply)
                return
            self.receive(msg, mid, "put_applied", (key, copy[0], copy[1]))
            if self.detector is not None:
                self._emit(self.detector.on_put_applied(key, copy, self.clock))
            reply["type"] = "PUT_ACK"
        elif kind in ("GET", "GET_VERSION"):
            self.receive(msg, mid)
            if self.detector is not None:
                self.detector.on_get_observed(key, self.clock)
            reply["type"] = "GET_RESP"
            if kind == "GET":
                reply["versions"] = self.handle_get(key)
            else:
                reply["versions"] = self.handle_get_version(key)
        else:
            self.receive(msg, mid)
            reply.update(type="ERROR", error=f"unknown request type {kind!r}")
        self.send(src, reply)

    def _emit(self, cands: list[Candidate]) -> None:
        for cand in cands:
            dst = self.monitors[assign_monitor(cand.predicate, len(self.monitors))]
            self.send(dst, {"type": "CAND", "cand": cand})
            self.candidates_sent += 1

    def flush(self) -> None:
        """Close the detector's open intervals at the end of a run."""
        if self.detector is None:
            return
        self.local_event()
        self._emit(self.detector.flush(self.clock))
