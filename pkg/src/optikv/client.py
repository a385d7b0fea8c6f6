"""Client-side replication: quorum GET / PUT over all replicas."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Callable

from .netsim import Future
from .node import Node
from .versions import VersionedValue, merge_all, prune, resolve_versions

__all__ = [
    "Consistency", "ReplicationConfig", "StoreClient", "Unavailable",
    "classify_consistency", "resolve_versions",
]


class Unavailable(RuntimeError):
    """Fewer than the required replicas answered after both rounds."""


class Consistency(str, enum.Enum):
    SEQUENTIAL = "sequential"
    EVENTUAL = "eventual"
    OTHER = "other"


@dataclass(frozen=True)
class ReplicationConfig:
    n: int
    r: int
    w: int
    servers: tuple[str, ...]
    timeout_ms: float = 500.0
    # how many phase-1 answers an operation waits for before returning;
    # None = all N for reads and W for writes
    preferred_reads: int | None = None
    preferred_writes: int | None = None

    def __post_init__(self):
        if self.n != len(self.servers):
            raise ValueError(f"N={self.n} but {len(self.servers)} servers listed")
        if not 1 <= self.r <= self.n or not 1 <= self.w <= self.n:
            raise ValueError(f"need 1 <= R, W <= N, got N={self.n} R={self.r} W={self.w}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")
        for name, val, low in (("preferred_reads", self.preferred_reads, self.r),
                               ("preferred_writes", self.preferred_writes, self.w)):
            if val is not None and not low <= val <= self.n:
                raise ValueError(f"{name}={val} outside [{low}, {self.n}]")

    @property
    def wait_reads(self) -> int:
        return self.preferred_reads or self.n

    @property
    def wait_writes(self) -> int:
        return self.preferred_writes or self.w

    @property
    def label(self) -> str:
        return f"N{self.n}R{self.r}W{self.w}"


def classify_consistency(config: ReplicationConfig) -> Consistency:
    n, r, w = config.n, config.r, config.w
    if w + r > n and 2 * w > n:
        return Consistency.SEQUENTIAL
    if w + r <= n:
        return Consistency.EVENTUAL
    return Consistency.OTHER


class StoreClient(Node):
    """A client process.  ``get``, ``get_version`` and ``put`` are generators
    meant to be driven with ``yield from`` inside a simulator process."""

    def __init__(
        self,
        name: str,
        pid: int,
        n_procs: int,
        net,
        config: ReplicationConfig,
        recorder=None,
        epsilon: float = float("inf"),
        count: Callable[[float, str, str, str], None] | None = None,
    ):
        super().__init__(name, pid, n_procs, net, recorder, epsilon)
        self.config = config
        self.count = count
        self._req = itertools.count()
        self._pending: dict[int, Callable[[str, dict], None]] = {}
        self.violations: list[dict] = []

    # ---- messaging --------------------------------------------------------

    def on_message(self, msg: dict, src: str, mid: int) -> None:
        self.receive(msg, mid)
        if msg.get("type") == "VIOLATION":
            self.violations.append(msg["violation"])
            return
        cb = self._pending.pop(msg.get("req_id"), None)
        if cb is not None and msg.get("type") != "ERROR":
            cb(src, msg)

    def _request(self, server: str, kind: str, key: str, value, cb) -> int:
        rid = next(self._req)
        self._pending[rid] = cb
        msg = {"type": kind, "key": key, "req_id": rid}
        if value is not None:
            msg["value"] = value
        self.send(server, msg)
        return rid

    def _quorum(self, kind: str, key: str, value, need: int, wait: int):
        """Phase 1 fans out to every replica and waits for ``wait`` answers or
        the timeout; phase 2 retries silent replicas one at a time until
        ``need`` answers are in."""
        cfg = self.config
        answers: dict[str, dict] = {}
        done = Future()
        rids = []

        def on_reply(server, msg):
            if done.done:
                return
            answers[server] = msg
            if len(answers) >= wait:
                done.resolve()

        for s in cfg.servers:
            rids.append(self._request(s, kind, key, value, on_reply))
        self.sim.after(cfg.timeout_ms, done.resolve)
        yield done
        for rid in rids:
            self._pending.pop(rid, None)
        got = dict(answers)
        if len(got) < need:
            for s in cfg.servers:
                if s in got:
                    continue
                retry = Future()
                rid = self._request(s, kind, key, value, lambda srv, m, f=retry: f.resolve(m))
                self.sim.after(cfg.timeout_ms, retry.resolve, None)
                msg = yield retry
                self._pending.pop(rid, None)
                if msg is not None:
                    got[s] = msg
                    if len(got) >= need:
                        break
        if len(got) < need:
            raise Unavailable(f"{kind} {key}: {len(got)} of {need} replicas answered")
        return got

    def _tally(self, op: str) -> None:
        if self.count is not None:
            self.count(self.sim.now, "app", self.name, op)

    # ---- operations -------------------------------------------------------

    def get(self, key: str):
        try:
            got = yield from self._quorum("GET", key, None, self.config.r, self.config.wait_reads)
        except Unavailable:
            self._tally("GET_FAIL")
            raise
        self._tally("GET")
        return prune(v for msg in got.values() for v in msg["versions"])

    def get_value(self, key: str):
        """GET followed by the library resolver; None for an absent key."""
        versions = yield from self.get(key)
        return resolve_versions(versions).value if versions else None

    def get_version(self, key: str):
        got = yield from self._quorum("GET_VERSION", key, None, self.config.r, self.config.wait_reads)
        return [v for msg in got.values() for v in msg["versions"]]

    def put(self, key: str, value: str):
        try:
            seen = yield from self.get_version(key)
            version = merge_all(seen).increment(self.name)
            vv = VersionedValue(version, str(value))
            yield from self._quorum("PUT", key, vv, self.config.w, self.config.wait_writes)
        except Unavailable:
            self._tally("PUT_FAIL")
            raise
        self._tally("PUT")
        return vv

