"""Monitors: collect candidates and search for a consistent cut that
witnesses a predicate violation.

Each arriving candidate is combined with the retained candidates of the
other servers.  A combination is a cut fragment: at most one candidate per
server, pairwise concurrent under :func:`interval_relation`.  Any such
fragment extends to a full consistent cut, so the search reports exactly
when some consistent cut satisfies the violation condition.

A retained candidate is forbidden, and dropped, once it lies before the
latest candidate of every other participating server: no future candidate
can be concurrent with it.  Semilinear candidates whose local state meets no
clause are semi-forbidden; they are advanced past immediately and only serve
as progress markers.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .detector import Candidate
from .hvc import INFINITE, Order, interval_relation
from .node import Node
from .predicate import Connective, Kind, PredicateSpec, _current_mask, mutex_spec

log = logging.getLogger(__name__)


class IntegrityError(RuntimeError):
    """A candidate stream skipped a sequence number."""


@dataclass(frozen=True)
class Violation:
    predicate: str
    cut: tuple[Candidate, ...]
    t_violate_ms: float
    detected_at_ms: float

    @property
    def latency_ms(self) -> float:
        return self.detected_at_ms - self.t_violate_ms

    def to_json(self) -> dict:
        return {
            "pred": self.predicate,
            "cut": [
                {
                    "server": c.server,
                    "start": c.interval.start.owner_time,
                    "end": c.interval.end.owner_time,
                    "state": dict(sorted(c.values.items())),
                }
                for c in self.cut
            ],
            "t_violate_ms": self.t_violate_ms,
            "detected_at_ms": round(self.detected_at_ms, 3),
            "latency_ms": round(self.latency_ms, 3),
        }


@dataclass
class ViolationLog:
    entries: list[Violation] = field(default_factory=list)

    def append(self, v: Violation) -> None:
        self.entries.append(v)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for v in self.entries:
                fh.write(json.dumps(v.to_json(), sort_keys=True) + "\n")


_MUTEX = re.compile(r"^mutex_(\d+)_(\d+)$")


def spec_from_name(name: str) -> PredicateSpec | None:
    m = _MUTEX.match(name)
    if m:
        return mutex_spec(int(m.group(1)), int(m.group(2)))
    return None


@dataclass
class _PredState:
    spec: PredicateSpec
    retained: dict[int, list[Candidate]] = field(default_factory=dict)
    latest: dict[int, Candidate] = field(default_factory=dict)
    next_seq: dict[int, int] = field(default_factory=dict)
    pending: list[Candidate] = field(default_factory=list)
    last_activity: float = 0.0


class MonitorEngine:
    """Detection state for the predicates routed to one monitor.

    ``participants`` is the set of servers replicating the predicate
    variables.  Without it nothing is ever pruned (still exact, but memory
    grows with the run).
    """

    def __init__(
        self,
        specs: Mapping[str, PredicateSpec] | Iterable[PredicateSpec] = (),
        participants: Sequence[int] | None = None,
        epsilon: float = INFINITE,
        strict: bool = True,
    ):
        if not isinstance(specs, Mapping):
            specs = {s.name: s for s in specs}
        self.specs = dict(specs)
        self.participants = None if participants is None else tuple(sorted(participants))
        self.epsilon = epsilon
        self.strict = strict
        self.preds: dict[str, _PredState] = {}
        self.log = ViolationLog()
        self.ingested = 0
        self.collected = 0

    # ---- ingest -----------------------------------------------------------

    def _state_for(self, name: str) -> _PredState | None:
        st = self.preds.get(name)
        if st is None:
            spec = self.specs.get(name) or spec_from_name(name)
            if spec is None:
                log.warning("candidate for unknown predicate %s dropped", name)
                return None
            st = self.preds[name] = _PredState(spec)
        return st

    def ingest(self, cand: Candidate, now: float = 0.0) -> None:
        st = self._state_for(cand.predicate)
        if st is None:
            return
        st.last_activity = now
        expected = st.next_seq.get(cand.server)
        if expected is not None:
            if cand.seq < expected:
                return  # duplicate
            if cand.seq > expected:
                msg = f"{cand.predicate}@{cand.server}: expected seq {expected}, got {cand.seq}"
                if self.strict:
                    raise IntegrityError(msg)
                log.warning(msg)
        st.next_seq[cand.server] = cand.seq + 1
        st.pending.append(cand)
        self.ingested += 1

    # ---- detection ----------------------------------------------------------

    def _concurrent(self, a: Candidate, b: Candidate) -> bool:
        return interval_relation(a.interval, b.interval, self.epsilon) is Order.CONCURRENT

    def _witness(self, spec: PredicateSpec, group: list[Candidate]) -> bool:
        if spec.connective is Connective.OR:
            return any(spec.local_mask(c.values) for c in group)
        cut, versions = {}, {}
        union = 0
        for c in group:
            vals, vers = c.split()
            cut[c.server], versions[c.server] = vals, vers
            union |= spec.local_mask(vals)
        if union != spec.full_mask:
            return False
        servers = [c.server for c in group]
        union = 0
        for s in servers:
            union |= _current_mask(spec, s, servers, cut, versions)
        return union == spec.full_mask

    def _search(self, st: _PredState, cand: Candidate) -> list[Candidate] | None:
        """Smallest-first search for a pairwise concurrent group containing
        ``cand`` that witnesses the violation."""
        spec = st.spec
        if self._witness(spec, [cand]):
            return [cand]
        if spec.connective is Connective.OR:
            return None
        others = sorted(s for s in st.retained if s != cand.server and st.retained[s])
        pools = {s: [x for x in st.retained[s] if self._concurrent(x, cand)] for s in others}
        others = [s for s in others if pools[s]]
        for size in range(1, min(len(others), len(spec.clauses) - 1) + 1):
            found = self._dfs(spec, [cand], others, pools, 0, size)
            if found is not None:
                return found
        return None

    def _dfs(self, spec, chosen, servers, pools, i, remaining):
        if remaining == 0:
            return list(chosen) if self._witness(spec, chosen) else None
        for j in range(i, len(servers) - remaining + 1):
            for x in pools[servers[j]]:
                if all(self._concurrent(x, y) for y in chosen[1:]):
                    chosen.append(x)
                    found = self._dfs(spec, chosen, servers, pools, j + 1, remaining - 1)
                    chosen.pop()
                    if found is not None:
                        return found
        return None

    def _prune(self, st: _PredState) -> None:
        if self.participants is None:
            return
        for t, items in st.retained.items():
            if not items:
                continue
            others = [u for u in self.participants if u != t]
            if not all(u in st.latest for u in others):
                continue
            st.retained[t] = [
                x for x in items
                if not all(interval_relation(x.interval, st.latest[u].interval, self.epsilon) is Order.BEFORE
                           for u in others)
            ]

    def _step(self, st: _PredState, cand: Candidate, now: float) -> Violation | None:
        spec = st.spec
        st.latest[cand.server] = cand
        found = None
        if spec.local_mask(cand.values):
            found = self._search(st, cand)
            st.retained.setdefault(cand.server, []).append(cand)
        # an empty-mask candidate is semi-forbidden: it never joins a witness
        self._prune(st)
        if found is None:
            return None
        t_violate = min(c.interval.start.owner_time for c in found)
        found.sort(key=lambda c: c.server)
        v = Violation(spec.name, tuple(found), float(t_violate), float(now))
        self.log.append(v)
        return v

    def detect(self, name: str, now: float = 0.0) -> list[Violation]:
        st = self.preds.get(name)
        if st is None:
            return []
        out = []
        pending, st.pending = st.pending, []
        for cand in pending:
            v = self._step(st, cand, now)
            if v is not None:
                out.append(v)
        return out

    def run_linear(self, name: str, now: float = 0.0) -> Violation | None:
        st = self.preds.get(name)
        if st is not None and st.spec.kind is not Kind.LINEAR:
            raise ValueError(f"{name} is not a linear predicate")
        found = self.detect(name, now)
        return found[0] if found else None

    def run_semilinear(self, name: str, now: float = 0.0) -> Violation | None:
        st = self.preds.get(name)
        if st is not None and st.spec.kind is not Kind.SEMILINEAR:
            raise ValueError(f"{name} is not a semilinear predicate")
        found = self.detect(name, now)
        return found[0] if found else None

    def ingest_and_detect(self, cand: Candidate, now: float = 0.0) -> list[Violation]:
        self.ingest(cand, now)
        return self.detect(cand.predicate, now)

    # ---- housekeeping -----------------------------------------------------

    def gc_inactive(self, now: float, ttl: float = 60_000.0) -> int:
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        dead = [n for n, st in self.preds.items() if now - st.last_activity > ttl and not st.pending]
        for n in dead:
            del self.preds[n]
        self.collected += len(dead)
        return len(dead)

    def retained_count(self) -> int:
        return sum(len(v) for st in self.preds.values() for v in st.retained.values())


class MonitorNode(Node):
    """Hosts a :class:`MonitorEngine`, receives CAND messages and notifies
    subscribed clients of each violation."""

    def __init__(
        self,
        name: str,
        pid: int,
        n_procs: int,
        net,
        engine: MonitorEngine,
        subscribers: Callable[[str], Iterable[str]] = lambda pred: (),
        recorder=None,
        epsilon: float = INFINITE,
        gc_ttl_ms: float = 60_000.0,
    ):
        super().__init__(name, pid, n_procs, net, recorder, epsilon)
        self.engine = engine
        self.subscribers = subscribers
        self.gc_ttl_ms = gc_ttl_ms
        self._last_gc = 0.0

    def on_message(self, msg: dict, src: str, mid: int) -> None:
        self.receive(msg, mid)
        if msg.get("type") != "CAND":
            return
        cand = msg["cand"]
        now = self.sim.now
        for v in self.engine.ingest_and_detect(cand, now):
            self.report(v)
        if now - self._last_gc > self.gc_ttl_ms / 4:
            self._last_gc = now
            self.engine.gc_inactive(now, self.gc_ttl_ms)

    def report(self, v: Violation) -> None:
        payload = v.to_json()
        for client in self.subscribers(v.predicate):
            self.send(client, {"type": "VIOLATION", "violation": payload})
