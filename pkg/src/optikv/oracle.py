"""Brute-force ground truth over recorded execution traces.

The oracle never looks at the hybrid clocks.  Happened-before is rebuilt
from the recorded per-process event order and the send/receive pairing,
either as plain vector clocks or as graph reachability.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import _accel
from .predicate import Connective, PredicateSpec, evaluate_cut
from .versions import VersionVector

CUT_CAP = 1_000_000
KINDS = ("send", "receive", "put_applied", "local")


class TraceTooLarge(RuntimeError):
    pass


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    pid: int
    kind: str
    time: float
    hvc: tuple[int, ...]
    mid: int = -1
    # put_applied: (key, resolved value, version)
    delta: tuple | None = None


@dataclass
class ExecutionTrace:
    n_procs: int
    names: list[str]
    servers: list[int]
    events: list[TraceEvent] = field(default_factory=list)
    epsilon: float | None = None

    def __post_init__(self):
        self._vc = None
        self._send_of = None

    def __len__(self):
        return len(self.events)

    # ---- message pairing -----------------------------------------------------

    def send_index(self) -> np.ndarray:
        """``out[i]`` is the index of the send paired with receive ``i``, else -1."""
        if self._send_of is None:
            sends: dict[int, int] = {}
            out = np.full(len(self.events), -1, dtype=np.int64)
            for i, ev in enumerate(self.events):
                if ev.kind == "send":
                    if ev.mid in sends:
                        raise TraceError(f"message {ev.mid} sent twice")
                    sends[ev.mid] = i
                elif ev.kind in ("receive", "put_applied") and ev.mid >= 0:
                    s = sends.pop(ev.mid, None)
                    if s is None:
                        raise TraceError(f"receive of unknown or already received message {ev.mid}")
                    out[i] = s
            self._send_of = out
        return self._send_of

    def vector_clocks(self) -> np.ndarray:
        if self._vc is None:
            proc = np.fromiter((e.pid for e in self.events), dtype=np.int64, count=len(self.events))
            self._vc = _accel.replay_vector_clocks(proc, self.send_index(), self.n_procs)
        return self._vc

    # ---- I/O ----------------------------------------------------------------

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            meta = {"type": "meta", "n_procs": self.n_procs, "names": self.names,
                    "servers": self.servers, "epsilon": self.epsilon}
            fh.write(json.dumps(meta, sort_keys=True) + "\n")
            for ev in self.events:
                obj = {"pid": ev.pid, "kind": ev.kind, "t": ev.time, "hvc": list(ev.hvc), "mid": ev.mid}
                if ev.delta is not None:
                    key, value, version = ev.delta
                    obj["delta"] = [key, value, version.to_dict()]
                fh.write(json.dumps(obj, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> ExecutionTrace:
        with open(path) as fh:
            lines = [ln for ln in fh if ln.strip()]
        if not lines:
            raise TraceError("empty trace file")
        meta = json.loads(lines[0])
        if meta.get("type") != "meta":
            raise TraceError("trace file must start with a meta record")
        trace = cls(int(meta["n_procs"]), list(meta["names"]), list(meta["servers"]), epsilon=meta.get("epsilon"))
        for ln in lines[1:]:
            obj = json.loads(ln)
            delta = obj.get("delta")
            if delta is not None:
                delta = (delta[0], delta[1], VersionVector(delta[2]))
            if obj["kind"] not in KINDS:
                raise TraceError(f"unknown event kind {obj['kind']!r}")
            trace.events.append(TraceEvent(int(obj["pid"]), obj["kind"], float(obj["t"]),
                                           tuple(obj["hvc"]), int(obj["mid"]), delta))
        return trace


class TraceRecorder:
    """Collects events as the simulation runs."""

    def __init__(self):
        self.events: list[TraceEvent] = []

    def record(self, pid, kind, time, hvc, mid=-1, delta=None) -> None:
        self.events.append(TraceEvent(pid, kind, time, hvc, mid, delta))

    def trace(self, n_procs: int, names: list[str], servers: list[int], epsilon=None) -> ExecutionTrace:
        return ExecutionTrace(n_procs, names, servers, list(self.events), epsilon)


# --------------------------------------------------------------------------
# happened-before
# --------------------------------------------------------------------------


def happened_before(trace: ExecutionTrace, a: int, b: int) -> bool:
    """Vector-clock test: ``a -> b`` iff a != b and b's clock has seen a."""
    if a == b:
        return False
    vc = trace.vector_clocks()
    p = trace.events[a].pid
    return bool(vc[a, p] <= vc[b, p])


def happened_before_matrix(trace: ExecutionTrace) -> np.ndarray:
    """Full ``hb[a, b]`` matrix from vector clocks."""
    vc = trace.vector_clocks()
    pids = np.fromiter((e.pid for e in trace.events), dtype=np.int64, count=len(trace.events))
    own = vc[np.arange(len(pids)), pids]
    hb = own[:, None] <= vc[:, pids].T
    np.fill_diagonal(hb, False)
    return hb


def reachability(trace: ExecutionTrace) -> np.ndarray:
    """Independent happened-before by breadth-first search over the event
    graph (program order plus message edges)."""
    n = len(trace.events)
    succ: list[list[int]] = [[] for _ in range(n)]
    last: dict[int, int] = {}
    send_of = trace.send_index()
    for i, ev in enumerate(trace.events):
        prev = last.get(ev.pid)
        if prev is not None:
            succ[prev].append(i)
        last[ev.pid] = i
        if send_of[i] >= 0:
            succ[int(send_of[i])].append(i)
    out = np.zeros((n, n), dtype=bool)
    for s in range(n):
        seen = out[s]
        q = deque(succ[s])
        while q:
            v = q.popleft()
            if seen[v]:
                continue
            seen[v] = True
            q.extend(succ[v])
    return out


# --------------------------------------------------------------------------
# local states and consistent cuts
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalState:
    server: int
    index: int
    start_event: int  # -1 for the initial state
    end_event: int  # -1 while still open at the end of the trace
    start_time: float
    values: dict
    versions: dict


def local_states(trace: ExecutionTrace, spec: PredicateSpec | None = None) -> dict[int, list[LocalState]]:
    """Per-server sequences of local states.  With ``spec`` only PUTs of
    relevant variables delimit states (others do not change the predicate's
    view) and copies are restricted to relevant variables."""
    relevant = None if spec is None else spec.vars
    out: dict[int, list[LocalState]] = {}
    for s in trace.servers:
        out[s] = []
    copies = {s: {} for s in trace.servers}
    starts = {s: (-1, 0.0) for s in trace.servers}
    for i, ev in enumerate(trace.events):
        if ev.kind != "put_applied" or ev.pid not in copies:
            continue
        key, value, version = ev.delta
        if relevant is not None and key not in relevant:
            continue
        cp = copies[ev.pid]
        start, t0 = starts[ev.pid]
        out[ev.pid].append(_state(ev.pid, len(out[ev.pid]), start, i, t0, cp))
        cp[key] = (value, version)
        starts[ev.pid] = (i, ev.time)
    for s in trace.servers:
        start, t0 = starts[s]
        out[s].append(_state(s, len(out[s]), start, -1, t0, copies[s]))
    return out


def _state(server, index, start, end, t0, copy) -> LocalState:
    return LocalState(server, index, start, end, t0,
                      {k: v[0] for k, v in copy.items()}, {k: v[1] for k, v in copy.items()})


def _precedes(hb, a: LocalState, b: LocalState) -> bool:
    if a.end_event < 0 or b.start_event < 0:
        return False
    return a.end_event == b.start_event or bool(hb(a.end_event, b.start_event))


def enumerate_consistent_cuts(
    trace: ExecutionTrace,
    spec: PredicateSpec | None = None,
    method: str = "vc",
    cap: int = CUT_CAP,
) -> Iterator[tuple[LocalState, ...]]:
    """Every cut (one local state per server, pairwise not ordered), once.

    ``method="vc"`` uses replayed vector clocks and a depth-first search;
    ``method="bfs"`` filters the full product using graph reachability.
    """
    states = local_states(trace, spec)
    servers = sorted(states)
    if method == "vc":
        vc = trace.vector_clocks()
        pids = [e.pid for e in trace.events]

        def hb(a, b):
            return vc[a, pids[a]] <= vc[b, pids[a]]

        yield from _dfs_cuts(states, servers, hb, cap)
    elif method == "bfs":
        reach = reachability(trace)

        def hb(a, b):
            return reach[a, b]

        yield from _product_cuts(states, servers, hb, cap)
    else:
        raise ValueError(f"unknown method {method!r}")


def _dfs_cuts(states, servers, hb, cap):
    count = 0
    chosen: list[LocalState] = []

    def rec(k):
        nonlocal count
        if k == len(servers):
            count += 1
            if count > cap:
                raise TraceTooLarge(f"more than {cap} consistent cuts")
            yield tuple(chosen)
            return
        for st in states[servers[k]]:
            if all(not _precedes(hb, st, o) and not _precedes(hb, o, st) for o in chosen):
                chosen.append(st)
                yield from rec(k + 1)
                chosen.pop()

    yield from rec(0)


def _product_cuts(states, servers, hb, cap):
    import itertools

    total = 1
    for s in servers:
        total *= len(states[s])
    if total > cap * 10:
        raise TraceTooLarge(f"product of {total} state combinations is too large")
    count = 0
    for combo in itertools.product(*(states[s] for s in servers)):
        if all(not _precedes(hb, a, b) for a in combo for b in combo if a is not b):
            count += 1
            if count > cap:
                raise TraceTooLarge(f"more than {cap} consistent cuts")
            yield combo


@dataclass(frozen=True)
class OracleResult:
    cut: tuple[LocalState, ...]
    time: float

    def indices(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.cut)


def oracle_detect(trace: ExecutionTrace, spec: PredicateSpec, use_versions: bool = True) -> OracleResult | None:
    """Earliest (by latest state start time) consistent cut violating ``spec``."""
    masks: dict[tuple[int, int], int] = {}
    best = None
    for cut in enumerate_consistent_cuts(trace, spec):
        union = 0
        for st in cut:
            key = (st.server, st.index)
            m = masks.get(key)
            if m is None:
                m = masks[key] = spec.local_mask(st.values)
            union |= m
        # no witness can exist unless the plain clause masks could cover it
        if spec.connective is Connective.AND and union != spec.full_mask or not union:
            continue
        view = {st.server: st.values for st in cut}
        vers = {st.server: st.versions for st in cut} if use_versions else None
        if evaluate_cut(spec, view, vers):
            t = max(st.start_time for st in cut)
            if best is None or t < best.time:
                best = OracleResult(cut, t)
    return best


def hvc_agreement(trace: ExecutionTrace, hb: np.ndarray | None = None) -> int:
    """Count event pairs where recorded hybrid clocks disagree with
    happened-before (clock strictly less iff a -> b)."""
    if hb is None:
        hb = happened_before_matrix(trace)
    stacked = np.array([e.hvc for e in trace.events], dtype=np.int64)
    less = _accel.strictly_less(stacked, stacked)
    return int(np.count_nonzero(less != hb))


def count_cuts(trace: ExecutionTrace, spec: PredicateSpec | None = None, method: str = "vc") -> int:
    return sum(1 for _ in enumerate_consistent_cuts(trace, spec, method))


def sample_events(trace: ExecutionTrace, k: int, seed: int = 0) -> Sequence[int]:
    rng = np.random.default_rng(seed)
    return sorted(rng.choice(len(trace.events), size=min(k, len(trace.events)), replace=False).tolist())
