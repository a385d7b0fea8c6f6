"""Per-server local detector.

The detector watches the server's application order of PUTs.  For every
tracked predicate it keeps the start of the current interval (the server's
clock at the last relevant change) and closes that interval when the next
relevant PUT is applied.  Linear predicates only ship intervals during which
some clause held on this server's copies; semilinear predicates ship every
interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .hvc import HvcInterval, HybridVectorClock
from .predicate import Kind, PredicateSpec, infer_from_varname, versions_of
from .versions import VersionVector

# var -> (resolved value, its version), or None when the key is absent
Lookup = Callable[[str], "tuple[str, VersionVector] | None"]


@dataclass(frozen=True)
class Candidate:
    predicate: str
    server: int
    seq: int
    interval: HvcInterval
    state: Mapping[str, tuple[str, VersionVector]]

    @property
    def values(self) -> dict[str, str]:
        return {k: v[0] for k, v in self.state.items()}

    def split(self):
        return versions_of(self.state)

    def to_wire(self) -> dict:
        return {
            "type": "CAND",
            "pred": self.predicate,
            "server": self.server,
            "seq": self.seq,
            "start_hvc": self.interval.start.to_wire(),
            "end_hvc": self.interval.end.to_wire(),
            "state": {k: {"value": v, "version": ver.to_dict()} for k, (v, ver) in sorted(self.state.items())},
        }

    @classmethod
    def from_wire(cls, obj: dict) -> Candidate:
        if obj.get("type") != "CAND":
            raise ValueError(f"not a candidate message: {obj.get('type')!r}")
        server = int(obj["server"])
        interval = HvcInterval(
            server,
            HybridVectorClock.from_wire(obj["start_hvc"]),
            HybridVectorClock.from_wire(obj["end_hvc"]),
        )
        state = {k: (str(v["value"]), VersionVector(v.get("version", {}))) for k, v in obj["state"].items()}
        return cls(str(obj["pred"]), server, int(obj["seq"]), interval, state)


@dataclass
class _Tracked:
    spec: PredicateSpec
    start: HybridVectorClock
    seq: int = 0


@dataclass
class LocalDetector:
    """Detector cache for one server.

    ``lookup`` returns the server's current resolved copy of a key; it seeds
    the cache when a predicate is activated so that the cache always mirrors
    the store for every relevant variable.
    """

    server: int
    lookup: Lookup
    infer: bool = True
    predicates: dict[str, _Tracked] = field(default_factory=dict)
    cache: dict[str, tuple[str, VersionVector]] = field(default_factory=dict)
    watch: dict[str, list[str]] = field(default_factory=dict)

    def activate_predicate(self, spec: PredicateSpec, hvc_now: HybridVectorClock) -> bool:
        """Start tracking ``spec``; the first interval starts at ``hvc_now``.
        Returns False when the predicate was already tracked."""
        if spec.name in self.predicates:
            return False
        self.predicates[spec.name] = _Tracked(spec, hvc_now)
        for var in spec.vars:
            self.watch.setdefault(var, []).append(spec.name)
            if var not in self.cache:
                copy = self.lookup(var)
                if copy is not None:
                    self.cache[var] = copy
        return True

    def deactivate(self, name: str) -> None:
        tracked = self.predicates.pop(name, None)
        if tracked is None:
            return
        for var in tracked.spec.vars:
            names = self.watch.get(var, [])
            if name in names:
                names.remove(name)
            if not names:
                self.watch.pop(var, None)
                self.cache.pop(var, None)

    def _maybe_infer(self, key: str, hvc_now: HybridVectorClock) -> None:
        if not self.infer or key in self.watch:
            return
        spec = infer_from_varname(key)
        if spec is not None:
            self.activate_predicate(spec, hvc_now)

    def on_get_observed(self, key: str, hvc_now: HybridVectorClock) -> None:
        self._maybe_infer(key, hvc_now)

    def _close(self, tracked: _Tracked, end: HybridVectorClock, out: list[Candidate]) -> None:
        spec = tracked.spec
        state = {v: self.cache[v] for v in spec.vars if v in self.cache}
        if spec.kind is Kind.SEMILINEAR or spec.local_mask({k: s[0] for k, s in state.items()}):
            out.append(Candidate(spec.name, self.server, tracked.seq, HvcInterval(self.server, tracked.start, end), state))
            tracked.seq += 1

    def on_put_applied(
        self,
        key: str,
        copy: tuple[str, VersionVector] | None,
        hvc_now: HybridVectorClock,
    ) -> list[Candidate]:
        """Hook called after a PUT is applied.  ``copy`` is the key's resolved
        value and version after the PUT."""
        if key not in self.watch:
            # a PUT that activates a predicate starts its first interval here
            self._maybe_infer(key, hvc_now)
            if key in self.watch and copy is not None:
                self.cache[key] = copy
            return []
        out: list[Candidate] = []
        for name in self.watch[key]:
            tracked = self.predicates[name]
            self._close(tracked, hvc_now, out)
            tracked.start = hvc_now
        if copy is None:
            self.cache.pop(key, None)
        else:
            self.cache[key] = copy
        return out

    def flush(self, hvc_now: HybridVectorClock) -> list[Candidate]:
        """Close every open interval at ``hvc_now`` (end of the experiment)."""
        out: list[Candidate] = []
        for name in sorted(self.predicates):
            tracked = self.predicates[name]
            self._close(tracked, hvc_now, out)
            tracked.start = hvc_now
        return out
