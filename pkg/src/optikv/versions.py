"""Client version vectors and multi-version values."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping


class VersionOrder(enum.Enum):
    EQUAL = "equal"
    DOMINATES = "dominates"
    DOMINATED = "dominated"
    CONCURRENT = "concurrent"


class VersionVector(Mapping[str, int]):
    """Immutable map client-id -> counter; absent entries read as 0."""

    __slots__ = ("_d", "_hash")

    def __init__(self, entries: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        d = dict(entries)
        for k, v in d.items():
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValueError(f"bad counter {v!r} for {k!r}")
        self._d = {k: v for k, v in d.items() if v}
        self._hash = None

    def __getitem__(self, key: str) -> int:
        return self._d[key]

    def get(self, key, default=0):
        return self._d.get(key, default)

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __eq__(self, other):
        if isinstance(other, VersionVector):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __repr__(self):
        inner = ",".join(f"{k}:{v}" for k, v in sorted(self._d.items()))
        return "{" + inner + "}"

    def to_dict(self) -> dict[str, int]:
        return dict(sorted(self._d.items()))

    def total(self) -> int:
        return sum(self._d.values())

    def compare(self, other: VersionVector) -> VersionOrder:
        a, b = self._d, other._d
        ge = all(a.get(k, 0) >= v for k, v in b.items())
        le_ = all(b.get(k, 0) >= v for k, v in a.items())
        if ge and le_:
            return VersionOrder.EQUAL
        if ge:
            return VersionOrder.DOMINATES
        if le_:
            return VersionOrder.DOMINATED
        return VersionOrder.CONCURRENT

    def dominates(self, other: VersionVector) -> bool:
        return self.compare(other) is VersionOrder.DOMINATES

    def merge(self, other: VersionVector) -> VersionVector:
        d = dict(self._d)
        for k, v in other._d.items():
            if v > d.get(k, 0):
                d[k] = v
        return VersionVector(d)

    def increment(self, client: str) -> VersionVector:
        d = dict(self._d)
        d[client] = d.get(client, 0) + 1
        return VersionVector(d)


def merge_all(vectors: Iterable[VersionVector]) -> VersionVector:
    out = VersionVector()
    for v in vectors:
        out = out.merge(v)
    return out


@dataclass(frozen=True)
class VersionedValue:
    version: VersionVector
    value: str

    def to_wire(self) -> dict:
        return {"version": self.version.to_dict(), "value": self.value}

    @classmethod
    def from_wire(cls, obj) -> VersionedValue:
        return cls(VersionVector(obj["version"]), str(obj["value"]))


def prune(versions: Iterable[VersionedValue]) -> list[VersionedValue]:
    """Drop versions dominated by another one and exact duplicates.

    Output order is canonical (sorted) so that results do not depend on
    arrival order.
    """
    vs = list(dict.fromkeys(versions))
    keep = []
    for v in vs:
        if not any(o.version.dominates(v.version) for o in vs if o is not v):
            keep.append(v)
    keep.sort(key=lambda x: (sorted(x.version.items()), x.value))
    return keep


@dataclass
class KeyEntry:
    key: str
    versions: list[VersionedValue] = field(default_factory=list)

    def insert(self, incoming: VersionedValue) -> None:
        """Add ``incoming`` unless an equal-or-newer version is stored;
        prune whatever it dominates."""
        for v in self.versions:
            order = v.version.compare(incoming.version)
            if order is VersionOrder.DOMINATES:
                return
            if order is VersionOrder.EQUAL and v.value == incoming.value:
                return
        self.versions = prune([*self.versions, incoming])


def _strict_max_client(v: VersionedValue, rivals: list[VersionedValue]) -> str | None:
    ids = [
        k for k, n in v.version.items()
        if all(n > r.version.get(k, 0) for r in rivals if r is not v)
    ]
    return min(ids) if ids else None


def resolve_versions(versions: Iterable[VersionedValue]) -> VersionedValue:
    """Deterministic resolver for a set of concurrent versions.

    Largest counter sum wins.  Ties go to the version holding a strictly
    maximal entry for the lexicographically smallest client id, then to the
    smallest value.
    """
    vs = list(versions)
    if not vs:
        raise ValueError("cannot resolve an empty version list")
    if len(vs) == 1:
        return vs[0]
    best = max(v.version.total() for v in vs)
    tied = [v for v in vs if v.version.total() == best]
    if len(tied) == 1:
        return tied[0]

    def rank(v: VersionedValue):
        cid = _strict_max_client(v, tied)
        return (cid is None, cid or "", v.value, sorted(v.version.items()))

    return min(tied, key=rank)
