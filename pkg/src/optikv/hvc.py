"""Hybrid vector clocks.

A clock is a fixed-length vector over processes ``0..n-1``.  Each entry is a
pair ``(time_ms, counter)``; the counter orders local events that share a
millisecond.  Entries are stored packed into one int (``time << 20 | counter``)
so that elementwise max and comparison stay cheap inside the simulator.

With a finite ``epsilon`` every non-owner entry is floored at
``owner_time - epsilon`` on each stamp.  ``epsilon = math.inf`` turns the clock
into a plain vector clock.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from operator import le
from typing import Iterable, Sequence

INFINITE = math.inf

_SHIFT = 20
_CMASK = (1 << _SHIFT) - 1
BOTTOM = -(1 << _SHIFT)  # unpacks to (-1, 0): "never heard of"


class ClockRegression(ValueError):
    """Physical time handed to a stamp is older than the owner's entry."""


class DecodeError(ValueError):
    pass


class Order(enum.Enum):
    BEFORE = "before"
    AFTER = "after"
    CONCURRENT = "concurrent"
    EQUAL = "equal"


def pack(time_ms: int, counter: int = 0) -> int:
    return (int(time_ms) << _SHIFT) | int(counter)


def unpack(value: int) -> tuple[int, int]:
    return value >> _SHIFT, value & _CMASK


@dataclass(frozen=True, slots=True)
class HybridVectorClock:
    owner: int
    entries: tuple[int, ...]
    epsilon: float = INFINITE

    @classmethod
    def zero(cls, owner: int, n: int, epsilon: float = INFINITE) -> HybridVectorClock:
        return cls(owner, (BOTTOM,) * n, epsilon)

    @classmethod
    def from_times(
        cls,
        owner: int,
        times: Sequence[int],
        epsilon: float = INFINITE,
        counters: Sequence[int] | None = None,
    ) -> HybridVectorClock:
        counters = counters or [0] * len(times)
        return cls(owner, tuple(pack(t, c) for t, c in zip(times, counters)), epsilon)

    def __post_init__(self):
        if not 0 <= self.owner < len(self.entries):
            raise ValueError(f"owner {self.owner} outside clock of size {len(self.entries)}")

    @property
    def n(self) -> int:
        return len(self.entries)

    def entry(self, j: int) -> tuple[int, int]:
        return unpack(self.entries[j])

    def times(self) -> list[int]:
        return [v >> _SHIFT for v in self.entries]

    @property
    def owner_time(self) -> int:
        return self.entries[self.owner] >> _SHIFT

    def floor(self) -> int | None:
        """Packed floor value, or None when epsilon is infinite."""
        if math.isinf(self.epsilon):
            return None
        return pack(int(self.owner_time - self.epsilon))

    def __repr__(self) -> str:
        body = ", ".join(f"{t}" if c == 0 else f"{t}.{c}" for t, c in map(unpack, self.entries))
        return f"HVC(owner={self.owner}, [{body}])"

    def to_wire(self) -> dict:
        return {
            "owner": self.owner,
            "e": list(self.entries),
            "eps": None if math.isinf(self.epsilon) else self.epsilon,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> HybridVectorClock:
        eps = obj.get("eps")
        return cls(int(obj["owner"]), tuple(int(v) for v in obj["e"]), INFINITE if eps is None else float(eps))


def _owner_entry(prior: int, now: int) -> int:
    t, c = unpack(prior)
    if now < t:
        raise ClockRegression(f"physical time {now} is older than owner entry {t}")
    if now == t:
        return pack(t, c + 1)
    return pack(now, 0)


def stamp_send(clock: HybridVectorClock, now: int) -> HybridVectorClock:
    """Advance ``clock`` for a local or send event at physical time ``now``."""
    now = int(now)
    own = _owner_entry(clock.entries[clock.owner], now)
    if math.isinf(clock.epsilon):
        entries = list(clock.entries)
    else:
        fl = pack(int(now - clock.epsilon))
        entries = [v if v > fl else fl for v in clock.entries]
    entries[clock.owner] = own
    return HybridVectorClock(clock.owner, tuple(entries), clock.epsilon)


def stamp_receive(clock: HybridVectorClock, msg_clock: HybridVectorClock, now: int) -> HybridVectorClock:
    """Merge a piggy-backed clock at physical time ``now``.

    Non-owner entries take the max of the prior entry, the message entry and
    the epsilon floor.
    """
    if msg_clock.n != clock.n:
        raise ValueError("clocks over different process universes")
    if msg_clock.epsilon != clock.epsilon:
        raise ValueError("clocks with different epsilon")
    now = int(now)
    own = _owner_entry(clock.entries[clock.owner], now)
    merged = list(map(max, clock.entries, msg_clock.entries))
    if not math.isinf(clock.epsilon):
        fl = pack(int(now - clock.epsilon))
        merged = [v if v > fl else fl for v in merged]
    merged[clock.owner] = own
    return HybridVectorClock(clock.owner, tuple(merged), clock.epsilon)


def tick(clock: HybridVectorClock, now: int) -> HybridVectorClock:
    """Local event with no message."""
    return stamp_send(clock, now)


def leq(a: Sequence[int], b: Sequence[int]) -> bool:
    return all(map(le, a, b))


def compare(a: HybridVectorClock, b: HybridVectorClock) -> Order:
    ea, eb = a.entries, b.entries
    if len(ea) != len(eb):
        raise ValueError("clocks over different process universes")
    if ea == eb:
        return Order.EQUAL
    if all(map(le, ea, eb)):
        return Order.BEFORE
    if all(map(le, eb, ea)):
        return Order.AFTER
    return Order.CONCURRENT


def less(a: HybridVectorClock, b: HybridVectorClock) -> bool:
    return a.entries != b.entries and all(map(le, a.entries, b.entries))


# --------------------------------------------------------------------------
# intervals
# --------------------------------------------------------------------------


class SameServerError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class HvcInterval:
    server: int
    start: HybridVectorClock
    end: HybridVectorClock

    def __post_init__(self):
        if self.start.owner != self.server or self.end.owner != self.server:
            raise ValueError("interval endpoints must be owned by the interval's server")
        if not leq(self.start.entries, self.end.entries):
            raise ValueError("interval start must not exceed its end")


def _ordered(first: HvcInterval, second: HvcInterval, epsilon: float) -> bool:
    """``first`` lies entirely before ``second`` with no possible overlap."""
    if not less(first.end, second.start):
        return False
    if math.isinf(epsilon):
        # With an unbounded epsilon the clock is a vector clock, so the
        # vector order alone is causal.
        return True
    return first.end.owner_time < second.start.owner_time - epsilon


def interval_relation(i1: HvcInterval, i2: HvcInterval, epsilon: float = INFINITE) -> Order:
    """Classify two intervals from different servers.

    Returns BEFORE/AFTER only when the order is certain; overlapping and
    uncertain pairs are CONCURRENT.
    """
    if i1.server == i2.server:
        raise SameServerError("intervals of one server are totally ordered and never compared")
    if _ordered(i1, i2, epsilon):
        return Order.BEFORE
    if _ordered(i2, i1, epsilon):
        return Order.AFTER
    return Order.CONCURRENT


# --------------------------------------------------------------------------
# compact encoding
# --------------------------------------------------------------------------


def _put_varint(buf: bytearray, value: int) -> None:
    value = (value << 1) ^ (value >> 63)  # zigzag
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _get_varint(data: bytes, pos: int) -> tuple[int, int]:
    shift = 0
    value = 0
    while True:
        if pos >= len(data):
            raise DecodeError("truncated varint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            break
        shift += 7
    return (value >> 1) ^ -(value & 1), pos


def presence_mask(clock: HybridVectorClock) -> list[bool]:
    fl = clock.floor()
    if fl is None:
        return [True] * clock.n
    return [j == clock.owner or v > fl for j, v in enumerate(clock.entries)]


def encode_compact(clock: HybridVectorClock) -> bytes:
    """Owner varint, big-endian presence bitmask padded to bytes, then
    zigzag-varint ``(time, counter)`` pairs of the present entries in
    ascending process order.  Entries sitting on the epsilon floor are
    implicit."""
    mask = presence_mask(clock)
    buf = bytearray()
    _put_varint(buf, clock.owner)
    nbytes = (clock.n + 7) // 8
    bits = bytearray(nbytes)
    for j, present in enumerate(mask):
        if present:
            bits[j // 8] |= 0x80 >> (j % 8)
    buf += bits
    for j, present in enumerate(mask):
        if present:
            t, c = clock.entry(j)
            _put_varint(buf, t)
            _put_varint(buf, c)
    return bytes(buf)


def decode_compact(data: bytes, n: int, epsilon: float = INFINITE) -> HybridVectorClock:
    owner, pos = _get_varint(data, 0)
    nbytes = (n + 7) // 8
    if pos + nbytes > len(data):
        raise DecodeError("truncated bitmask")
    bits = data[pos:pos + nbytes]
    pos += nbytes
    present = [bool(bits[j // 8] & (0x80 >> (j % 8))) for j in range(n)]
    if not 0 <= owner < n or not present[owner]:
        raise DecodeError("owner entry missing")
    values: dict[int, int] = {}
    for j in range(n):
        if present[j]:
            t, pos = _get_varint(data, pos)
            c, pos = _get_varint(data, pos)
            values[j] = pack(t, c)
    if pos != len(data):
        raise DecodeError("trailing bytes")
    if math.isinf(epsilon):
        fill = BOTTOM
    else:
        fill = pack(int((values[owner] >> _SHIFT) - epsilon))
    return HybridVectorClock(owner, tuple(values.get(j, fill) for j in range(n)), epsilon)


def mask_string(clock: HybridVectorClock) -> str:
    return "".join("1" if p else "0" for p in presence_mask(clock))


def stack(clocks: Iterable[HybridVectorClock]) -> list[tuple[int, ...]]:
    return [c.entries for c in clocks]
