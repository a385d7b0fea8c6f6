"""Helpers shared by the open-ended workloads."""

from __future__ import annotations


class OpMix:
    """Deterministic PUT/GET interleaving hitting ``put_pct`` exactly over
    every 100 operations (Bresenham-style accumulator)."""

    def __init__(self, put_pct: int):
        if not 0 <= put_pct <= 100:
            raise ValueError("put_pct must be within [0, 100]")
        self.put_pct = put_pct
        self._acc = 0

    def next_is_put(self) -> bool:
        self._acc += self.put_pct
        if self._acc >= 100:
            self._acc -= 100
            return True
        return False
