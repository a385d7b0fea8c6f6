"""Weather monitoring over a planar grid.

Clients own vertical strips of the grid.  An update reads one neighbour of
a cell and writes the cell's new condition; the PUT share of operations is
fixed by ``put_pct``.  For every pair of clients whose strips touch, one
border edge carries a monitored predicate: both cells reporting a storm at
once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..client import Unavailable
from ..predicate import Clause, Connective, Kind, Literal, PredicateSpec
from .mix import OpMix

CONDITIONS = ("clear", "rain", "storm")


@dataclass
class WeatherParams:
    width: int = 20
    height: int = 10
    put_pct: int = 25
    storm_prob: float = 0.05


class WeatherWorkload:
    name = "weather"

    def __init__(self, params: WeatherParams, n_clients: int, seed: int = 0):
        if params.width < n_clients:
            raise ValueError("grid narrower than the number of clients")
        self.params = params
        self.n_clients = n_clients
        self.seed = seed
        cols = np.array_split(np.arange(params.width), n_clients)
        self.strip_of_col = np.empty(params.width, dtype=np.int64)
        for c, cs in enumerate(cols):
            self.strip_of_col[cs] = c
        self.cells = [[(x, y) for x in cs.tolist() for y in range(params.height)] for cs in cols]
        self._specs = []
        self._owners = {}
        for c in range(n_clients - 1):
            x = int(cols[c][-1])
            y = params.height // 2
            spec = PredicateSpec(
                f"border_{c}_{c + 1}",
                Kind.LINEAR,
                Connective.AND,
                (Clause(0, (Literal(self.key(x, y), "storm"),)),
                 Clause(1, (Literal(self.key(x + 1, y), "storm"),))),
            )
            self._specs.append(spec)
            self._owners[spec.name] = (c, c + 1)
        self.stopped = False
        self.ops = [{"GET": 0, "PUT": 0} for _ in range(n_clients)]

    @staticmethod
    def key(x: int, y: int) -> str:
        return f"cell{x}_{y}"

    def predicates(self):
        return list(self._specs)

    def subscribers(self, client_names):
        def subs(pred):
            return [client_names[c] for c in self._owners.get(pred, ())]
        return subs

    def preload(self):
        return {}

    def _neighbor(self, x, y, rng):
        p = self.params
        opts = [(x + dx, y + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= x + dx < p.width and 0 <= y + dy < p.height]
        return opts[rng.integers(len(opts))]

    def client_loop(self, client, idx: int):
        rng = np.random.default_rng([self.seed, idx, 7])
        mix = OpMix(self.params.put_pct)
        cells = self.cells[idx]
        seen: dict[tuple[int, int], str] = {}
        while not self.stopped:
            x, y = cells[rng.integers(len(cells))]
            try:
                if mix.next_is_put():
                    if rng.random() < self.params.storm_prob:
                        cond = "storm"
                    else:
                        nb = seen.get(self._neighbor(x, y, rng), "clear")
                        cond = "rain" if nb == "storm" else CONDITIONS[rng.integers(2)]
                    yield from client.put(self.key(x, y), cond)
                    self.ops[idx]["PUT"] += 1
                else:
                    nx, ny = self._neighbor(x, y, rng)
                    val = yield from client.get_value(self.key(nx, ny))
                    seen[(nx, ny)] = val or "clear"
                    self.ops[idx]["GET"] += 1
            except Unavailable:
                pass

    def report(self, cluster) -> dict:
        gets = sum(o["GET"] for o in self.ops)
        puts = sum(o["PUT"] for o in self.ops)
        total = gets + puts
        return {"gets": gets, "puts": puts, "put_share": puts / total if total else 0.0,
                "predicates": len(self._specs)}
