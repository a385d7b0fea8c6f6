"""Short random read/write scripts over a fixed variable set.

Used to produce small traces for oracle comparisons: a handful of clients
each issue a bounded number of operations with random think times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..client import Unavailable
from ..predicate import PredicateSpec


@dataclass
class RandomParams:
    ops_per_client: int = 3
    put_pct: int = 70
    think_ms: float = 40.0
    vars: list[str] = field(default_factory=list)
    values: list[str] = field(default_factory=list)


class RandomWorkload:
    name = "random"

    def __init__(self, params: RandomParams, n_clients: int, seed: int = 0, specs: list[PredicateSpec] = ()):
        self.params = params
        self.n_clients = n_clients
        self.seed = seed
        self.specs = list(specs)
        choices: dict[str, set[str]] = {v: set(params.values) for v in params.vars}
        for spec in self.specs:
            for c in spec.clauses:
                for lit in c.literals:
                    choices.setdefault(lit.var, set(params.values)).add(lit.expected)
        if not choices:
            raise ValueError("random workload needs variables")
        self.vars = sorted(choices)
        # each variable draws from the values its literals test for, plus a miss
        self.values = {v: sorted(vals | {"other"}) for v, vals in choices.items()}
        self.stopped = False
        self.done = 0

    def predicates(self):
        return list(self.specs)

    def subscribers(self, client_names):
        return lambda pred: ()

    def preload(self):
        return {}

    def client_loop(self, client, idx: int):
        rng = np.random.default_rng([self.seed, idx, 3])
        p = self.params
        for _ in range(p.ops_per_client):
            if self.stopped:
                break
            yield float(rng.exponential(p.think_ms))
            var = self.vars[rng.integers(len(self.vars))]
            try:
                if rng.random() * 100 < p.put_pct:
                    vals = self.values[var]
                    yield from client.put(var, vals[rng.integers(len(vals))])
                else:
                    yield from client.get(var)
            except Unavailable:
                pass
        self.done += 1

    def report(self, cluster) -> dict:
        return {"clients_done": self.done}
