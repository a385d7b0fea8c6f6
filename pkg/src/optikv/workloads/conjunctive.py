"""Conjunctive workload: groups of ``l`` clients, each owning one boolean.

Every PUT sets the client's variable to ``"true"`` with probability
``beta``.  The group's monitored condition is the conjunction of all ``l``
variables being true.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..client import Unavailable
from ..predicate import Clause, Connective, Kind, Literal, PredicateSpec
from .mix import OpMix


@dataclass
class ConjunctiveParams:
    l: int = 10  # noqa: E741 - the usual name for the conjunct count
    beta: float = 0.01
    put_pct: int = 50


class ConjunctiveWorkload:
    name = "conjunctive"

    def __init__(self, params: ConjunctiveParams, n_clients: int, seed: int = 0):
        if params.l < 1 or params.l > n_clients:
            raise ValueError(f"l={params.l} must be within [1, clients={n_clients}]")
        if not 0.0 <= params.beta <= 1.0:
            raise ValueError("beta must be within [0, 1]")
        self.params = params
        self.n_clients = n_clients
        self.seed = seed
        self.group = [i // params.l for i in range(n_clients)]
        n_groups = (n_clients + params.l - 1) // params.l
        self.members = [[i for i in range(n_clients) if self.group[i] == g] for g in range(n_groups)]
        self._specs = [
            PredicateSpec(
                f"conj_{g}",
                Kind.LINEAR,
                Connective.AND,
                tuple(Clause(k, (Literal(self.var(i), "true"),)) for k, i in enumerate(m)),
            )
            for g, m in enumerate(self.members)
        ]
        self.stopped = False
        self.ops = [{"GET": 0, "PUT": 0, "true": 0} for _ in range(n_clients)]

    def var(self, client_idx: int) -> str:
        return f"local{self.group[client_idx]}_{client_idx}"

    def predicates(self):
        return list(self._specs)

    def subscribers(self, client_names):
        def subs(pred):
            g = int(pred.split("_")[1])
            return [client_names[i] for i in self.members[g]]
        return subs

    def preload(self):
        return {}

    def client_loop(self, client, idx: int):
        rng = np.random.default_rng([self.seed, idx, 11])
        mix = OpMix(self.params.put_pct)
        peers = self.members[self.group[idx]]
        while not self.stopped:
            try:
                if mix.next_is_put():
                    val = "true" if rng.random() < self.params.beta else "false"
                    yield from client.put(self.var(idx), val)
                    self.ops[idx]["PUT"] += 1
                    self.ops[idx]["true"] += val == "true"
                else:
                    peer = peers[rng.integers(len(peers))]
                    yield from client.get(self.var(peer))
                    self.ops[idx]["GET"] += 1
            except Unavailable:
                pass

    def report(self, cluster) -> dict:
        gets = sum(o["GET"] for o in self.ops)
        puts = sum(o["PUT"] for o in self.ops)
        total = gets + puts
        return {"gets": gets, "puts": puts, "put_share": puts / total if total else 0.0,
                "true_puts": sum(o["true"] for o in self.ops), "predicates": len(self._specs)}
