"""Distributed graph colouring with Peterson edge locks.

Each client owns a slice of the nodes.  For every node it locks the edges to
neighbours owned by other clients (in the global edge order), reads the
neighbour colours, picks the smallest free colour and defers the write to
the end of its batch.  A violation notification received during a batch
aborts the batch, which is then redone from scratch.

Deferred writes mean two neighbours may still pick the same colour; the
coordinator therefore runs repair rounds until the stored colouring is
proper.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..client import Unavailable
from ..versions import VersionedValue, VersionVector, prune, resolve_versions
from .graph import Graph, generate_powerlaw_graph, is_proper, preprocess_high_degree, read_edge_list

log = logging.getLogger(__name__)


@dataclass
class ColoringParams:
    nodes: int = 2000
    edges: int | None = None
    graph_file: str | None = None
    batch_size: int = 10
    poll_budget: int = 200
    max_rounds: int = 20
    preprocess: bool = True


def edge_vars(a: int, b: int) -> tuple[str, str, str]:
    return f"flag{a}_{b}_{a}", f"flag{a}_{b}_{b}", f"turn{a}_{b}"


@dataclass
class ClientStats:
    nodes_colored: int = 0
    batches_committed: int = 0
    batches_aborted: int = 0
    lock_timeouts: int = 0
    unavailable: int = 0


@dataclass
class ColoringWorkload:
    params: ColoringParams
    n_clients: int
    seed: int = 0
    graph: Graph = field(init=False)
    owner: np.ndarray = field(init=False)

    name = "coloring"

    def __post_init__(self):
        p = self.params
        if p.graph_file:
            self.graph = read_edge_list(p.graph_file)
        else:
            self.graph = generate_powerlaw_graph(p.nodes, p.edges, self.seed)
        n = self.graph.n
        # contiguous id ranges, assigned to clients in a seed-shuffled order
        chunk = np.array_split(np.arange(n), self.n_clients)
        perm = np.random.default_rng(self.seed).permutation(self.n_clients)
        self.owner = np.empty(n, dtype=np.int64)
        for i, nodes in enumerate(chunk):
            self.owner[nodes] = perm[i]
        if p.preprocess:
            self.pre = preprocess_high_degree(self.graph)
            self.fixed = self.pre.colors
        else:
            self.pre = None
            self.fixed = np.full(n, -1, dtype=np.int64)
        todo = np.nonzero(self.fixed < 0)[0]
        self.assigned = [todo[self.owner[todo] == c].tolist() for c in range(self.n_clients)]
        self.stats = [ClientStats() for _ in range(self.n_clients)]
        self.rounds = 0
        self.proper: bool | None = None
        self.finished = False
        self.stopped = False

    # ---- harness hooks ----------------------------------------------------

    def predicates(self):
        return []  # edge-lock predicates are inferred by the servers

    def subscribers(self, client_names: list[str]):
        def subs(pred: str):
            parts = pred.split("_")
            if parts[0] != "mutex" or len(parts) != 3:
                return []
            owners = {int(self.owner[int(parts[1])]), int(self.owner[int(parts[2])])}
            return [client_names[c] for c in sorted(owners)]
        return subs

    def preload(self) -> dict[str, VersionedValue]:
        seed_version = VersionVector({"pre": 1})
        return {f"color{v}": VersionedValue(seed_version, str(int(self.fixed[v])))
                for v in np.nonzero(self.fixed >= 0)[0].tolist()}

    def cross_edges(self, v: int) -> list[tuple[int, int]]:
        mine = self.owner[v]
        out = [(min(v, u), max(v, u)) for u in self.graph.neighbors(v).tolist() if self.owner[u] != mine]
        out.sort()
        return out

    # ---- Peterson locks ---------------------------------------------------

    def acquire(self, client, edge: tuple[int, int], me: int):
        a, b = edge
        other = b if me == a else a
        yield from client.put(f"flag{a}_{b}_{me}", "true")
        yield from client.put(f"turn{a}_{b}", str(other))
        for _ in range(self.params.poll_budget):
            flag = yield from client.get_value(f"flag{a}_{b}_{other}")
            if flag != "true":
                return True
            turn = yield from client.get_value(f"turn{a}_{b}")
            if turn != str(other):
                return True
        return False

    def release(self, client, edge: tuple[int, int], me: int):
        a, b = edge
        yield from client.put(f"flag{a}_{b}_{me}", "false")

    # ---- client loop --------------------------------------------------------

    def _color_node(self, client, v: int, deferred: dict[int, int]):
        """Returns the chosen colour, or None if a lock could not be taken."""
        held = []
        chosen = None
        try:
            for edge in self.cross_edges(v):
                held.append(edge)
                ok = yield from self.acquire(client, edge, v)
                if not ok:
                    return None
            used = set()
            for u in self.graph.neighbors(v).tolist():
                if u in deferred:
                    used.add(deferred[u])
                    continue
                val = yield from client.get_value(f"color{u}")
                if val is not None:
                    used.add(int(val))
            chosen = 0
            while chosen in used:
                chosen += 1
        finally:
            for edge in reversed(held):
                yield from self.release(client, edge, v)
        return chosen

    def client_round(self, client, idx: int, nodes: list[int]):
        stats = self.stats[idx]
        bs = self.params.batch_size
        for start in range(0, len(nodes), bs):
            batch = nodes[start:start + bs]
            while True:
                if self.stopped:
                    return
                seen = len(client.violations)
                deferred: dict[int, int] = {}
                ok = True
                try:
                    for v in batch:
                        c = yield from self._color_node(client, v, deferred)
                        if c is None:
                            stats.lock_timeouts += 1
                            ok = False
                            break
                        deferred[v] = c
                    if ok and len(client.violations) == seen:
                        for v in batch:
                            yield from client.put(f"color{v}", str(deferred[v]))
                        stats.batches_committed += 1
                        stats.nodes_colored += len(batch)
                        break
                except Unavailable:
                    stats.unavailable += 1
                stats.batches_aborted += 1

    def coordinator(self, cluster):
        """Runs colouring rounds until the stored colouring is proper."""
        todo = self.assigned
        for rnd in range(self.params.max_rounds):
            if self.stopped:
                return
            self.rounds = rnd + 1
            procs = [cluster.sim.spawn(self.client_round(c, i, todo[i]), c.name)
                     for i, c in enumerate(cluster.clients) if todo[i]]
            for p in procs:
                yield p.finished
            colors = self.stored_colors(cluster)
            self.proper = is_proper(self.graph, colors)
            if self.proper:
                break
            todo = self.repairs(colors)
        self.finished = True

    # ---- validation -------------------------------------------------------

    def stored_colors(self, cluster) -> np.ndarray:
        colors = np.full(self.graph.n, -1, dtype=np.int64)
        for v in range(self.graph.n):
            versions = [x for s in cluster.servers for x in s.handle_get(f"color{v}")]
            if versions:
                colors[v] = int(resolve_versions(prune(versions)).value)
        return colors

    def repairs(self, colors: np.ndarray) -> list[list[int]]:
        e = self.graph.edges
        bad = (colors[e[:, 0]] == colors[e[:, 1]]) | (colors[e[:, 0]] < 0) | (colors[e[:, 1]] < 0)
        redo = set(np.nonzero(colors < 0)[0].tolist())
        for u, v in e[bad].tolist():
            if colors[u] < 0 or colors[v] < 0:
                continue
            # the larger endpoint recolours unless it was preprocessed
            redo.add(v if self.fixed[v] < 0 else u)
        todo: list[list[int]] = [[] for _ in range(self.n_clients)]
        for v in sorted(redo):
            todo[int(self.owner[v])].append(v)
        return todo

    def report(self, cluster) -> dict:
        colors = self.stored_colors(cluster)
        valid = colors[colors >= 0]
        return {
            "graph_nodes": self.graph.n,
            "graph_edges": self.graph.m,
            "q": None if self.pre is None else self.pre.q,
            "high_degree_nodes": 0 if self.pre is None else len(self.pre.high),
            "rounds": self.rounds,
            "finished": self.finished,
            "proper": bool(is_proper(self.graph, colors)),
            "colors_used": int(valid.max()) + 1 if valid.size else 0,
            "batches_committed": sum(s.batches_committed for s in self.stats),
            "batches_aborted": sum(s.batches_aborted for s in self.stats),
            "lock_timeouts": sum(s.lock_timeouts for s in self.stats),
            "unavailable": sum(s.unavailable for s in self.stats),
        }
