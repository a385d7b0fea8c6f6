"""Canned experiments shared by the tests, the CLI and the benchmarks.

* :func:`random_scenario` builds a small traced run (2-4 replicas, a few
  operations) over either a linear or a semi-linear predicate, so the
  monitor can be compared against the cut oracle.
* :func:`forced_violation` races two clients on one edge lock under
  N3R1W1 and holds back one replica's copy of a ``turn`` write.
* :func:`oracle_crosscheck` replays a traced run's predicates through the
  oracle and lines them up with what the monitors reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harness import ExperimentConfig, RunResult, execute
from .monitor import Violation
from .oracle import ExecutionTrace, OracleResult, oracle_detect
from .predicate import Clause, Connective, Kind, Literal, PredicateSpec, infer_from_varname, mutex_spec
from .workloads.random_ops import RandomParams, RandomWorkload

LAB_TOPOLOGY = {
    "regions": ["r0", "r1", "r2"],
    "rtt_ms": {"r0|r1": 76, "r0|r2": 103, "r1|r2": 163},
    "intra_ms": 1,
}


def random_spec(kind: Kind, rng: np.random.Generator) -> PredicateSpec:
    """A random predicate of ``kind``; a quarter of the semi-linear draws are
    the edge-lock shape itself."""
    if kind is Kind.SEMILINEAR and rng.random() < 0.25:
        return mutex_spec(0, 1)
    connective = Connective.AND if rng.random() < 0.7 else Connective.OR
    n_clauses = int(rng.integers(1, 4))
    clauses = []
    for i in range(n_clauses):
        width = int(rng.integers(1, 3))
        names = rng.choice(["x", "y", "z"], size=width, replace=False)
        clauses.append(Clause(i, tuple(Literal(str(v), str(rng.choice(["a", "b"]))) for v in names)))
    name = "lin" if kind is Kind.LINEAR else "semi"
    return PredicateSpec(name, kind, connective, tuple(clauses))


@dataclass
class Scenario:
    spec: PredicateSpec
    config: ExperimentConfig
    result: RunResult

    @property
    def trace(self) -> ExecutionTrace:
        return self.result.cluster.trace()

    @property
    def violations(self) -> list[Violation]:
        return [v for v in self.result.violations if v.predicate == self.spec.name]


def random_scenario(seed: int, kind: Kind, max_puts: int = 7) -> Scenario:
    """A short random run whose trace is small enough to enumerate."""
    rng = np.random.default_rng([seed, 0x5EED])
    spec = random_spec(kind, rng)
    n_servers = int(rng.integers(2, 5))
    n_clients = int(rng.integers(2, 4))
    ops = max(1, max_puts // n_clients)
    think = float(rng.uniform(2, 40))
    regions = ["r0", "r1"]
    topology = {
        "regions": regions,
        "base_delay_ms": {"r0|r1": float(rng.uniform(5, 60))},
        "intra_ms": float(rng.uniform(0.5, 5)),
    }
    cfg = ExperimentConfig(
        seed=seed,
        replication={"n": n_servers, "r": 1, "w": 1},
        workload={"type": "random", "ops_per_client": ops, "put_pct": 100, "think_ms": think},
        topology=topology,
        clients=n_clients,
        trace=True,
    )
    params = RandomParams(ops_per_client=ops, put_pct=100, think_ms=think)
    wl = RandomWorkload(params, n_clients, seed, [spec])
    return Scenario(spec, cfg, execute(cfg, workload=wl))


# --------------------------------------------------------------------------
# forced Peterson violation
# --------------------------------------------------------------------------


@dataclass
class ForcedRun:
    result: RunResult
    schedule: list
    onset_ms: float  # when the held-back copy would otherwise have landed

    @property
    def violations(self) -> list[Violation]:
        return [v for v in self.result.violations if v.predicate == "mutex_0_1"]


def forced_config(seed: int, hold_ms: float = 1000.0) -> tuple[ExperimentConfig, list]:
    """Two nodes joined by one edge, owned by clients c0 and c1 that share
    region r0.  Both reach for the edge lock at once, so their ``turn0_1``
    writes are concurrent versions; the resolver favours c0's.  c0's copy
    bound for replica s1 is held for ``hold_ms``, leaving s1 on c1's value
    while s0 and s2 settle on c0's."""
    cfg = ExperimentConfig(
        seed=seed,
        replication={"n": 3, "r": 1, "w": 1},
        workload={"type": "coloring", "nodes": 2, "edges": 1, "preprocess": False},
        topology=dict(LAB_TOPOLOGY, client_regions=["r0", "r0"]),
        clients=2,
    )
    schedule = [{
        "src": "c0",
        "dst": "s1",
        "match": {"type": "PUT", "key": "turn0_1"},
        "nth": 0,
        "delay_ms": hold_ms,
    }]
    return cfg.replace(schedule=schedule), schedule


def forced_violation(seed: int, hold_ms: float = 1000.0) -> ForcedRun:
    cfg, schedule = forced_config(seed, hold_ms)
    res = execute(cfg)
    log = res.cluster.net.override_log
    onset = min(entry["natural_at"] for entry in log) if log else float("nan")
    return ForcedRun(res, schedule, onset)


# --------------------------------------------------------------------------
# oracle cross-check
# --------------------------------------------------------------------------


@dataclass
class CrossCheck:
    checked: int
    oracle_hits: dict[str, OracleResult]
    monitor_hits: set[str]

    @property
    def agree(self) -> bool:
        return set(self.oracle_hits) == self.monitor_hits


def mutex_predicates(trace: ExecutionTrace) -> list[PredicateSpec]:
    names = {}
    for ev in trace.events:
        if ev.kind == "put_applied":
            spec = infer_from_varname(ev.delta[0])
            if spec is not None:
                names[spec.name] = spec
    return [names[k] for k in sorted(names)]


def oracle_crosscheck(result: RunResult, specs: list[PredicateSpec] | None = None,
                      sample: int | None = None, seed: int = 0) -> CrossCheck:
    """Run the oracle on ``specs`` (default: every mutex predicate touched
    in the trace, optionally a random ``sample`` of them plus every one the
    monitors reported)."""
    trace = result.cluster.trace()
    reported = {v.predicate for v in result.violations}
    if specs is None:
        specs = mutex_predicates(trace)
        if sample is not None and sample < len(specs):
            rng = np.random.default_rng(seed)
            keep = set(rng.choice(len(specs), size=sample, replace=False).tolist())
            specs = [s for i, s in enumerate(specs) if i in keep or s.name in reported]
    hits = {}
    for spec in specs:
        found = oracle_detect(trace, spec)
        if found is not None:
            hits[spec.name] = found
    names = {s.name for s in specs}
    return CrossCheck(len(specs), hits, reported & names)
