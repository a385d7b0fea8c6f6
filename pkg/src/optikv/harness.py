"""Experiment runner: wires topology, replicas, monitors and a workload,
collects metrics and writes result files."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .client import ReplicationConfig, StoreClient, classify_consistency
from .monitor import MonitorEngine, MonitorNode, ViolationLog
from .netsim import DelayModel, Network, Simulator, Topology
from .oracle import ExecutionTrace, TraceRecorder
from .predicate import parse_xml
from .store import StoreNode
from .workloads.coloring import ColoringParams, ColoringWorkload
from .workloads.conjunctive import ConjunctiveParams, ConjunctiveWorkload
from .workloads.random_ops import RandomParams, RandomWorkload
from .workloads.weather import WeatherParams, WeatherWorkload

log = logging.getLogger(__name__)

LATENCY_BUCKETS = ((0.0, 50.0, "<50"), (50.0, 1000.0, "50-1000"),
                   (1000.0, 10000.0, "1000-10000"), (10000.0, math.inf, ">=10000"))
APP_OPS = ("GET", "PUT")


class ConfigError(ValueError):
    pass


class ComparisonError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    seed: int
    replication: dict
    workload: dict
    topology: dict = field(default_factory=dict)
    clients: int = 6
    duration_ms: float | None = None
    monitoring: bool = True
    monitor_count: int | None = None
    gc_ttl_ms: float = 60_000.0
    epsilon: float | None = None
    processing_ms: float = 3.0
    detector_ms: float = 0.05
    schedule: Any = None
    trace: bool = False
    bucket_ms: float = 1000.0
    predicates: list = field(default_factory=list)
    consistency: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in d:
            raise ConfigError("config needs a seed")
        for key in ("replication", "workload"):
            if key not in d:
                raise ConfigError(f"config needs a {key!r} block")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base = os.path.dirname(os.path.abspath(path))
        for key in ("schedule",):
            if isinstance(data.get(key), str) and not os.path.isabs(data[key]):
                data[key] = os.path.join(base, data[key])
        data["predicates"] = [p if os.path.isabs(p) else os.path.join(base, p) for p in data.get("predicates", [])]
        wl = data.get("workload", {})
        if isinstance(wl.get("graph_file"), str) and not os.path.isabs(wl["graph_file"]):
            wl["graph_file"] = os.path.join(base, wl["graph_file"])
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    @property
    def servers(self) -> list[str]:
        return [f"s{i}" for i in range(int(self.replication["n"]))]

    def replication_config(self) -> ReplicationConfig:
        r = self.replication
        return ReplicationConfig(
            int(r["n"]), int(r["r"]), int(r["w"]), tuple(self.servers),
            float(r.get("timeout_ms", 500.0)), r.get("preferred_reads"), r.get("preferred_writes"),
        )

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        try:
            rc = self.replication_config()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad replication block: {exc}") from exc
        if self.consistency is not None and classify_consistency(rc).value != self.consistency:
            raise ConfigError(f"{rc.label} is {classify_consistency(rc).value}, config says {self.consistency}")
        if self.clients < 1:
            raise ConfigError("need at least one client")
        if self.duration_ms is not None and self.duration_ms < 0:
            raise ConfigError("duration must be non-negative")
        if self.workload.get("type") not in WORKLOADS:
            raise ConfigError(f"unknown workload type {self.workload.get('type')!r}")
        if self.monitor_count is not None and self.monitor_count < 1:
            raise ConfigError("monitor_count must be >= 1")
        if self.bucket_ms <= 0:
            raise ConfigError("bucket_ms must be positive")

    @property
    def eps(self) -> float:
        return math.inf if self.epsilon is None else float(self.epsilon)


def _params(cls, block: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(block) - names - {"type"}
    if extra:
        raise ConfigError(f"unknown workload parameters: {sorted(extra)}")
    return cls(**{k: v for k, v in block.items() if k != "type"})


def _coloring(cfg, specs):
    return ColoringWorkload(_params(ColoringParams, cfg.workload), cfg.clients, cfg.seed)


def _weather(cfg, specs):
    return WeatherWorkload(_params(WeatherParams, cfg.workload), cfg.clients, cfg.seed)


def _conjunctive(cfg, specs):
    return ConjunctiveWorkload(_params(ConjunctiveParams, cfg.workload), cfg.clients, cfg.seed)


def _random(cfg, specs):
    return RandomWorkload(_params(RandomParams, cfg.workload), cfg.clients, cfg.seed, specs)


WORKLOADS = {"coloring": _coloring, "weather": _weather, "conjunctive": _conjunctive, "random": _random}


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


class MetricsLedger:
    """Per-bucket operation counts for servers and applications."""

    def __init__(self, bucket_ms: float = 1000.0):
        self.bucket_ms = bucket_ms
        self.counts: dict[tuple[int, str, str, str], int] = defaultdict(int)

    def count(self, t_ms: float, scope: str, ident: str, op: str) -> None:
        self.counts[(int(t_ms // self.bucket_ms), scope, ident, op)] += 1

    def series(self, scope: str, n_buckets: int, ops=None) -> np.ndarray:
        out = np.zeros(n_buckets, dtype=np.int64)
        for (b, sc, _, op), c in self.counts.items():
            if sc == scope and b < n_buckets and (ops is None or op in ops):
                out[b] += c
        return out

    def total(self, scope: str, ops=None, horizon_ms: float | None = None) -> int:
        limit = math.inf if horizon_ms is None else horizon_ms / self.bucket_ms
        return sum(c for (b, sc, _, op), c in self.counts.items()
                   if sc == scope and b < limit and (ops is None or op in ops))

    def rows(self):
        for (b, sc, ident, op), c in sorted(self.counts.items()):
            yield (round(b * self.bucket_ms, 3), sc, ident, op, c)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bucket_start_ms", "scope", "id", "op", "count"])
            w.writerows(self.rows())

    @classmethod
    def read_csv(cls, path, bucket_ms: float = 1000.0) -> MetricsLedger:
        led = cls(bucket_ms)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                b = int(round(float(row["bucket_start_ms"]) / bucket_ms))
                led.counts[(b, row["scope"], row["id"], row["op"])] += int(row["count"])
        return led


@dataclass(frozen=True)
class Window:
    start: int
    end: int
    stable: bool


def find_stable_window(series, span: int = 10, tol: float = 0.05, ma: int = 3, min_len: int = 30) -> Window:
    """The window starts where the trailing moving average stays within
    ``tol`` of its level for ``span`` consecutive buckets.  Falls back to the
    final half of the series (``stable=False``)."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n == 0:
        return Window(0, 0, False)
    if n >= min_len:
        csum = np.concatenate([[0.0], np.cumsum(x)])
        idx = np.arange(n)
        lo = np.maximum(idx - ma + 1, 0)
        avg = (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)
        for i in range(ma - 1, n - span + 1):
            seg = avg[i:i + span]
            level = seg.mean()
            if level > 0 and np.all(np.abs(seg - level) <= tol * level):
                return Window(i - (ma - 1), n, True)
            if level == 0 and np.all(seg == 0) and np.all(x[i:] == 0):
                return Window(i - (ma - 1), n, True)
    return Window(n // 2, n, False)


def stable_window(series) -> tuple[int, int]:
    w = find_stable_window(series)
    if not w.stable:
        warnings.warn("series never stabilised; using its final half", RuntimeWarning, stacklevel=2)
    return w.start, w.end


def latency_histogram(latencies) -> dict[str, int]:
    out = {label: 0 for _, _, label in LATENCY_BUCKETS}
    for lat in latencies:
        for lo, hi, label in LATENCY_BUCKETS:
            if lo <= lat < hi:
                out[label] += 1
                break
    return out


# --------------------------------------------------------------------------
# cluster wiring
# --------------------------------------------------------------------------


@dataclass
class Cluster:
    config: ExperimentConfig
    sim: Simulator
    net: Network
    servers: list[StoreNode]
    clients: list[StoreClient]
    monitors: list[MonitorNode]
    metrics: MetricsLedger
    recorder: TraceRecorder | None
    workload: Any
    names: list[str]

    def trace(self) -> ExecutionTrace:
        if self.recorder is None:
            raise RuntimeError("tracing was not enabled")
        eps = None if math.isinf(self.config.eps) else self.config.eps
        return self.recorder.trace(len(self.names), self.names, list(range(len(self.servers))), eps)

    def violations(self) -> ViolationLog:
        merged = ViolationLog()
        for v in sorted((v for m in self.monitors for v in m.engine.log.entries),
                        key=lambda v: (v.detected_at_ms, v.predicate, v.t_violate_ms)):
            merged.append(v)
        return merged


def _topology(cfg: ExperimentConfig, servers, clients, monitors) -> Topology:
    block = dict(cfg.topology)
    regions = block.get("regions") or ["r0"]
    nodes, hosts = {}, {}
    server_regions = block.get("server_regions") or [regions[i % len(regions)] for i in range(len(servers))]
    client_regions = block.get("client_regions") or [regions[i % len(regions)] for i in range(len(clients))]
    if len(server_regions) != len(servers) or len(client_regions) != len(clients):
        raise ConfigError("server_regions / client_regions length mismatch")
    for s, r in zip(servers, server_regions):
        nodes[s] = r
    for c, r in zip(clients, client_regions):
        nodes[c] = r
    for j, m in enumerate(monitors):
        host = servers[j % len(servers)]
        nodes[m] = nodes[host]
        hosts[m] = host
    for n in nodes:
        if nodes[n] not in regions:
            raise ConfigError(f"node {n} placed in unknown region {nodes[n]}")
    try:
        return Topology.from_config(block, nodes, hosts, float(block.get("gamma_shape", 0.8)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_cluster(cfg: ExperimentConfig, monitoring: bool | None = None, workload=None) -> Cluster:
    monitoring = cfg.monitoring if monitoring is None else monitoring
    specs = []
    for path in cfg.predicates:
        with open(path) as fh:
            specs.append(parse_xml(fh.read()))
    if workload is None:
        workload = WORKLOADS[cfg.workload["type"]](cfg, specs)
    specs = specs + [s for s in workload.predicates() if s.name not in {x.name for x in specs}]
    server_names = cfg.servers
    client_names = [f"c{i}" for i in range(cfg.clients)]
    n_mon = cfg.monitor_count or len(server_names)
    monitor_names = [f"m{i}" for i in range(n_mon)] if monitoring else []
    names = server_names + client_names + monitor_names
    n_procs = len(names)
    topo = _topology(cfg, server_names, client_names, monitor_names)
    sim = Simulator()
    net = Network(sim, topo, DelayModel(float(cfg.topology.get("gamma_shape", 0.8))), cfg.seed)
    recorder = TraceRecorder() if cfg.trace else None
    metrics = MetricsLedger(cfg.bucket_ms)
    eps = cfg.eps
    servers = [
        StoreNode(s, i, n_procs, net, recorder, eps, cfg.processing_ms, cfg.detector_ms,
                  monitoring, monitor_names, specs, count=metrics.count)
        for i, s in enumerate(server_names)
    ]
    rc = cfg.replication_config()
    base = len(server_names)
    clients = [StoreClient(c, base + i, n_procs, net, rc, recorder, eps, metrics.count)
               for i, c in enumerate(client_names)]
    subs = workload.subscribers(client_names)
    base += len(client_names)
    monitors = [
        MonitorNode(m, base + j, n_procs, net,
                    MonitorEngine(specs, participants=range(len(server_names)), epsilon=eps),
                    subs, recorder, eps, cfg.gc_ttl_ms)
        for j, m in enumerate(monitor_names)
    ]
    for key, value in workload.preload().items():
        for s in servers:
            s.preload(key, value)
    if cfg.schedule:
        script = cfg.schedule
        if isinstance(script, str):
            with open(script) as fh:
                script = json.load(fh)
        net.inject_schedule(script)
    return Cluster(cfg, sim, net, servers, clients, monitors, metrics, recorder, workload, names)


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------


@dataclass
class RunResult:
    summary: dict
    cluster: Cluster

    @property
    def violations(self) -> ViolationLog:
        return self.cluster.violations()


def _round(obj):
    if isinstance(obj, float):
        return round(obj, 6) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _round(float(obj))
    return obj


def execute(cfg: ExperimentConfig, monitoring: bool | None = None, workload=None) -> RunResult:
    cl = build_cluster(cfg, monitoring, workload)
    sim, wl = cl.sim, cl.workload
    if cfg.duration_ms != 0:
        if hasattr(wl, "coordinator"):
            sim.spawn(wl.coordinator(cl), "coordinator")
        else:
            for i, c in enumerate(cl.clients):
                sim.spawn(wl.client_loop(c, i), c.name)
    if cfg.duration_ms is not None:
        sim.run_until(cfg.duration_ms)
        horizon = float(cfg.duration_ms)
        wl.stopped = True
        sim.run_until()
    else:
        sim.run_until()
        horizon = sim.now
    for s in cl.servers:
        s.flush()
    sim.run_until()
    cl.net.check_schedule()
    return RunResult(summarize(cl, horizon), cl)


def summarize(cl: Cluster, horizon: float) -> dict:
    cfg = cl.config
    rc = cfg.replication_config()
    n_b = int(horizon // cfg.bucket_ms)
    sec = cfg.bucket_ms / 1000.0
    server_series = cl.metrics.series("server", n_b)
    app_series = cl.metrics.series("app", n_b, APP_OPS)
    win = find_stable_window(app_series)

    def rate(series):
        seg = series[win.start:win.end]
        return float(seg.mean() / sec) if len(seg) else 0.0

    viol = cl.violations()
    lat = [v.latency_ms for v in viol.entries]
    engines = [m.engine for m in cl.monitors]
    return _round({
        "label": rc.label,
        "consistency": classify_consistency(rc).value,
        "monitoring": bool(cl.monitors),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "horizon_ms": horizon,
        "sim_end_ms": cl.sim.now,
        "events": cl.sim.events,
        "messages": cl.net.sent,
        "window": {"start_bucket": win.start, "end_bucket": win.end, "stable": win.stable},
        "throughput": {"server": rate(server_series), "app": rate(app_series)},
        "totals": {
            "server_ops": cl.metrics.total("server", horizon_ms=horizon),
            "app_get": cl.metrics.total("app", ("GET",), horizon),
            "app_put": cl.metrics.total("app", ("PUT",), horizon),
            "app_fail": cl.metrics.total("app", ("GET_FAIL", "PUT_FAIL"), horizon),
        },
        "violations": {
            "count": len(viol),
            "predicates": len({v.predicate for v in viol.entries}),
            "latency_histogram": latency_histogram(lat),
            "mean_latency_ms": float(np.mean(lat)) if lat else None,
        },
        "monitor": {
            "candidates": sum(s.candidates_sent for s in cl.servers),
            "ingested": sum(e.ingested for e in engines),
            "retained": sum(e.retained_count() for e in engines),
            "gc_collected": sum(e.collected for e in engines),
        },
        "schedule_overrides": cl.net.override_log,
        "workload": cl.workload.report(cl),
    })


def write_results(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    result.cluster.metrics.write_csv(out / "metrics.csv")
    result.violations.write_jsonl(out / "violations.jsonl")
    if result.cluster.recorder is not None:
        result.cluster.trace().write_jsonl(out / "trace.jsonl")
    return out


def run(cfg: ExperimentConfig, out_dir, monitoring: bool | None = None, repeats: int = 1) -> Path:
    """Run ``repeats`` seeds (``seed``, ``seed+1``, ...).  With more than one
    repeat each run gets a ``seed_<n>`` subdirectory and the top-level
    summary holds the averaged throughputs."""
    out = Path(out_dir)
    if repeats <= 1:
        return write_results(execute(cfg, monitoring), out)
    summaries = []
    for k in range(repeats):
        sub = cfg.replace(seed=cfg.seed + k)
        res = execute(sub, monitoring)
        write_results(res, out / f"seed_{sub.seed}")
        summaries.append(res.summary)
    agg = dict(summaries[0])
    agg["seeds"] = [s["seed"] for s in summaries]
    agg["throughput"] = {
        k: float(np.mean([s["throughput"][k] for s in summaries])) for k in ("server", "app")
    }
    agg["violations"] = {"count": sum(s["violations"]["count"] for s in summaries)}
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w") as fh:
        json.dump(_round(agg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


# --------------------------------------------------------------------------
# comparisons and reports
# --------------------------------------------------------------------------


def _comparable(a: dict, b: dict, ignore: set[str]) -> None:
    ca = {k: v for k, v in a["config"].items() if k not in ignore}
    cb = {k: v for k, v in b["config"].items() if k not in ignore}
    if ca != cb:
        diff = sorted(k for k in set(ca) | set(cb) if ca.get(k) != cb.get(k))
        raise ComparisonError(f"runs differ in {diff}")


def overhead_pct(server_on: float, server_off: float) -> float:
    if server_off <= 0:
        raise ComparisonError("monitor-off throughput must be positive")
    return 100.0 * (server_off - server_on) / server_off


def benefit_pct(app_eventual: float, app_sequential: float) -> float:
    if app_sequential <= 0:
        raise ComparisonError("sequential throughput must be positive")
    return 100.0 * (app_eventual - app_sequential) / app_sequential


def compute_overhead(run_on: dict, run_off: dict) -> float:
    """Server-side throughput loss from monitoring, in percent.  The two
    runs must differ only in the monitoring flag."""
    _comparable(run_on, run_off, {"monitoring"})
    if not run_on["monitoring"] or run_off["monitoring"]:
        raise ComparisonError("first run must have monitors on, second off")
    return overhead_pct(run_on["throughput"]["server"], run_off["throughput"]["server"])


def compute_benefit(run_eventual: dict, run_sequential: dict) -> float:
    """Application throughput gain of the weak configuration, in percent."""
    _comparable(run_eventual, run_sequential, {"monitoring", "replication", "seed", "schedule", "trace", "consistency"})
    return benefit_pct(run_eventual["throughput"]["app"], run_sequential["throughput"]["app"])


def load_summary(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "summary.json"
    with open(p) as fh:
        return json.load(fh)


def load_violations(path) -> list[dict]:
    p = Path(path)
    if p.is_dir():
        p = p / "violations.jsonl"
    if not p.exists():
        return []
    with open(p) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def report(dirs) -> str:
    """CSV tables: per-run throughputs, overhead and benefit pairs, and the
    detection-latency histogram over all runs."""
    runs = [(str(d), load_summary(d)) for d in dirs]
    lines = ["# runs", "dir,label,consistency,monitoring,server_ops_per_s,app_ops_per_s,violations"]
    for d, s in runs:
        lines.append(f"{d},{s['label']},{s['consistency']},{s['monitoring']},"
                     f"{s['throughput']['server']:.2f},{s['throughput']['app']:.2f},{s['violations']['count']}")
    lines += ["", "# overhead", "label,server_on,server_off,overhead_pct"]
    for d_on, on in runs:
        for d_off, off in runs:
            if on["monitoring"] and not off["monitoring"]:
                try:
                    pct = compute_overhead(on, off)
                except ComparisonError:
                    continue
                lines.append(f"{on['label']},{on['throughput']['server']:.2f},{off['throughput']['server']:.2f},{pct:.1f}")
    lines += ["", "# benefit", "eventual,sequential,app_eventual,app_sequential,benefit_pct"]
    for _, ev in runs:
        if ev["consistency"] != "eventual" or not ev["monitoring"]:
            continue
        for _, sq in runs:
            if sq["consistency"] != "sequential" or sq["monitoring"]:
                continue
            try:
                pct = compute_benefit(ev, sq)
            except ComparisonError:
                continue
            lines.append(f"{ev['label']},{sq['label']},{ev['throughput']['app']:.2f},"
                         f"{sq['throughput']['app']:.2f},{pct:.1f}")
    lat = [v["latency_ms"] for d, _ in runs for v in load_violations(d)]
    hist = latency_histogram(lat)
    total = len(lat)
    lines += ["", "# detection latency", "bucket_ms,count,percent"]
    for label, count in hist.items():
        pct = 100.0 * count / total if total else 0.0
        lines.append(f"{label},{count},{pct:.3f}")
    return "\n".join(lines) + "\n"
