"""Command-line entry point: ``optikv run|report|oracle-check|gen-graph``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ConfigError, ExperimentConfig, report, run
from .oracle import TraceError, TraceTooLarge, ExecutionTrace, oracle_detect
from .predicate import PredicateError, parse_xml
from .workloads.graph import GenerationError, generate_powerlaw_graph, write_edge_list

log = logging.getLogger("optikv")


def _cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.trace:
            changes["trace"] = True
        if changes:
            cfg = cfg.replace(**changes)
        cfg.validate()
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"optikv: invalid config: {exc}", file=sys.stderr)
        return 2
    monitoring = None if args.monitors is None else args.monitors == "on"
    out = args.out or f"results/seed_{cfg.seed}"
    try:
        path = run(cfg, out, monitoring=monitoring, repeats=args.repeats)
    except ConfigError as exc:
        print(f"optikv: invalid config: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


def _cmd_report(args) -> int:
    try:
        sys.stdout.write(report(args.dirs))
    except (OSError, ValueError) as exc:
        print(f"optikv: {exc}", file=sys.stderr)
        return 2
    return 0


def _cmd_oracle_check(args) -> int:
    try:
        trace = ExecutionTrace.read_jsonl(args.trace)
        spec = parse_xml(Path(args.predicate).read_text(), name=Path(args.predicate).stem)
        found = oracle_detect(trace, spec)
    except (OSError, TraceError, PredicateError) as exc:
        print(f"optikv: {exc}", file=sys.stderr)
        return 2
    except TraceTooLarge as exc:
        print(f"optikv: {exc}", file=sys.stderr)
        return 3
    out = {"pred": spec.name, "violation": found is not None}
    if found is not None:
        out["t_violate_ms"] = found.time
        out["cut"] = [
            {"server": st.server, "state_index": st.index, "start": st.start_time, "state": st.values}
            for st in found.cut
        ]
    print(json.dumps(out, sort_keys=True))
    return 1 if found is not None else 0


def _cmd_gen_graph(args) -> int:
    try:
        g = generate_powerlaw_graph(args.nodes, args.edges, seed=args.seed)
    except (GenerationError, ValueError) as exc:
        print(f"optikv: {exc}", file=sys.stderr)
        return 2
    write_edge_list(g, args.out)
    print(f"{args.out}: {g.n} nodes, {len(g.edges)} edges")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="optikv", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one simulated experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--monitors", choices=("on", "off"))
    r.add_argument("--trace", action="store_true", help="record trace.jsonl for oracle checks")
    r.add_argument("--repeats", type=int, default=1)
    r.set_defaults(func=_cmd_run)

    rp = sub.add_parser("report", help="tabulate result directories as CSV")
    rp.add_argument("dirs", nargs="+")
    rp.set_defaults(func=_cmd_report)

    oc = sub.add_parser("oracle-check", help="search a trace for a violating consistent cut")
    oc.add_argument("--trace", required=True)
    oc.add_argument("--predicate", required=True)
    oc.set_defaults(func=_cmd_oracle_check)

    gg = sub.add_parser("gen-graph", help="write a power-law edge list")
    gg.add_argument("--nodes", type=int, required=True)
    gg.add_argument("--edges", type=int)
    gg.add_argument("--seed", type=int, default=0)
    gg.add_argument("--out", required=True)
    gg.set_defaults(func=_cmd_gen_graph)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
