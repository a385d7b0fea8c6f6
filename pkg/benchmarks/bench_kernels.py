"""Time the numba kernels against their numpy fallbacks.

Each backend runs in its own interpreter because ``OPTIKV_DISABLE_JIT`` is
read at import time.  Both children build identical seeded inputs, so the
output digests must match; the parent prints one row per kernel.

    python benchmarks/bench_kernels.py [--events N] [--clocks N] [--nodes N] [--repeat K]
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def _inputs(args):
    rng = np.random.default_rng(7)
    n_procs = 12
    proc = rng.integers(0, n_procs, size=args.events).astype(np.int64)
    send_of = np.full(args.events, -1, dtype=np.int64)
    for i in np.flatnonzero(rng.random(args.events) < 0.3):
        if i > 0:
            send_of[i] = rng.integers(0, i)
    clocks = np.sort(rng.integers(0, 10_000, size=(args.clocks, n_procs)), axis=0).astype(np.int64)

    from optikv.workloads.graph import generate_powerlaw_graph

    g = generate_powerlaw_graph(args.nodes, seed=3)
    indptr, indices = g.csr()
    order = np.argsort(-g.degree(), kind="stable").astype(np.int64)
    return proc, send_of, n_procs, clocks, indptr, indices, order


def _child(args) -> None:
    from optikv import _accel

    proc, send_of, n_procs, clocks, indptr, indices, order = _inputs(args)
    cases = {
        "replay_vector_clocks": lambda: _accel.replay_vector_clocks(proc, send_of, n_procs),
        "strictly_less": lambda: _accel.strictly_less(clocks, clocks),
        "greedy_color": lambda: _accel.greedy_color(
            indptr, indices, order, np.full(len(indptr) - 1, -1, dtype=np.int64)),
    }
    out = {"backend": _accel.backend(), "kernels": {}}
    for name, fn in cases.items():
        result = fn()  # warm-up, includes compilation on the jit path
        best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        digest = hashlib.sha256(np.ascontiguousarray(result).tobytes()).hexdigest()[:16]
        out["kernels"][name] = {"seconds": best, "digest": digest}
    print(json.dumps(out))


def _spawn(args, disable_jit: bool) -> dict:
    env = dict(os.environ, OPTIKV_DISABLE_JIT="1" if disable_jit else "0")
    cmd = [sys.executable, __file__, "--child",
           "--events", str(args.events), "--clocks", str(args.clocks),
           "--nodes", str(args.nodes), "--repeat", str(args.repeat)]
    done = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(done.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--events", type=int, default=200_000)
    p.add_argument("--clocks", type=int, default=2_000)
    p.add_argument("--nodes", type=int, default=50_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.child:
        _child(args)
        return 0

    jit = _spawn(args, disable_jit=False)
    ref = _spawn(args, disable_jit=True)
    print(f"{'kernel':<22} {jit['backend']:>10} {ref['backend']:>10} {'speedup':>8}  match")
    ok = True
    for name, a in jit["kernels"].items():
        b = ref["kernels"][name]
        same = a["digest"] == b["digest"]
        ok &= same
        print(f"{name:<22} {a['seconds']:>9.4f}s {b['seconds']:>9.4f}s {b['seconds'] / a['seconds']:>7.1f}x  {same}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
