import subprocess
import sys
from pathlib import Path

BENCH = Path(__file__).resolve().parent.parent / "benchmarks" / "bench_kernels.py"


def test_benchmark_backends_agree():
    proc = subprocess.run(
        [sys.executable, str(BENCH), "--events", "2000", "--nodes", "1000", "--clocks", "100", "--repeat", "1"],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    rows = [ln.split() for ln in proc.stdout.splitlines()[1:] if ln.strip()]
    assert [r[0] for r in rows] == ["replay_vector_clocks", "strictly_less", "greedy_color"]
    assert all(r[-1] == "True" for r in rows)
