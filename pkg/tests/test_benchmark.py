import importlib.util
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


def test_benchmark_times_every_kernel_on_each_backend():
    spec = importlib.util.spec_from_file_location("bench_kernels", BENCH)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    times = bench.kernel_times(repeat=2)
    assert "python" in times
    for per_kernel in times.values():
        assert set(per_kernel) == {"potential", "kinetic", "kinetic_jacobian", "solve_bordered"}
        assert all(t > 0.0 for t in per_kernel.values())
