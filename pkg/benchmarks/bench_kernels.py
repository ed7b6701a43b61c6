"""Compare the compiled and pure-Python kernel backends.

Times each kernel on a case-1 state, then a short run of full steps with
each backend selected through the environment switch.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--steps 200]
"""

import argparse
import os
import subprocess
import sys
import timeit

from tethersim import kernels, lgvi
from tethersim.scenarios import build_initial_state, params_for, preset

STEP_SCRIPT = """
import time
from tethersim import kernels, lgvi
from tethersim.scenarios import build_initial_state, params_for, preset
sc = preset("case1"); p = params_for(sc)
st = lgvi.Stepper(p, *build_initial_state(sc, p))
t0 = time.perf_counter()
for _ in range({steps}):
    st.advance()
print(kernels.BACKEND, (time.perf_counter() - t0) / {steps})
"""


def kernel_times(repeat: int) -> dict:
    sc = preset("case1")
    p = params_for(sc)
    g, v = build_initial_state(sc, p)
    f = lgvi.velocity_increment(v, p.h)
    kp = kernels.pack_params(p)
    cfg = (g.x, g.R, g.s_p, g.r, g.R_s)
    inc = (f.dx, f.F, f.ds, f.dr, f.F_s)
    out = {}
    for name in ("python", "cython"):
        try:
            mod = kernels.backend_module(name)
        except ImportError:
            continue
        jac = mod.kinetic_jacobian(*cfg, *inc, kp)
        rhs = jac[0]
        calls = {
            "potential": lambda: mod.potential(*cfg, kp),
            "kinetic": lambda: mod.kinetic(*cfg, *inc, kp),
            "kinetic_jacobian": lambda: mod.kinetic_jacobian(*cfg, *inc, kp),
            "solve_bordered": lambda: mod.solve_bordered(*jac[2:], rhs, False),
        }
        out[name] = {k: min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat for k, fn in calls.items()}
    return out


def step_times(steps: int) -> dict:
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, TETHERSIM_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", STEP_SCRIPT.format(steps=steps)], env=env,
                             capture_output=True, text=True, check=True)
        name, t = res.stdout.split()
        out[name] = float(t)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args(argv)
    kt = kernel_times(args.repeat)
    print(f"{'kernel':<18}" + "".join(f"{b:>14}" for b in kt) + "       speedup")
    for k in next(iter(kt.values())):
        row = [kt[b][k] for b in kt]
        speed = f"{row[0] / row[-1]:10.1f}x" if len(row) > 1 else ""
        print(f"{k:<18}" + "".join(f"{1e6 * t:11.1f} us" for t in row) + f"   {speed}")
    st = step_times(args.steps)
    print(f"{'full step':<18}" + "".join(f"{1e3 * st[b]:11.3f} ms" for b in st)
          + (f"   {st['python'] / st['cython']:10.1f}x" if len(st) > 1 else ""))


if __name__ == "__main__":
    main()
