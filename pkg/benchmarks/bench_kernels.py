"""Time the numba and numpy kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--size 256x192] [--repeat 20]

Also times one full refinement of the canonical fixture under each backend
(the backend is chosen at import time, so that part runs in subprocesses).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mcdp import kernels

REFINE_SNIPPET = """
import time
from mcdp.refine import RefineConfig, refine
from mcdp.synth import canonical_scene
scene = canonical_scene(0)[0]
refine(scene, RefineConfig(m=1, inner_steps=1))  # warm-up and JIT
t = time.perf_counter()
refine(scene, RefineConfig(m=2))
print(time.perf_counter() - t)
"""


def _inputs(h, w, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.uniform(-5, w + 5, (h, w))
    v = rng.uniform(-5, h + 5, (h, w))
    z = rng.uniform(1, 50, (h, w))
    valid = rng.random((h, w)) < 0.9
    img = rng.random((h, w))
    return u, v, z, valid, img


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(h, w, repeat):
    u, v, z, valid, img = _inputs(h, w)
    su, sv = np.clip(u, 0, w - 1), np.clip(v, 0, h - 1)
    cases = {
        "splat": (lambda f: f(u, v, z, valid, h, w), kernels._splat_np, kernels._splat_nb),
        "splat zmin": (lambda f: f(u, v, z, valid, h, w, True), kernels._splat_np, kernels._splat_nb),
        "box_sum3": (lambda f: f(img, valid), kernels._box_sum3_np, kernels._box_sum3_nb),
        "bilinear": (lambda f: f(img, su, sv), kernels._bilinear_np, kernels._bilinear_nb),
    }
    print(f"kernels on {w}x{h}, best of {repeat}")
    print(f"{'kernel':<12}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (call, f_np, f_nb) in cases.items():
        call(f_nb)  # compile
        t_np = _best(lambda: call(f_np), repeat)
        t_nb = _best(lambda: call(f_nb), repeat)
        print(f"{name:<12}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x")


def bench_refine():
    print("\nrefine -m 2 on the canonical 128x96 fixture")
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, MCDP_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", REFINE_SNIPPET], env=env,
                             capture_output=True, text=True, check=True)
        print(f"  {label:<6}{float(out.stdout):.3f} s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", default="256x192", help="WIDTHxHEIGHT")
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--no-refine", action="store_true")
    args = parser.parse_args()
    if not kernels.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    w, h = (int(x) for x in args.size.lower().split("x"))
    bench(h, w, args.repeat)
    if not args.no_refine:
        bench_refine()


if __name__ == "__main__":
    main()
