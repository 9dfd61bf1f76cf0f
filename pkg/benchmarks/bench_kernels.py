"""Time the hot kernels compiled with numba and as plain Python.

Each mode runs in a child process because ``PAIRPOTTS_DISABLE_NUMBA`` is read
at import time. Usage: ``python benchmarks/bench_kernels.py [--sizes 4 8]``.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

CHILD = r"""
import json, sys, time
import numpy as np
from pairpotts import _accel, kernels, lattice, mcmc
from pairpotts.model import Params

sizes = json.loads(sys.argv[1])
p = Params(2, 2, 0.5, 0.5)
out = {"numba": _accel.HAVE_NUMBA and not _accel.NUMBA_DISABLED, "results": []}
for n in sizes:
    g = lattice.build_box(n)
    # warm-up compiles (or does nothing in fallback mode)
    mcmc.run_chain(g, p, mcmc.SamplerConfig(sweeps=2, burn_in=0))
    budget = 0.5 if out["numba"] else 2.0
    sweeps = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < budget:
        mcmc.run_chain(g, p, mcmc.SamplerConfig(sweeps=20, burn_in=0, seed=sweeps))
        sweeps += 20
    chain = (time.perf_counter() - t0) / sweeps
    rng = np.random.default_rng(0)
    mask = rng.random(g.n_edges) < 0.5
    kernels.label_components(g.n_vertices, g.ev, mask)
    reps = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < budget / 2:
        kernels.label_components(g.n_vertices, g.ev, mask)
        reps += 1
    lab = (time.perf_counter() - t0) / reps
    out["results"].append({"n": n, "edges": g.n_edges, "sec_per_sweep": chain, "sec_per_labeling": lab})
print(json.dumps(out))
"""


def run(mode: str, sizes: list[int]) -> dict:
    env = dict(os.environ)
    if mode == "python":
        env["PAIRPOTTS_DISABLE_NUMBA"] = "1"
    else:
        env.pop("PAIRPOTTS_DISABLE_NUMBA", None)
    res = subprocess.run(
        [sys.executable, "-c", CHILD, json.dumps(sizes)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[2, 4, 8])
    args = ap.parse_args()
    t0 = time.perf_counter()
    fast = run("numba", args.sizes)
    slow = run("python", args.sizes)
    print(f"{'box':>4} {'edges':>6} {'numba s/sweep':>14} {'python s/sweep':>15} {'speedup':>8} {'label speedup':>14}")
    for a, b in zip(fast["results"], slow["results"]):
        print(
            f"{a['n']:>4} {a['edges']:>6} {a['sec_per_sweep']:>14.3e} {b['sec_per_sweep']:>15.3e}"
            f" {b['sec_per_sweep'] / a['sec_per_sweep']:>8.1f} {b['sec_per_labeling'] / a['sec_per_labeling']:>14.1f}"
        )
    if not fast["numba"]:
        print("numba unavailable: both columns ran the Python fallback")
    print(f"total {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
