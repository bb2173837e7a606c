"""Time the hot kernels under both backends and check they agree.

    python benchmarks/bench_kernels.py [--scale 1.0] [--repeat 3]

Each kernel is warmed up once per backend (so numba compilation is not timed)
and then timed as the best of ``--repeat`` runs.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from refnet import _accel, metrics, motifs
from refnet import powerlaw as pl
from refnet.coreperiphery import CpConfig, cp_scores
from refnet.graph import approx_diameter, component_sizes
from refnet.nullmodels import generate_er, generate_ws


@dataclass
class Case:
    name: str
    run: Callable[[], object]
    # the numpy path runs the kernels as plain Python loops for some cases;
    # those get a smaller input so the benchmark finishes
    python_loops: bool = False


def _cases(scale: float) -> list[Case]:
    n = int(20_000 * scale)
    er = generate_er(n, 10 / n, seed=1)
    ws = generate_ws(n, 10, 0.05, seed=1)
    small = generate_ws(max(int(300 * scale), 30), 6, 0.1, seed=2)
    x = pl.sample_powerlaw(2.3, 3, int(200_000 * scale), np.random.default_rng(0))
    return [
        Case("triangles", lambda: metrics.node_triangles(ws)),
        Case("triad census (MC 1e6)", lambda: motifs.triad_census_mc(er, 1_000_000, seed=0).tallies),
        Case("powerlaw scan", lambda: pl.fit_powerlaw(x).alpha),
        Case("components", lambda: component_sizes(er)),
        Case("diameter (64 BFS)", lambda: approx_diameter(er, 64, seed=0)),
        Case("cp anneal", lambda: cp_scores(small, CpConfig(seed=0, iterations_per_node=200)).cp_score,
             python_loops=True),
    ]


def _best_of(fn, repeat: int) -> tuple[float, object]:
    out = fn()  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        return abs(float(a) - float(b)) < 1e-6
    return bool(np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=1e-9))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="input size multiplier")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy path can run")
        return 1
    print(f"{'kernel':<24}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  agree")
    for case in _cases(args.scale):
        with _accel.backend_context("numba"):
            t_nb, r_nb = _best_of(case.run, args.repeat)
        with _accel.backend_context("numpy"):
            t_np, r_np = _best_of(case.run, 1 if case.python_loops else args.repeat)
        print(f"{case.name:<24}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x  {_same(r_nb, r_np)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
