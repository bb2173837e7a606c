from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

from refnet import _accel

SCRIPT = """
import json
import sys
sys.path.insert(0, {tests!r})
from helpers import random_digraph
from refnet import _accel, metrics, motifs, powerlaw
from refnet.graph import approx_diameter, component_sizes
import numpy as np
g = random_digraph(300, 2000, 5)
fit = powerlaw.fit_powerlaw(powerlaw.sample_powerlaw(2.3, 2, 5000, np.random.default_rng(0)))
print(json.dumps({{
    "backend": _accel.backend(),
    "clustering": metrics.clustering(g).global_c,
    "census": motifs.triad_census_exact(g).counts.tolist(),
    "mc": motifs.triad_census_mc(g, 20000, seed=1).tallies.tolist(),
    "components": component_sizes(g).tolist(),
    "diameter": approx_diameter(g, 50, seed=2),
    "alpha": fit.alpha,
    "xmin": fit.xmin,
}}))
"""


def _child(backend):
    env = dict(os.environ, REFNET_BACKEND=backend)
    tests = os.path.dirname(__file__)
    return subprocess.run([sys.executable, "-c", SCRIPT.format(tests=tests)], capture_output=True, text=True, env=env)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="needs numba for the comparison")
def test_env_flag_selects_backend_with_identical_results():
    a, b = _child("numba"), _child("numpy")
    assert a.returncode == 0 and b.returncode == 0, a.stderr + b.stderr
    ra, rb = json.loads(a.stdout), json.loads(b.stdout)
    assert (ra.pop("backend"), rb.pop("backend")) == ("numba", "numpy")
    assert abs(ra.pop("clustering") - rb.pop("clustering")) < 1e-12
    # the bounded alpha optimiser stops within its tolerance on both paths
    assert abs(ra.pop("alpha") - rb.pop("alpha")) < 1e-6
    assert ra == rb


def test_invalid_backend_rejected():
    r = _child("cuda")
    assert r.returncode != 0 and "REFNET_BACKEND" in r.stderr
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")


def test_backend_context_restores():
    before = _accel.backend()
    with _accel.backend_context("numpy"):
        assert not _accel.use_numba()
    assert _accel.backend() == before


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="benchmark compares against numba")
def test_benchmark_script_runs_and_backends_agree():
    bench = os.path.join(os.path.dirname(__file__), os.pardir, "benchmarks", "bench_kernels.py")
    r = subprocess.run([sys.executable, bench, "--scale", "0.05", "--repeat", "1"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    rows = r.stdout.strip().splitlines()[1:]
    assert len(rows) == 6 and all(row.endswith("True") for row in rows)
