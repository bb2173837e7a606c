"""Erdos-Renyi and Watts-Strogatz generators and the small-world comparison.

Generated graphs are undirected, stored as mutual directed edges with
``directed=False`` so the metric functions apply unchanged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .graph import RefGraph, approx_diameter, induced_subgraph, weak_components
from .metrics import clustering, mean_degree


def _undirected(n: int, i: np.ndarray, j: np.ndarray) -> RefGraph:
    return RefGraph.from_edges(n, np.concatenate([i, j]), np.concatenate([j, i]), directed=False)


def _pair_from_index(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of k = j (j - 1) / 2 + i over pairs i < j."""
    j = np.floor((1 + np.sqrt(1 + 8 * k.astype(np.float64))) / 2).astype(np.int64)
    # correct float rounding at triangular-number boundaries
    j -= (j * (j - 1) // 2) > k
    j += ((j + 1) * j // 2) <= k
    i = k - j * (j - 1) // 2
    return i, j


def generate_er(n: int, p: float, seed: int = 0) -> RefGraph:
    """G(n, p) by geometric skipping over the C(n, 2) pair indices."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    total = n * (n - 1) // 2
    if p == 0:
        return RefGraph.from_edges(n, [], [], directed=False)
    rng = np.random.default_rng(seed)
    chunks = []
    pos = -1
    batch = max(1024, int(total * p * 1.05) + 64)
    while pos < total:
        gaps = rng.geometric(p, size=batch)
        idx = pos + np.cumsum(gaps)
        chunks.append(idx[idx < total])
        pos = int(idx[-1])
        batch = max(1024, batch // 4)
    k = np.concatenate(chunks) if chunks else np.zeros(0, np.int64)
    i, j = _pair_from_index(k)
    return _undirected(n, i, j)


def generate_ws(n: int, k: int, beta: float, seed: int = 0) -> RefGraph:
    """Ring lattice of even degree k with each lattice edge rewired w.p. beta.

    Lattice edges are visited by offset, then by node; a rewired edge keeps
    its first endpoint and moves the second to a uniformly chosen node that
    creates neither a self-loop nor a duplicate edge.
    """
    if k % 2 or k < 2 or k >= n:
        raise ValueError("k must be even with 2 <= k < n")
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    adj = [set() for _ in range(n)]
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    if beta > 0:
        for j in range(1, k // 2 + 1):
            for u in range(n):
                v = (u + j) % n
                if rng.random() >= beta or v not in adj[u] or len(adj[u]) >= n - 1:
                    continue
                w = int(rng.integers(n))
                while w == u or w in adj[u]:
                    w = int(rng.integers(n))
                adj[u].discard(v)
                adj[v].discard(u)
                adj[u].add(w)
                adj[w].add(u)
    src = np.fromiter((u for u in range(n) for v in adj[u] if u < v), dtype=np.int64)
    dst = np.fromiter((v for u in range(n) for v in adj[u] if u < v), dtype=np.int64)
    return _undirected(n, src, dst)


def ring_lattice_clustering(k: int) -> float:
    return 3 * (k - 2) / (4 * (k - 1))


@dataclass
class SmallWorldVerdict:
    local_c: float
    er_expected: float
    clustering_ratio: float
    diameter_bound: int
    er_path_scale: float
    is_small_world: bool
    on_dominant_component: bool
    dominant_fraction: float
    ratio_threshold: float
    path_factor: float

    def to_dict(self) -> dict:
        return asdict(self)


def small_world_test(graph: RefGraph, ratio_threshold: float = 10.0, path_factor: float = 4.0,
                     sample_size: int = 64, seed: int = 0) -> SmallWorldVerdict:
    """Clustering far above the ER density and a diameter within
    ``path_factor`` times ln(n) / ln(mu).

    If the largest weak component holds under 90% of nodes the verdict is
    computed on that component and flagged.
    """
    if graph.node_count == 0:
        raise ValueError("small-world test on an empty graph")
    comps = weak_components(graph)
    frac = len(comps[0]) / graph.node_count
    target = graph
    on_dom = frac < 0.9
    if on_dom:
        target = induced_subgraph(graph, comps[0])
    cl = clustering(target)
    n = target.node_count
    mu = mean_degree(target)
    ratio = cl.local_c / cl.er_expected if cl.er_expected > 0 and not math.isnan(cl.local_c) else float("nan")
    scale = math.log(n) / math.log(mu) if mu > 1 and n > 1 else float("inf")
    diam = approx_diameter(target, sample_size=sample_size, seed=seed)
    verdict = bool(ratio >= ratio_threshold and diam <= path_factor * scale)
    return SmallWorldVerdict(
        local_c=cl.local_c,
        er_expected=cl.er_expected,
        clustering_ratio=ratio,
        diameter_bound=int(diam),
        er_path_scale=scale,
        is_small_world=verdict,
        on_dominant_component=on_dom,
        dominant_fraction=frac,
        ratio_threshold=ratio_threshold,
        path_factor=path_factor,
    )
