"""Small graph builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from refnet.graph import PhysicianRegistry, RefGraph
from refnet.states import STATE_INDEX


def random_digraph(n: int, m: int, seed: int = 0, max_w: int = 20, mutual: float = 0.3) -> RefGraph:
    """About ``m`` directed edges, a share of them reciprocated, weights 1..max_w."""
    rng = np.random.default_rng(seed)
    s = rng.integers(0, n, m)
    d = rng.integers(0, n, m)
    back = rng.random(m) < mutual
    src = np.concatenate([s, d[back]])
    dst = np.concatenate([d, s[back]])
    w = rng.integers(1, max_w + 1, len(src))
    keep = src != dst
    return RefGraph.from_edges(n, src[keep], dst[keep], w[keep])


def graph_from(n: int, edges, weights=None) -> RefGraph:
    edges = list(edges)
    s = [u for u, _ in edges]
    d = [v for _, v in edges]
    return RefGraph.from_edges(n, s, d, weights)


def undirected(n: int, pairs) -> RefGraph:
    pairs = list(pairs)
    s = [u for u, v in pairs] + [v for u, v in pairs]
    d = [v for u, v in pairs] + [u for u, v in pairs]
    return RefGraph.from_edges(n, s, d, directed=False)


def registry(states, base: int = 1_000_000_000) -> PhysicianRegistry:
    """Registry with NPIs base, base+1, ... and the given state codes (None = unlabeled)."""
    npis = np.arange(base, base + len(states), dtype=np.int64)
    lab = np.array([-1 if s is None else STATE_INDEX[s] for s in states], dtype=np.int16)
    return PhysicianRegistry(npis, lab)


def planted_core(n_core: int, n_periph: int, p_core: float = 1.0, links: int = 2, seed: int = 0) -> RefGraph:
    """Dense core; each peripheral node attaches only to ``links`` core nodes."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_core):
        for j in range(i + 1, n_core):
            if rng.random() < p_core:
                pairs.append((i, j))
    for p in range(n_core, n_core + n_periph):
        for c in rng.choice(n_core, size=links, replace=False):
            pairs.append((p, int(c)))
    return undirected(n_core + n_periph, pairs)
