"""Dyad census and the 16-class directed triad census (exact and Monte Carlo).

Classes are numbered 1..16 in the usual mutual/asymmetric/null order:

    1 003   2 012   3 102   4 021D  5 021U  6 021C  7 111D  8 111U
    9 030T 10 030C 11 201  12 120D 13 120U 14 120C 15 210  16 300

Edge weights are ignored; only edge presence matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit
from ._parallel import child_rng
from .graph import RefGraph

TRIAD_NAMES = ("003", "012", "102", "021D", "021U", "021C", "111D", "111U",
               "030T", "030C", "201", "120D", "120U", "120C", "210", "300")

# Ordered pairs of a triple (a, b, c) and their bit in the 6-bit triad code.
TRIAD_PAIRS = ((0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1))

# Class id for each 6-bit code, derived once by brute-force canonicalisation.
TRIAD_TABLE = np.array([
    1, 2, 2, 3, 2, 4, 6, 8, 2, 6, 5, 7, 3, 8, 7, 11,
    2, 6, 4, 8, 5, 9, 9, 13, 6, 10, 9, 14, 7, 14, 12, 15,
    2, 5, 6, 7, 6, 9, 10, 14, 4, 9, 9, 12, 8, 13, 14, 15,
    3, 7, 8, 11, 7, 12, 14, 15, 8, 14, 13, 15, 11, 15, 15, 16,
], dtype=np.int64)

EXACT_LIMIT = 10 ** 9
MC_BLOCK = 1 << 20


def triad_code(edge_bits) -> int:
    """Pack six booleans (a->b, b->a, a->c, c->a, b->c, c->b) into a code."""
    bits = list(edge_bits)
    if len(bits) != 6:
        raise ValueError("need six edge indicators")
    return sum(1 << i for i, b in enumerate(bits) if b)


def classify_triad(edge_bits) -> int:
    return int(TRIAD_TABLE[triad_code(edge_bits)])


@dataclass
class TriadCensus:
    counts: np.ndarray  # 16 values: exact counts, or MC estimates scaled to C(n, 3)
    n_samples: int = 0  # 0 means exact
    seed: int | None = None
    tallies: np.ndarray | None = None  # raw MC tallies
    se: np.ndarray | None = None  # per-class SE of the scaled estimates
    n_nodes: int = 0

    @property
    def exact(self) -> bool:
        return self.n_samples == 0

    def proportions(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total else self.counts.astype(float)

    def to_dict(self) -> dict:
        d = {
            "n_nodes": self.n_nodes,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "classes": list(TRIAD_NAMES),
            "counts": [float(c) for c in self.counts],
        }
        if self.tallies is not None:
            d["tallies"] = [int(t) for t in self.tallies]
            d["tally_se"] = [float(s) for s in self.tally_se()]
        if self.se is not None:
            d["se"] = [float(s) for s in self.se]
        return d

    def tally_se(self) -> np.ndarray:
        """Binomial SE of each raw tally."""
        if self.tallies is None:
            return np.zeros(16)
        p = self.tallies / self.n_samples
        return np.sqrt(self.n_samples * p * (1 - p))


def dyad_census(graph: RefGraph) -> tuple[int, int, int]:
    """(null, asymmetric, mutual) counts over unordered node pairs."""
    s, d, _ = graph.edges()
    rev = graph.has_edges(d, s)
    mutual = int(rev.sum()) // 2
    asym = graph.edge_count - 2 * mutual
    n = graph.node_count
    return n * (n - 1) // 2 - mutual - asym, asym, mutual


# ---------------------------------------------------------------------- exact census


@njit
def _has(ptr, idx, u, v):
    lo = ptr[u]
    hi = ptr[u + 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        x = idx[mid]
        if x < v:
            lo = mid + 1
        elif x > v:
            hi = mid
        else:
            return True
    return False


@njit
def _code(ptr, idx, a, b, c):
    code = 0
    if _has(ptr, idx, a, b):
        code |= 1
    if _has(ptr, idx, b, a):
        code |= 2
    if _has(ptr, idx, a, c):
        code |= 4
    if _has(ptr, idx, c, a):
        code |= 8
    if _has(ptr, idx, b, c):
        code |= 16
    if _has(ptr, idx, c, b):
        code |= 32
    return code


@njit
def _nb_census(n, optr, oidx, uptr, uidx, table):
    """Batagelj-Mrvar census; class 1 is left for the caller."""
    census = np.zeros(16, np.int64)
    mark = np.full(n, -1, np.int64)
    buf = np.empty(n, np.int64)
    for v in range(n):
        for k in range(uptr[v], uptr[v + 1]):
            u = uidx[k]
            if u <= v:
                continue
            # S = N(u) | N(v) minus {u, v}
            m = 0
            for j in range(uptr[v], uptr[v + 1]):
                w = uidx[j]
                if w != u and mark[w] != k:
                    mark[w] = k
                    buf[m] = w
                    m += 1
            for j in range(uptr[u], uptr[u + 1]):
                w = uidx[j]
                if w != v and mark[w] != k:
                    mark[w] = k
                    buf[m] = w
                    m += 1
            # triads (v, u, w) with w unconnected to both
            dyad = 3 if (_has(optr, oidx, v, u) and _has(optr, oidx, u, v)) else 2
            census[dyad - 1] += n - m - 2
            for t in range(m):
                w = buf[t]
                if u < w or (v < w and w < u and not _has(uptr, uidx, v, w)):
                    census[table[_code(optr, oidx, v, u, w)] - 1] += 1
    return census


def _kernel(fn):
    return fn if _accel.use_numba() else getattr(fn, "py_func", fn)


def triad_census_exact(graph: RefGraph) -> TriadCensus:
    n = graph.node_count
    total = math.comb(n, 3)
    if total > EXACT_LIMIT:
        raise ValueError(f"exact census over {total} triples exceeds the {EXACT_LIMIT} guard; use Monte Carlo")
    uptr, uidx = graph.undirected
    census = _kernel(_nb_census)(n, graph.out_ptr, graph.out_idx, uptr, uidx, TRIAD_TABLE)
    census[0] = total - census[1:].sum()
    return TriadCensus(counts=census.astype(np.float64), n_nodes=n)


# ---------------------------------------------------------------------- Monte Carlo


def _draw_triples(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform ordered triples of distinct nodes (rejection of collisions)."""
    t = rng.integers(0, n, size=(size, 3), dtype=np.int64)
    while True:
        bad = (t[:, 0] == t[:, 1]) | (t[:, 0] == t[:, 2]) | (t[:, 1] == t[:, 2])
        nbad = int(bad.sum())
        if not nbad:
            return t
        t[bad] = rng.integers(0, n, size=(nbad, 3), dtype=np.int64)


@njit
def _nb_classify(optr, oidx, triples, table):
    out = np.zeros(16, np.int64)
    for i in range(triples.shape[0]):
        c = _code(optr, oidx, triples[i, 0], triples[i, 1], triples[i, 2])
        out[table[c] - 1] += 1
    return out


def _np_classify(graph: RefGraph, triples: np.ndarray) -> np.ndarray:
    code = np.zeros(len(triples), dtype=np.int64)
    for bit, (i, j) in enumerate(TRIAD_PAIRS):
        code |= graph.has_edges(triples[:, i], triples[:, j]).astype(np.int64) << bit
    return np.bincount(TRIAD_TABLE[code] - 1, minlength=16)


def triad_census_mc(graph: RefGraph, n_samples: int, seed: int = 0, block: int = MC_BLOCK) -> TriadCensus:
    """Tally the classes of ``n_samples`` uniformly drawn node triples.

    Block b uses its own stream derived from (seed, b), so tallies do not
    depend on how blocks are scheduled.
    """
    n = graph.node_count
    n_samples = int(n_samples)
    if n < 3:
        raise ValueError("triad census needs at least 3 nodes")
    if n_samples < 10 ** 4:
        raise ValueError("Monte Carlo census needs at least 10^4 samples")
    tallies = np.zeros(16, dtype=np.int64)
    done = 0
    b = 0
    while done < n_samples:
        size = min(block, n_samples - done)
        triples = _draw_triples(n, size, child_rng(seed, b))
        if _accel.use_numba():
            tallies += _nb_classify(graph.out_ptr, graph.out_idx, triples, TRIAD_TABLE)
        else:
            tallies += _np_classify(graph, triples)
        done += size
        b += 1
    total = math.comb(n, 3)
    p = tallies / n_samples
    return TriadCensus(
        counts=p * total,
        n_samples=n_samples,
        seed=int(seed),
        tallies=tallies,
        se=np.sqrt(p * (1 - p) / n_samples) * total,
        n_nodes=n,
    )


def triad_census(graph: RefGraph, n_samples: int | None = None, seed: int = 0) -> TriadCensus:
    """Exact census when feasible and no sample size is requested, else Monte Carlo."""
    if n_samples is None and math.comb(graph.node_count, 3) <= EXACT_LIMIT:
        return triad_census_exact(graph)
    return triad_census_mc(graph, n_samples or 10 ** 6, seed)
