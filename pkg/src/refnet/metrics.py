"""Descriptive network statistics: degrees, Gini, clustering, assortativity,
self-degree correlation and reciprocity.

Pearson-based statistics return ``nan`` when a margin has zero variance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from . import _accel
from ._accel import njit
from .graph import RefGraph


def mean_degree(graph: RefGraph) -> float:
    """Mean undirected-equivalent degree: 2E/n for directed graphs, E/n for
    graphs from the undirected generators (each edge stored both ways)."""
    if graph.node_count == 0:
        return 0.0
    e = graph.edge_count if graph.directed else graph.edge_count / 2
    return 2.0 * e / graph.node_count


def er_density(graph: RefGraph) -> float:
    n = graph.node_count
    return mean_degree(graph) / (n - 1) if n > 1 else float("nan")


@dataclass
class DegreeStats:
    in_degrees: np.ndarray
    out_degrees: np.ndarray
    weighted: bool
    mean_degree: float

    def summary(self) -> dict:
        return {
            "weighted": self.weighted,
            "mean_degree": self.mean_degree,
            "max_in": int(self.in_degrees.max(initial=0)),
            "max_out": int(self.out_degrees.max(initial=0)),
            "total": int(self.in_degrees.sum()),
        }


def degree_stats(graph: RefGraph, weighted: bool = False) -> DegreeStats:
    return DegreeStats(graph.in_degree(weighted), graph.out_degree(weighted), weighted, mean_degree(graph))


def gini(values) -> float:
    """Population Gini, sum_ij |x_i - x_j| / (2 n^2 mean)."""
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("gini of an empty vector")
    if (x < 0).any() or not np.isfinite(x).all():
        raise ValueError("gini needs finite non-negative values")
    total = x.sum()
    if total == 0:
        raise ValueError("gini of an all-zero vector is undefined")
    n = x.size
    i = np.arange(1, n + 1, dtype=np.float64)
    g = float(np.dot(2 * i - n - 1, x) / (n * total))
    return min(max(g, 0.0), 1.0)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return float("nan")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx <= 0 or syy <= 0:
        return float("nan")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(max(r, -1.0), 1.0)


# ---------------------------------------------------------------------- clustering


@njit
def _nb_node_triangles(ptr, idx):
    # orient each edge towards the higher (degree, id) endpoint, then intersect
    # out-lists; every triangle is found once from its lowest-ranked node
    n = len(ptr) - 1
    deg = ptr[1:] - ptr[:-1]
    optr = np.zeros(n + 1, np.int64)
    for u in range(n):
        c = 0
        for k in range(ptr[u], ptr[u + 1]):
            v = idx[k]
            if deg[v] > deg[u] or (deg[v] == deg[u] and v > u):
                c += 1
        optr[u + 1] = optr[u] + c
    oidx = np.empty(optr[n], np.int64)
    for u in range(n):
        p = optr[u]
        for k in range(ptr[u], ptr[u + 1]):
            v = idx[k]
            if deg[v] > deg[u] or (deg[v] == deg[u] and v > u):
                oidx[p] = v
                p += 1
    tri = np.zeros(n, np.int64)
    mark = np.full(n, -1, np.int64)
    for u in range(n):
        for k in range(optr[u], optr[u + 1]):
            mark[oidx[k]] = u
        for k in range(optr[u], optr[u + 1]):
            v = oidx[k]
            for j in range(optr[v], optr[v + 1]):
                w = oidx[j]
                if mark[w] == u:
                    tri[u] += 1
                    tri[v] += 1
                    tri[w] += 1
    return tri


def node_triangles(graph: RefGraph) -> np.ndarray:
    """Triangles through each node of the undirected shadow graph."""
    ptr, idx = graph.undirected
    if _accel.use_numba():
        return _nb_node_triangles(ptr, idx)
    n = graph.node_count
    a = sp.csr_matrix((np.ones(len(idx), dtype=np.int64), idx, ptr), shape=(n, n))
    return np.asarray((a @ a).multiply(a).sum(axis=1)).ravel().astype(np.int64) // 2


@dataclass
class ClusteringReport:
    global_c: float
    local_c: float  # nan when no node has degree >= 2
    er_expected: float
    triangles: int
    connected_triples: int
    n_local: int

    def to_dict(self) -> dict:
        return asdict(self)


def clustering(graph: RefGraph) -> ClusteringReport:
    tri = node_triangles(graph)
    deg = graph.undirected_degree().astype(np.int64)
    pairs = deg * (deg - 1) // 2
    triples = int(pairs.sum())
    global_c = float(tri.sum() / triples) if triples else float("nan")
    ok = deg >= 2
    local_c = float(np.mean(tri[ok] / pairs[ok])) if ok.any() else float("nan")
    return ClusteringReport(global_c, local_c, er_density(graph), int(tri.sum() // 3), triples, int(ok.sum()))


def er_clustering_se(n: int, p: float) -> float:
    """Standard error of the global clustering coefficient of G(n, p).

    Orthogonal (Hoeffding) expansion of 3T/P in the centred edge indicators:
    single-edge, two-path and triangle terms contribute
    ((n-2) p q / 3 + 4 q^2 / 3 + q^3 / p) / C(n, 3) to the variance, q = 1 - p.
    """
    if n < 3 or not 0 < p <= 1:
        return 0.0
    q = 1.0 - p
    n3 = n * (n - 1) * (n - 2) / 6
    return math.sqrt(((n - 2) * p * q / 3 + 4 * q * q / 3 + q ** 3 / p) / n3)


# ---------------------------------------------------------------------- assortativity


@dataclass
class AssortativityReport:
    r_in_in: float
    r_out_out: float
    r_in_out: float
    r_out_in: float
    n_edges: int
    fisher_se: float

    def fisher_z(self, r: float) -> float:
        """0.5 log((1 - r) / (1 + r)) divided by its asymptotic SE."""
        if not -1 < r < 1 or not self.fisher_se > 0:
            return float("nan")
        return 0.5 * math.log((1 - r) / (1 + r)) / self.fisher_se

    def to_dict(self) -> dict:
        return asdict(self)


def _edge_corr(graph: RefGraph, a: str, b: str, weighted: bool) -> float:
    deg = {"in": graph.in_degree(weighted), "out": graph.out_degree(weighted)}
    s, d, _ = graph.edges()
    return pearson(deg[a][s], deg[b][d])


def assortativity(graph: RefGraph, weighted: bool = False) -> AssortativityReport:
    """Pearson correlation, over directed edges u->v, of deg_a(u) with deg_b(v)."""
    m = graph.edge_count
    se = (m - 3) ** -0.5 if m > 3 else float("nan")
    return AssortativityReport(
        r_in_in=_edge_corr(graph, "in", "in", weighted),
        r_out_out=_edge_corr(graph, "out", "out", weighted),
        r_in_out=_edge_corr(graph, "in", "out", weighted),
        r_out_in=_edge_corr(graph, "out", "in", weighted),
        n_edges=m,
        fisher_se=se,
    )


def undirected_assortativity(graph: RefGraph) -> float:
    """Degree assortativity of the undirected shadow graph (each edge both ways)."""
    ptr, idx = graph.undirected
    deg = np.diff(ptr)
    src = np.repeat(np.arange(graph.node_count), deg)
    return pearson(deg[src], deg[idx])


def self_degree_correlation(graph: RefGraph, weighted: bool = False) -> float:
    return pearson(graph.in_degree(weighted), graph.out_degree(weighted))


# ---------------------------------------------------------------------- reciprocity


@dataclass
class ReciprocityReport:
    corr: float
    r_squared: float
    bidirectional_fraction: float
    mutual_dyads: int
    asymmetric_dyads: int

    def to_dict(self) -> dict:
        return asdict(self)


def mutual_weights(graph: RefGraph) -> tuple[np.ndarray, np.ndarray]:
    """(w_uv, w_vu) for each mutual pair u < v."""
    s, d, w = graph.edges()
    fwd = s < d
    keys = d[fwd] * graph.node_count + s[fwd]
    pos = np.searchsorted(graph.edge_keys, keys)
    pos = np.minimum(pos, max(graph.edge_count - 1, 0))
    hit = graph.edge_keys[pos] == keys if graph.edge_count else np.zeros(0, bool)
    return w[fwd][hit], graph.out_w[pos[hit]]


def reciprocity(graph: RefGraph) -> ReciprocityReport:
    """Correlation of w_uv with w_vu over mutual pairs (symmetrised so each pair
    contributes both orderings) and the mutual share of connected dyads."""
    a, b = mutual_weights(graph)
    mutual = len(a)
    asym = graph.edge_count - 2 * mutual
    corr = pearson(np.concatenate([a, b]), np.concatenate([b, a])) if mutual else float("nan")
    conn = mutual + asym
    return ReciprocityReport(
        corr=corr,
        r_squared=corr * corr if not math.isnan(corr) else float("nan"),
        bidirectional_fraction=mutual / conn if conn else float("nan"),
        mutual_dyads=mutual,
        asymmetric_dyads=asym,
    )


def summary(graph: RefGraph) -> dict:
    """All descriptive statistics as a flat JSON-ready dict."""
    cl = clustering(graph)
    asr = assortativity(graph)
    rec = reciprocity(graph)
    return {
        "node_count": graph.node_count,
        "edge_count": graph.edge_count,
        "mean_degree": mean_degree(graph),
        "er_expected_clustering": cl.er_expected,
        "global_clustering": cl.global_c,
        "local_clustering": cl.local_c,
        "triangles": cl.triangles,
        "assortativity_undirected": undirected_assortativity(graph),
        "assortativity_in_in": asr.r_in_in,
        "assortativity_out_out": asr.r_out_out,
        "assortativity_in_out": asr.r_in_out,
        "assortativity_out_in": asr.r_out_in,
        "assortativity_fisher_se": asr.fisher_se,
        "self_degree_correlation": self_degree_correlation(graph),
        "reciprocity_corr": rec.corr,
        "reciprocity_r_squared": rec.r_squared,
        "bidirectional_fraction": rec.bidirectional_fraction,
        "mutual_dyads": rec.mutual_dyads,
        "asymmetric_dyads": rec.asymmetric_dyads,
    }
