"""Immutable directed weighted referral graphs in dual CSR form.

Nodes are dense indices ``0..n-1``; ``PhysicianRegistry`` maps them back to
NPIs and carries the state label of each physician.
"""

from __future__ import annotations

import io
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from . import _accel
from ._accel import njit
from .ingest import RawReferralRecord, ReferralChunk, ReferralStream, NpiStateRecord, NpiStateTable, format_npi
from .states import N_STATES, NO_STATE, STATE_CODES, STATE_INDEX

log = logging.getLogger(__name__)


def _frozen(a, dtype) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _csr_ptr(rows: np.ndarray, n: int) -> np.ndarray:
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=ptr[1:])
    return ptr


class RefGraph:
    """Directed weighted graph with out- and in-adjacency in CSR layout.

    Neighbour lists are sorted by node id, parallel edges are merged by summing
    weights, and self-loops are not representable. ``directed=False`` marks
    graphs produced by undirected generators (every edge present in both
    directions); degree-based expectations then use the undirected degree.
    ``parent`` maps node ids back to the graph this one was extracted from.
    """

    def __init__(self, node_count, out_ptr, out_idx, out_w, in_ptr, in_idx, in_w,
                 directed: bool = True, parent: np.ndarray | None = None):
        self.node_count = int(node_count)
        self.out_ptr = _frozen(out_ptr, np.int64)
        self.out_idx = _frozen(out_idx, np.int64)
        self.out_w = _frozen(out_w, np.int64)
        self.in_ptr = _frozen(in_ptr, np.int64)
        self.in_idx = _frozen(in_idx, np.int64)
        self.in_w = _frozen(in_w, np.int64)
        self.directed = bool(directed)
        self.parent = None if parent is None else _frozen(parent, np.int64)

    # ------------------------------------------------------------------ construction
    @classmethod
    def from_edges(cls, n: int, src, dst, weight=None, directed: bool = True, parent=None) -> "RefGraph":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        w = np.ones(len(src), dtype=np.int64) if weight is None else np.asarray(weight, dtype=np.int64)
        if len(src) != len(dst) or len(src) != len(w):
            raise ValueError("edge arrays differ in length")
        if len(src):
            if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
                raise ValueError("edge endpoint out of range")
            if (w < 1).any():
                raise ValueError("edge weights must be >= 1")
        keep = src != dst
        src, dst, w = src[keep], dst[keep], w[keep]
        key = src * n + dst
        order = np.argsort(key, kind="stable")
        key = key[order]
        w = w[order]
        if len(key):
            starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
            ukey = key[starts]
            uw = np.add.reduceat(w, starts)
        else:
            ukey = key
            uw = w
        s, d = np.divmod(ukey, n) if n else (ukey, ukey)
        out_ptr = _csr_ptr(s, n)
        order2 = np.lexsort((s, d))
        in_ptr = _csr_ptr(d, n)
        return cls(n, out_ptr, d, uw, in_ptr, s[order2], uw[order2], directed=directed, parent=parent)

    @classmethod
    def empty(cls, n: int = 0) -> "RefGraph":
        return cls.from_edges(n, [], [], [])

    # ------------------------------------------------------------------ basic views
    @property
    def edge_count(self) -> int:
        return len(self.out_idx)

    def __repr__(self) -> str:
        kind = "directed" if self.directed else "undirected"
        return f"RefGraph({kind}, nodes={self.node_count}, edges={self.edge_count})"

    def out_degree(self, weighted: bool = False) -> np.ndarray:
        if weighted:
            return np.bincount(self.edge_src, weights=self.out_w, minlength=self.node_count).astype(np.int64)
        return np.diff(self.out_ptr)

    def in_degree(self, weighted: bool = False) -> np.ndarray:
        if weighted:
            return np.bincount(self.out_idx, weights=self.out_w, minlength=self.node_count).astype(np.int64)
        return np.diff(self.in_ptr)

    @cached_property
    def edge_src(self) -> np.ndarray:
        return _frozen(np.repeat(np.arange(self.node_count, dtype=np.int64), np.diff(self.out_ptr)), np.int64)

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, weight) sorted by (src, dst)."""
        return self.edge_src, self.out_idx, self.out_w

    @cached_property
    def edge_keys(self) -> np.ndarray:
        """Sorted ``src * n + dst`` for vectorised membership tests."""
        return _frozen(self.edge_src * self.node_count + self.out_idx, np.int64)

    def has_edges(self, u, v) -> np.ndarray:
        keys = np.asarray(u, dtype=np.int64) * self.node_count + np.asarray(v, dtype=np.int64)
        pos = np.searchsorted(self.edge_keys, keys)
        pos = np.minimum(pos, max(len(self.edge_keys) - 1, 0))
        if not len(self.edge_keys):
            return np.zeros(np.shape(keys), dtype=bool)
        return self.edge_keys[pos] == keys

    def has_edge(self, u: int, v: int) -> bool:
        lo, hi = self.out_ptr[u], self.out_ptr[u + 1]
        i = np.searchsorted(self.out_idx[lo:hi], v)
        return bool(i < hi - lo and self.out_idx[lo + i] == v)

    def weight(self, u: int, v: int) -> int:
        lo, hi = self.out_ptr[u], self.out_ptr[u + 1]
        i = np.searchsorted(self.out_idx[lo:hi], v)
        if i < hi - lo and self.out_idx[lo + i] == v:
            return int(self.out_w[lo + i])
        return 0

    def transpose(self) -> "RefGraph":
        return RefGraph(self.node_count, self.in_ptr, self.in_idx, self.in_w,
                        self.out_ptr, self.out_idx, self.out_w, directed=self.directed, parent=self.parent)

    @cached_property
    def undirected(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (ptr, idx) of the simple undirected shadow graph."""
        n = self.node_count
        s, d, _ = self.edges()
        a = np.concatenate([s, d])
        b = np.concatenate([d, s])
        key = np.unique(a * n + b)
        u, v = np.divmod(key, n) if n else (key, key)
        return _frozen(_csr_ptr(u, n), np.int64), _frozen(v, np.int64)

    def undirected_degree(self) -> np.ndarray:
        return np.diff(self.undirected[0])

    def to_scipy(self, weighted: bool = False) -> sp.csr_matrix:
        data = self.out_w if weighted else np.ones(self.edge_count, dtype=np.int64)
        return sp.csr_matrix((data, self.out_idx, self.out_ptr), shape=(self.node_count, self.node_count))

    def check_invariants(self) -> None:
        """Raise AssertionError if the dual adjacency is inconsistent."""
        n = self.node_count
        assert self.out_ptr[-1] == self.in_ptr[-1] == self.edge_count
        for ptr, idx in ((self.out_ptr, self.out_idx), (self.in_ptr, self.in_idx)):
            rows = np.repeat(np.arange(n), np.diff(ptr))
            k = rows * n + idx
            assert (np.diff(k) > 0).all(), "neighbour lists must be strictly sorted"
            assert not (rows == idx).any(), "self-loop present"
        t = self.to_scipy(weighted=True).T.tocsr()
        t.sort_indices()
        assert np.array_equal(t.indptr, self.in_ptr)
        assert np.array_equal(t.indices, self.in_idx)
        assert np.array_equal(t.data, self.in_w)
        assert (self.out_w >= 1).all()


# ---------------------------------------------------------------------- registry


@dataclass(frozen=True)
class PhysicianRegistry:
    """NPI <-> node id bijection plus state label per node (-1 = unlabeled)."""

    npis: np.ndarray  # node -> npi (int64)
    state_of: np.ndarray  # node -> index into STATE_CODES, -1 if none

    def __post_init__(self):
        self.npis.setflags(write=False)
        self.state_of.setflags(write=False)

    def __len__(self) -> int:
        return len(self.npis)

    @cached_property
    def _sorted(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.argsort(self.npis, kind="stable")
        return self.npis[order], order

    def nodes_of(self, npis) -> np.ndarray:
        """Node ids for NPIs (int or 10-digit str); -1 where unknown."""
        arr = np.asarray([int(x) for x in npis] if not isinstance(npis, np.ndarray) else npis, dtype=np.int64)
        srt, order = self._sorted
        pos = np.searchsorted(srt, arr)
        pos = np.minimum(pos, max(len(srt) - 1, 0))
        hit = (srt[pos] == arr) if len(srt) else np.zeros(len(arr), bool)
        return np.where(hit, order[pos] if len(srt) else -1, -1)

    def node_of(self, npi) -> int:
        node = int(self.nodes_of([npi])[0])
        if node < 0:
            raise KeyError(npi)
        return node

    def npi_of(self, node: int) -> str:
        return format_npi(self.npis[node])

    def state(self, node: int) -> str | None:
        s = int(self.state_of[node])
        return None if s < 0 else STATE_CODES[s]

    def with_states(self, state_of: np.ndarray) -> "PhysicianRegistry":
        return PhysicianRegistry(self.npis, np.asarray(state_of, dtype=np.int16).copy())

    def subset(self, nodes: np.ndarray) -> "PhysicianRegistry":
        return PhysicianRegistry(self.npis[nodes].copy(), self.state_of[nodes].copy())

    def nodes_in_state(self, code: str) -> np.ndarray:
        return np.flatnonzero(self.state_of == STATE_INDEX[code])


def _collect(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(records, ReferralStream):
        records = records.chunks()
    srcs, dsts, cnts = [], [], []
    buf_s, buf_d, buf_c = [], [], []
    for r in records:
        if isinstance(r, ReferralChunk):
            srcs.append(r.src)
            dsts.append(r.dst)
            cnts.append(r.count)
        elif isinstance(r, RawReferralRecord):
            buf_s.append(int(r.from_npi))
            buf_d.append(int(r.to_npi))
            buf_c.append(r.shared_count)
        else:
            raise TypeError(f"unsupported record type {type(r).__name__}")
    if buf_s:
        srcs.append(np.array(buf_s, np.int64))
        dsts.append(np.array(buf_d, np.int64))
        cnts.append(np.array(buf_c, np.int64))
    if not srcs:
        z = np.zeros(0, np.int64)
        return z, z, z
    return np.concatenate(srcs), np.concatenate(dsts), np.concatenate(cnts)


def build_graph(records: Iterable) -> tuple[RefGraph, PhysicianRegistry]:
    """Build the national graph from validated records (records, chunks or a stream).

    Node ids follow ascending NPI order, so the result is independent of the
    order of the input rows.
    """
    src_npi, dst_npi, cnt = _collect(records)
    try:
        npis = np.unique(np.concatenate([src_npi, dst_npi]))
        src = np.searchsorted(npis, src_npi)
        dst = np.searchsorted(npis, dst_npi)
        del src_npi, dst_npi
        g = RefGraph.from_edges(len(npis), src, dst, cnt)
    except MemoryError as exc:
        raise MemoryError(f"out of memory building graph from {len(cnt)} records") from exc
    reg = PhysicianRegistry(npis, np.full(len(npis), NO_STATE, dtype=np.int16))
    return g, reg


# ---------------------------------------------------------------------- state assignment


@dataclass
class AssignmentReport:
    single_state: int = 0
    multi_state: int = 0
    resolved_by_neighbors: int = 0
    resolved_by_fallback: int = 0
    ties: int = 0
    unlabeled: int = 0
    weighted: bool = True

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _group_argmax(node: np.ndarray, state: np.ndarray, score: np.ndarray):
    """Per node pick max score, ties to the smallest state index.
    Returns (nodes, chosen_state, is_tie, best_score)."""
    order = np.lexsort((state, -score, node))
    node, state, score = node[order], state[order], score[order]
    first = np.r_[True, node[1:] != node[:-1]]
    idx = np.flatnonzero(first)
    nxt = idx + 1
    has_second = np.zeros(len(idx), bool)
    valid = nxt < len(node)
    has_second[valid] = node[nxt[valid]] == node[idx[valid]]
    tie = np.zeros(len(idx), bool)
    tie[has_second] = score[nxt[has_second]] == score[idx[has_second]]
    return node[idx], state[idx], tie, score[idx]


def assign_states(registry: PhysicianRegistry, graph: RefGraph, npi_records,
                  weighted: bool = True) -> tuple[PhysicianRegistry, AssignmentReport]:
    """Label each physician with one state.

    Pass 1 labels physicians listed under a single state. Pass 2 gives each
    multi-state physician the candidate state with the most referral volume
    (in + out) exchanged with pass-1-labeled neighbours in that state; when no
    such neighbour exists, volume with any neighbour listing that state is
    used. Remaining ties go to the lexicographically smallest code.
    ``weighted=False`` counts distinct partners instead of referrals.
    """
    table = npi_records if isinstance(npi_records, NpiStateTable) else NpiStateTable.from_records(npi_records)
    n = graph.node_count
    rep = AssignmentReport(weighted=weighted)
    nodes = registry.nodes_of(table.npi)
    hit = nodes >= 0
    pk = np.unique(nodes[hit] * N_STATES + table.state[hit].astype(np.int64))
    c_node, c_state = np.divmod(pk, N_STATES)
    n_cand = np.bincount(c_node, minlength=n)
    label = np.full(n, NO_STATE, dtype=np.int16)
    single = n_cand[c_node] == 1
    label[c_node[single]] = c_state[single]
    rep.single_state = int((n_cand == 1).sum())
    multi_nodes = np.flatnonzero(n_cand > 1)
    rep.multi_state = len(multi_nodes)

    if len(multi_nodes):
        s, d, w = graph.edges()
        if not weighted:
            w = np.ones_like(w)
        # each edge seen from both endpoints
        u = np.concatenate([s, d])
        v = np.concatenate([d, s])
        ww = np.concatenate([w, w])
        is_multi = n_cand > 1
        sel = is_multi[u]
        u, v, ww = u[sel], v[sel], ww[sel]
        cm = is_multi[c_node]
        mc_node, mc_state = c_node[cm], c_state[cm]
        mc_key = mc_node * N_STATES + mc_state

        def candidate_scores(e_key, e_w):
            if not len(e_key):
                return np.zeros(len(mc_key), np.int64)
            uk, inv = np.unique(e_key, return_inverse=True)
            sums = np.bincount(inv, weights=e_w).astype(np.int64)
            pos = np.minimum(np.searchsorted(uk, mc_key), len(uk) - 1)
            return np.where(uk[pos] == mc_key, sums[pos], 0)

        lab_v = label[v].astype(np.int64)
        ok = lab_v >= 0
        score = candidate_scores(u[ok] * N_STATES + lab_v[ok], ww[ok])
        best_node, best_state, tie, best = _group_argmax(mc_node, mc_state, score)
        resolved = best > 0

        # fallback: volume with neighbours that list the candidate state at all
        need = best_node[~resolved]
        if len(need):
            needs = np.zeros(n, bool)
            needs[need] = True
            sel = needs[u]
            fu, fv, fw = u[sel], v[sel], ww[sel]
            c_ptr = _csr_ptr(c_node, n)
            reps = n_cand[fv]
            fu_r = np.repeat(fu, reps)
            fw_r = np.repeat(fw, reps)
            starts = np.repeat(c_ptr[fv], reps)
            offs = np.arange(len(fu_r)) - np.repeat(np.cumsum(reps) - reps, reps)
            fs = c_state[starts + offs]
            fscore = candidate_scores(fu_r * N_STATES + fs, fw_r)
            keep = needs[mc_node]
            fb_node, fb_state, fb_tie, fb_best = _group_argmax(mc_node[keep], mc_state[keep], fscore[keep])
            best_state[~resolved] = fb_state
            tie[~resolved] = fb_tie
            rep.resolved_by_fallback = int((fb_best > 0).sum())
            # no signal at all counts as a tie broken lexicographically
            tie[~resolved] |= fb_best == 0
        rep.resolved_by_neighbors = int(resolved.sum())
        rep.ties = int(tie.sum())
        label[best_node] = best_state

    rep.unlabeled = int((label < 0).sum())
    if rep.unlabeled:
        log.info("%d physicians have edges but no state record", rep.unlabeled)
    return registry.with_states(label), rep


# ---------------------------------------------------------------------- subnetworks


@dataclass(frozen=True)
class SubnetworkKind:
    kind: str  # "national" | "induced" | "intrastate"
    state: str | None = None

    def __post_init__(self):
        if self.kind not in ("national", "induced", "intrastate"):
            raise ValueError(f"unknown subnetwork kind {self.kind!r}")
        if self.kind != "national" and self.state not in STATE_INDEX:
            raise ValueError(f"unknown state code {self.state!r}")

    @classmethod
    def parse(cls, text: str) -> "SubnetworkKind":
        kind, _, state = text.strip().partition(":")
        kind = kind.lower()
        if kind == "state":
            kind = "induced"
        return cls(kind, state.upper() or None)

    def __str__(self) -> str:
        return self.kind if self.kind == "national" else f"{self.kind}:{self.state}"


def extract_subnetwork(graph: RefGraph, registry: PhysicianRegistry, kind: SubnetworkKind | str) -> RefGraph:
    """National graph, intrastate graph (both endpoints labeled S, node set =
    every physician labeled S) or induced state graph (edges touching S).

    Node ids are remapped densely in ascending parent order; ``parent`` maps
    them back.
    """
    if isinstance(kind, str):
        kind = SubnetworkKind.parse(kind)
    if kind.kind == "national":
        return graph
    code = STATE_INDEX[kind.state]
    in_s = registry.state_of == code
    s, d, w = graph.edges()
    if kind.kind == "intrastate":
        keep = in_s[s] & in_s[d]
        nodes = np.flatnonzero(in_s)
    else:
        keep = in_s[s] | in_s[d]
        mask = in_s.copy()
        mask[s[keep]] = True
        mask[d[keep]] = True
        nodes = np.flatnonzero(mask)
    remap = np.full(graph.node_count, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    return RefGraph.from_edges(len(nodes), remap[s[keep]], remap[d[keep]], w[keep],
                               directed=graph.directed, parent=nodes)


def induced_subgraph(graph: RefGraph, nodes) -> RefGraph:
    """Subgraph on ``nodes`` (sorted, deduplicated) with ``parent`` set."""
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    keep_node = np.zeros(graph.node_count, bool)
    keep_node[nodes] = True
    s, d, w = graph.edges()
    keep = keep_node[s] & keep_node[d]
    remap = np.full(graph.node_count, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    return RefGraph.from_edges(len(nodes), remap[s[keep]], remap[d[keep]], w[keep],
                               directed=graph.directed, parent=nodes)


def subregistry(registry: PhysicianRegistry, sub: RefGraph) -> PhysicianRegistry:
    """Registry rows of ``sub``'s nodes, in ``sub`` order."""
    return registry.subset(sub.parent)


# ---------------------------------------------------------------------- components


@njit
def _nb_components(n, ptr, idx):
    label = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    comp = 0
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = comp
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            u = queue[head]
            head += 1
            for k in range(ptr[u], ptr[u + 1]):
                v = idx[k]
                if label[v] < 0:
                    label[v] = comp
                    queue[tail] = v
                    tail += 1
        comp += 1
    return label


def component_labels(graph: RefGraph) -> np.ndarray:
    n = graph.node_count
    if _accel.use_numba():
        ptr, idx = graph.undirected
        return _nb_components(n, ptr, idx)
    _, lab = csgraph.connected_components(graph.to_scipy(), directed=True, connection="weak")
    return lab.astype(np.int64)


def weak_components(graph: RefGraph) -> list[np.ndarray]:
    """Node sets of weakly connected components, largest first (ties: smallest member)."""
    n = graph.node_count
    if n == 0:
        return []
    lab = component_labels(graph)
    order = np.argsort(lab, kind="stable")
    lab_sorted = lab[order]
    cuts = np.flatnonzero(np.diff(lab_sorted)) + 1
    comps = np.split(order, cuts)
    comps.sort(key=lambda c: (-len(c), int(c[0])))
    return comps


def component_sizes(graph: RefGraph) -> np.ndarray:
    if graph.node_count == 0:
        return np.zeros(0, np.int64)
    return np.sort(np.bincount(component_labels(graph)))[::-1]


# ---------------------------------------------------------------------- diameter


@njit
def _nb_bfs(ptr, idx, src, dist, queue):
    """Eccentricity of src and the smallest-id node at that distance."""
    dist[src] = 0
    queue[0] = src
    head = 0
    tail = 1
    ecc = 0
    far = src
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u]
        if du > ecc or (du == ecc and u < far):
            ecc = du
            far = u
        for k in range(ptr[u], ptr[u + 1]):
            v = idx[k]
            if dist[v] < 0:
                dist[v] = du + 1
                queue[tail] = v
                tail += 1
    for i in range(tail):
        dist[queue[i]] = -1
    return ecc, far


@njit
def _nb_sweeps(ptr, idx, starts, double):
    n = len(ptr) - 1
    dist = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    best = 0
    for i in range(len(starts)):
        ecc, far = _nb_bfs(ptr, idx, starts[i], dist, queue)
        if ecc > best:
            best = ecc
        if double:
            ecc2, _ = _nb_bfs(ptr, idx, far, dist, queue)
            if ecc2 > best:
                best = ecc2
    return best


def _np_bfs(adj: sp.csr_matrix, src: int) -> tuple[int, int]:
    dist = csgraph.shortest_path(adj, unweighted=True, indices=src, directed=False)
    dist[~np.isfinite(dist)] = -1
    ecc = int(dist.max())
    return ecc, int(np.flatnonzero(dist == ecc)[0])


def approx_diameter(graph: RefGraph, sample_size: int = 64, seed: int = 0) -> int:
    """Lower bound on the undirected diameter from seeded double-sweep BFS.

    With ``sample_size >= node_count`` every node is swept and the result is
    the exact diameter (largest over components).
    """
    n = graph.node_count
    if n == 0:
        raise ValueError("diameter of an empty graph is undefined")
    full = sample_size >= n
    if full:
        starts = np.arange(n, dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        starts = np.sort(rng.choice(n, size=sample_size, replace=False)).astype(np.int64)
    ptr, idx = graph.undirected
    if _accel.use_numba():
        return int(_nb_sweeps(ptr, idx, starts, not full))
    adj = sp.csr_matrix((np.ones(len(idx)), idx, ptr), shape=(n, n))
    best = 0
    for s in starts:
        ecc, far = _np_bfs(adj, int(s))
        best = max(best, ecc)
        if not full:
            best = max(best, _np_bfs(adj, far)[0])
    return best


# ---------------------------------------------------------------------- binary cache

_MAGIC = b"RFNG"
_VERSION = 1


def write_graph(path, graph: RefGraph, registry: PhysicianRegistry | None = None, meta: dict | None = None) -> None:
    """Versioned binary cache: magic, version, JSON header, raw little-endian arrays."""
    arrays = {
        "out_ptr": graph.out_ptr, "out_idx": graph.out_idx, "out_w": graph.out_w,
        "in_ptr": graph.in_ptr, "in_idx": graph.in_idx, "in_w": graph.in_w,
    }
    if graph.parent is not None:
        arrays["parent"] = graph.parent
    if registry is not None:
        arrays["npis"] = registry.npis
        arrays["state_of"] = registry.state_of
    header = {
        "node_count": graph.node_count,
        "edge_count": graph.edge_count,
        "directed": graph.directed,
        "arrays": [[k, a.dtype.newbyteorder("<").str, int(a.size)] for k, a in arrays.items()],
        "meta": meta or {},
    }
    hb = json.dumps(header, sort_keys=True).encode()
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<IQ", _VERSION, len(hb)) + hb)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes())
    os.replace(tmp, path)


def read_graph(path) -> tuple[RefGraph, PhysicianRegistry | None, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a refnet graph file")
        version, hlen = struct.unpack("<IQ", fh.read(12))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported graph file version {version}")
        header = json.loads(fh.read(hlen))
        arrays = {}
        for name, dtype, size in header["arrays"]:
            dt = np.dtype(dtype)
            arrays[name] = np.frombuffer(fh.read(dt.itemsize * size), dtype=dt).astype(dt.newbyteorder("="))
    g = RefGraph(header["node_count"], arrays["out_ptr"], arrays["out_idx"], arrays["out_w"],
                 arrays["in_ptr"], arrays["in_idx"], arrays["in_w"], directed=header["directed"],
                 parent=arrays.get("parent"))
    reg = None
    if "npis" in arrays:
        reg = PhysicianRegistry(arrays["npis"], arrays["state_of"].astype(np.int16))
    return g, reg, header.get("meta", {})
