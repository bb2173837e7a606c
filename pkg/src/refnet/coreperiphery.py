"""Rombach-style core-periphery scores over an (alpha, beta) grid.

For a node ordering with positions i = 1..N (ascending coreness), the profile
assigns

    C_i = i (1 - a) / (2 b)                           for i <= b = floor(beta N)
    C_i = (i - b) (1 - a) / (2 (N - b)) + (1 + a) / 2   otherwise

and the core quality of the ordering is R = sum_ij A_ij C_i C_j over the
symmetrised adjacency. Orderings are optimised by simulated annealing over
position swaps. A node's score is sum over settings of C_i * R, scaled so the
maximum is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import _accel
from ._accel import njit
from ._parallel import child_rng, pmap
from .graph import PhysicianRegistry, RefGraph, weak_components
from .metrics import gini
from .states import STATE_CODES

DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_BETAS = tuple(round(0.1 * k, 1) for k in range(1, 10))
_CHUNK = 1 << 16


@dataclass(frozen=True)
class CpConfig:
    alpha_grid: tuple = DEFAULT_ALPHAS
    beta_grid: tuple = DEFAULT_BETAS
    iterations_per_node: int = 10_000
    max_iterations: int | None = None
    final_temperature_ratio: float = 1e-4
    seed: int = 0
    weighted: bool = False

    def __post_init__(self):
        if not self.alpha_grid or not self.beta_grid:
            raise ValueError("parameter grids must be nonempty")
        for v in tuple(self.alpha_grid) + tuple(self.beta_grid):
            if not 0 <= v <= 1:
                raise ValueError(f"grid value {v} outside [0, 1]")
        if self.iterations_per_node < 0:
            raise ValueError("iterations_per_node must be >= 0")

    def settings(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a in self.alpha_grid for b in self.beta_grid]

    def n_iter(self, n: int) -> int:
        it = self.iterations_per_node * n
        if self.max_iterations is not None:
            it = min(it, self.max_iterations)
        return int(it)


@dataclass
class CpReport:
    cp_score: np.ndarray
    gini_cp: float
    core_node: int
    core_entropy: float
    settings: list = field(default_factory=list)
    quality: list = field(default_factory=list)  # best R per setting (summed over components)

    def to_dict(self) -> dict:
        return {
            "core_node": self.core_node,
            "gini_cp": self.gini_cp,
            "core_entropy": self.core_entropy,
            "settings": [list(s) for s in self.settings],
            "quality": list(self.quality),
        }


def profile(n: int, alpha: float, beta: float) -> np.ndarray:
    """Profile values for positions 1..n (ascending)."""
    b = int(math.floor(beta * n))
    i = np.arange(1, n + 1, dtype=np.float64)
    c = np.empty(n)
    lo = i <= b
    if b > 0:
        c[lo] = i[lo] * (1 - alpha) / (2 * b)
    if n - b > 0:
        c[~lo] = (i[~lo] - b) * (1 - alpha) / (2 * (n - b)) + (1 + alpha) / 2
    return c


def core_quality(ptr, idx, wts, c) -> float:
    src = np.repeat(np.arange(len(ptr) - 1), np.diff(ptr))
    return float(np.sum(wts * c[src] * c[idx]))


# ---------------------------------------------------------------------- annealing kernels


@njit
def _adj_weight(ptr, idx, wts, u, v):
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
            return wts[mid]
    return 0.0


@njit
def _strength(ptr, idx, wts, c):
    n = len(ptr) - 1
    s = np.zeros(n)
    for u in range(n):
        acc = 0.0
        for k in range(ptr[u], ptr[u + 1]):
            acc += wts[k] * c[idx[k]]
        s[u] = acc
    return s


@njit
def _mean_abs_delta(ptr, idx, wts, c, s, us, vs):
    tot = 0.0
    for t in range(len(us)):
        u = us[t]
        v = vs[t]
        d = c[v] - c[u]
        tot += abs(2.0 * d * (s[u] - s[v]) - 2.0 * d * d * _adj_weight(ptr, idx, wts, u, v))
    return tot / max(len(us), 1)


@njit
def _anneal_chunk(ptr, idx, wts, c, s, us, vs, rs, temp, cool):
    """Metropolis swaps of the values c[u], c[v]; returns the final temperature."""
    for t in range(len(us)):
        u = us[t]
        v = vs[t]
        d = c[v] - c[u]
        if d != 0.0:
            delta = 2.0 * d * (s[u] - s[v]) - 2.0 * d * d * _adj_weight(ptr, idx, wts, u, v)
            if delta >= 0.0 or (temp > 0.0 and rs[t] < math.exp(delta / temp)):
                cu = c[u]
                c[u] = c[v]
                c[v] = cu
                for k in range(ptr[u], ptr[u + 1]):
                    s[idx[k]] += d * wts[k]
                for k in range(ptr[v], ptr[v + 1]):
                    s[idx[k]] -= d * wts[k]
        temp *= cool
    return temp


def _kernel(fn):
    return fn if _accel.use_numba() else getattr(fn, "py_func", fn)


def _anneal(ptr, idx, wts, prof: np.ndarray, order0: np.ndarray, n_iter: int, tf_ratio: float,
            rng: np.random.Generator) -> np.ndarray:
    """Return per-node profile values after annealing from ``order0``."""
    n = len(prof)
    c = np.empty(n)
    c[order0] = prof
    if n < 2 or n_iter == 0:
        return c
    s = _kernel(_strength)(ptr, idx, wts, c)
    m = min(1000, n_iter)
    us = rng.integers(0, n, m)
    vs = (us + rng.integers(1, n, m)) % n
    temp = _kernel(_mean_abs_delta)(ptr, idx, wts, c, s, us, vs)
    cool = tf_ratio ** (1.0 / n_iter) if temp > 0 else 1.0
    step = _kernel(_anneal_chunk)
    done = 0
    while done < n_iter:
        k = min(_CHUNK, n_iter - done)
        us = rng.integers(0, n, k)
        vs = (us + rng.integers(1, n, k)) % n
        rs = rng.random(k)
        temp = step(ptr, idx, wts, c, s, us, vs, rs, temp, cool)
        done += k
    return c


# ---------------------------------------------------------------------- structure helpers


def _symmetric(graph: RefGraph, weighted: bool):
    ptr, idx = graph.undirected
    if not weighted:
        return ptr, idx, np.ones(len(idx))
    n = graph.node_count
    s, d, w = graph.edges()
    key = np.concatenate([s * n + d, d * n + s])
    ww = np.concatenate([w, w]).astype(np.float64)
    uk, inv = np.unique(key, return_inverse=True)
    return ptr, idx, np.bincount(inv, weights=ww)


def twin_classes(ptr, idx) -> np.ndarray:
    """Class label per node; nodes with identical open or closed
    neighbourhoods (automorphic twins) share a label."""
    n = len(ptr) - 1
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for closed in (False, True):
        groups: dict = {}
        for u in range(n):
            nb = idx[ptr[u]:ptr[u + 1]]
            if closed:
                nb = np.sort(np.append(nb, u))
            if len(nb) == 0:
                continue
            groups.setdefault(nb.tobytes(), []).append(u)
        for members in groups.values():
            r = find(members[0])
            for m in members[1:]:
                parent[find(m)] = r
    return np.array([find(u) for u in range(n)])


def _class_mean(values: np.ndarray, cls: np.ndarray) -> np.ndarray:
    sums = np.bincount(cls, weights=values, minlength=len(values))
    cnt = np.bincount(cls, minlength=len(values))
    return sums[cls] / cnt[cls]


# ---------------------------------------------------------------------- scoring


def _score_component(args, config: CpConfig):
    """Anneal every setting on one component; returns (values[S, n], R[S])."""
    comp_index, ptr, idx, wts, deg_order = args
    n = len(ptr) - 1
    settings = config.settings()
    vals = np.zeros((len(settings), n))
    quality = np.zeros(len(settings))
    for k, (a, b) in enumerate(settings):
        prof = profile(n, a, b)
        rng = child_rng(config.seed, comp_index, k)
        c = _anneal(ptr, idx, wts, prof, deg_order, config.n_iter(n), config.final_temperature_ratio, rng)
        vals[k] = c
        quality[k] = core_quality(ptr, idx, wts, c)
    return vals, quality


def _component_arrays(ptr, idx, wts, nodes):
    n = len(ptr) - 1
    remap = np.full(n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    counts = np.diff(ptr)[nodes]
    sub_ptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    np.cumsum(counts, out=sub_ptr[1:])
    sel = np.concatenate([np.arange(ptr[u], ptr[u + 1]) for u in nodes]) if len(nodes) else np.zeros(0, np.int64)
    sub_idx = remap[idx[sel]] if len(sel) else np.zeros(0, np.int64)
    return sub_ptr, sub_idx.astype(np.int64), wts[sel] if len(sel) else np.zeros(0)


def cp_scores(graph: RefGraph, config: CpConfig | None = None, workers: int | None = None) -> CpReport:
    config = config or CpConfig()
    n = graph.node_count
    if n == 0:
        raise ValueError("core-periphery scores of an empty graph")
    settings = config.settings()
    ptr, idx, wts = _symmetric(graph, config.weighted)
    udeg = np.diff(ptr)
    wdeg = graph.in_degree(True) + graph.out_degree(True)

    tasks = []
    comps = weak_components(graph)
    for ci, nodes in enumerate(comps):
        nodes = np.sort(nodes)
        sp, si, sw = _component_arrays(ptr, idx, wts, nodes)
        # initial order: ascending degree, ties by descending id so low ids sit higher
        order = np.lexsort((-nodes, udeg[nodes]))
        tasks.append((ci, sp, si, sw, order))
    results = pmap(partial(_score_component, config=config), tasks, workers=workers)

    cls = twin_classes(ptr, idx)
    per_setting = np.zeros((len(settings), n))
    quality = np.zeros(len(settings))
    for (ci, *_), nodes, (vals, q) in zip(tasks, [np.sort(c) for c in comps], results):
        per_setting[:, nodes] = vals * q[:, None]
        quality += q
    per_setting = np.array([_class_mean(row, cls) for row in per_setting])

    agg = per_setting.sum(axis=0)
    top = agg.max()
    score = agg / top if top > 0 else np.ones(n)
    score = np.clip(score, 0.0, 1.0)
    tied = np.flatnonzero(score == score.max())
    core = int(tied[np.lexsort((tied, -wdeg[tied]))][0])
    score[tied] = np.nextafter(1.0, 0.0)
    score[core] = 1.0

    return CpReport(
        cp_score=score,
        gini_cp=gini_of_scores(score),
        core_node=core,
        core_entropy=_top_entropy(per_setting),
        settings=settings,
        quality=quality.tolist(),
    )


def _top_entropy(per_setting: np.ndarray) -> float:
    """Entropy (nats) of which node ranks first across settings; a tie splits
    the setting's mass evenly among the tied nodes."""
    mass: dict[int, float] = {}
    for row in per_setting:
        m = row.max()
        top = np.flatnonzero(row == m)
        for u in top:
            mass[int(u)] = mass.get(int(u), 0.0) + 1.0 / len(top)
    p = np.array(list(mass.values())) / len(per_setting)
    return float(-(p * np.log(p)).sum()) + 0.0


def gini_of_scores(score: np.ndarray) -> float:
    return gini(score)


def gini_of_cp(report: CpReport) -> float:
    return gini(report.cp_score)


@dataclass
class CrossState:
    n_states_reached: int
    n_cross_referrals: int
    n_unlabeled: int = 0

    def __iter__(self):
        yield self.n_states_reached
        yield self.n_cross_referrals


def core_cross_state(report: CpReport, national_graph: RefGraph, registry: PhysicianRegistry,
                     state_graph: RefGraph | None = None) -> CrossState:
    """External states touched by the core node and the referral weight
    exchanged with them. ``state_graph`` maps the core node back to national
    ids through its ``parent`` array; without it the node id is taken as
    national."""
    node = report.core_node
    if state_graph is not None and state_graph.parent is not None:
        node = int(state_graph.parent[node])
    own = registry.state_of[node]
    g = national_graph
    nb = np.concatenate([g.out_idx[g.out_ptr[node]:g.out_ptr[node + 1]], g.in_idx[g.in_ptr[node]:g.in_ptr[node + 1]]])
    w = np.concatenate([g.out_w[g.out_ptr[node]:g.out_ptr[node + 1]], g.in_w[g.in_ptr[node]:g.in_ptr[node + 1]]])
    st = registry.state_of[nb]
    unl = st < 0
    ext = (~unl) & (st != own)
    n_unl = len(np.unique(nb[unl]))
    return CrossState(len(np.unique(st[ext])), int(w[ext].sum()), n_unl)


def core_state_code(report: CpReport, registry: PhysicianRegistry, state_graph: RefGraph | None = None) -> str | None:
    node = report.core_node
    if state_graph is not None and state_graph.parent is not None:
        node = int(state_graph.parent[node])
    s = int(registry.state_of[node])
    return STATE_CODES[s] if s >= 0 else None
