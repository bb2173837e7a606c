"""State-year network feature vectors f1..f31.

Every feature comes from exactly one call into the graph modules; a failing or
undefined computation leaves the feature as NaN with the reason recorded.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import metrics
from ..coreperiphery import CpConfig, core_cross_state, cp_scores
from ..graph import PhysicianRegistry, RefGraph, SubnetworkKind, approx_diameter, component_sizes, extract_subnetwork
from ..motifs import TRIAD_NAMES, triad_census
from ..powerlaw import PowerLawError, fit_powerlaw

log = logging.getLogger(__name__)

FEATURE_IDS = tuple(f"f{i}" for i in range(1, 32))
EXTRA_IDS = ("reciprocity",) + tuple(f"T{i}" for i in range(1, 17))

FEATURE_LABELS = {
    "f1": "average degree of intrastate network",
    "f2": "power-law alpha of in-degree, intrastate",
    "f3": "Gini of in-degree, intrastate",
    "f4": "power-law alpha of out-degree, intrastate",
    "f5": "Gini of out-degree, intrastate",
    "f6": "diameter of intrastate network",
    "f7": "global clustering, intrastate",
    "f8": "local clustering, intrastate",
    "f9": "nodes in intrastate network",
    "f10": "edges in intrastate network",
    "f11": "undirected assortativity, intrastate",
    "f12": "(in,in) assortativity, intrastate",
    "f13": "(out,out) assortativity, intrastate",
    "f14": "(in,out) assortativity, intrastate",
    "f15": "(out,in) assortativity, intrastate",
    "f16": "Gini of component sizes, induced",
    "f17": "dominant component size, induced",
    "f18": "diameter of induced network",
    "f19": "global clustering, induced",
    "f20": "local clustering, induced",
    "f21": "nodes in induced network",
    "f22": "edges in induced network",
    "f23": "undirected assortativity, induced",
    "f24": "(in,in) assortativity, induced",
    "f25": "(out,out) assortativity, induced",
    "f26": "(in,out) assortativity, induced",
    "f27": "(out,in) assortativity, induced",
    "f28": "Gini of CP scores",
    "f29": "entropy of the top CP node across settings",
    "f30": "external states reached by the core node",
    "f31": "cross-state referrals of the core node",
}


@dataclass(frozen=True)
class FeatureConfig:
    diameter_samples: int = 64
    diameter_seed: int = 0
    powerlaw_min_samples: int = 50
    degree_convention: str = "undirected"  # or "out": mean out-degree E/n
    cp: CpConfig = field(default_factory=lambda: CpConfig(iterations_per_node=200, max_iterations=2_000_000))
    cp_network: str = "intrastate"  # or "induced"
    triad_samples: int | None = None  # None: exact census when feasible
    triad_seed: int = 0
    skip: tuple = ()  # feature ids to leave missing (e.g. expensive CP features)


@dataclass
class StateFeatureVector:
    state: str
    year: int
    values: dict
    missing: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def get(self, fid: str) -> float:
        return self.values.get(fid, float("nan"))

    def row(self, ids=FEATURE_IDS) -> list:
        return [self.state, self.year] + [self.get(f) for f in ids]

    @classmethod
    def all_missing(cls, state: str, year: int, reason: str) -> "StateFeatureVector":
        ids = FEATURE_IDS + EXTRA_IDS
        return cls(state, year, {f: float("nan") for f in ids}, {f: reason for f in ids})


class _Collector:
    def __init__(self, vec: StateFeatureVector, skip):
        self.vec = vec
        self.skip = set(skip)

    def put(self, fids, source: str, fn):
        fids = (fids,) if isinstance(fids, str) else tuple(fids)
        if self.skip.intersection(fids):
            for f in fids:
                self.vec.values[f] = float("nan")
                self.vec.missing[f] = "skipped by configuration"
            return
        try:
            out = fn()
            out = (out,) if len(fids) == 1 else tuple(out)
        except (ValueError, PowerLawError, ZeroDivisionError, FloatingPointError) as exc:
            for f in fids:
                self.vec.values[f] = float("nan")
                self.vec.missing[f] = f"{source}: {exc}"
            return
        for f, v in zip(fids, out):
            v = float(v)
            self.vec.values[f] = v
            self.vec.provenance[f] = source
            if math.isnan(v):
                self.vec.missing[f] = f"{source}: undefined"


def _alpha(deg: np.ndarray, floor: int) -> float:
    return fit_powerlaw(deg[deg > 0], min_samples=floor).alpha


def _assort_block(g: RefGraph):
    a = metrics.assortativity(g)
    return metrics.undirected_assortativity(g), a.r_in_in, a.r_out_out, a.r_in_out, a.r_out_in


def _nonempty(g: RefGraph, what: str) -> RefGraph:
    if g.node_count == 0:
        raise ValueError(f"{what} network is empty")
    return g


def build_features(state: str, year: int, national: RefGraph, registry: PhysicianRegistry,
                   config: FeatureConfig | None = None, cp_report=None) -> StateFeatureVector:
    """Assemble f1..f31 (plus reciprocity and triad proportions) for one state-year.

    ``cp_report`` reuses core-periphery scores already computed on the
    configured CP network instead of annealing again.
    """
    cfg = config or FeatureConfig()
    vec = StateFeatureVector(state, int(year), {})
    put = _Collector(vec, cfg.skip).put
    intra = extract_subnetwork(national, registry, SubnetworkKind("intrastate", state))
    induced = extract_subnetwork(national, registry, SubnetworkKind("induced", state))

    def mean_deg():
        g = _nonempty(intra, "intrastate")
        return metrics.mean_degree(g) if cfg.degree_convention == "undirected" else g.edge_count / g.node_count

    put("f1", "metrics.mean_degree(intrastate)", mean_deg)
    put("f2", "powerlaw.fit_powerlaw(intrastate in-degree).alpha",
        lambda: _alpha(intra.in_degree(), cfg.powerlaw_min_samples))
    put("f3", "metrics.gini(intrastate in-degree)", lambda: metrics.gini(_nonempty(intra, "intrastate").in_degree()))
    put("f4", "powerlaw.fit_powerlaw(intrastate out-degree).alpha",
        lambda: _alpha(intra.out_degree(), cfg.powerlaw_min_samples))
    put("f5", "metrics.gini(intrastate out-degree)", lambda: metrics.gini(_nonempty(intra, "intrastate").out_degree()))
    put("f6", "graph.approx_diameter(intrastate)",
        lambda: approx_diameter(_nonempty(intra, "intrastate"), cfg.diameter_samples, cfg.diameter_seed))

    def clus(g):
        c = metrics.clustering(g)
        return c.global_c, c.local_c

    put(("f7", "f8"), "metrics.clustering(intrastate)", lambda: clus(intra))
    put("f9", "intrastate.node_count", lambda: intra.node_count)
    put("f10", "intrastate.edge_count", lambda: intra.edge_count)
    put(("f11", "f12", "f13", "f14", "f15"), "metrics.assortativity(intrastate)", lambda: _assort_block(intra))

    put("f16", "metrics.gini(component sizes of induced)",
        lambda: metrics.gini(component_sizes(_nonempty(induced, "induced"))))
    put("f17", "component sizes of induced [0]", lambda: component_sizes(_nonempty(induced, "induced"))[0])
    put("f18", "graph.approx_diameter(induced)",
        lambda: approx_diameter(_nonempty(induced, "induced"), cfg.diameter_samples, cfg.diameter_seed))
    put(("f19", "f20"), "metrics.clustering(induced)", lambda: clus(induced))
    put("f21", "induced.node_count", lambda: induced.node_count)
    put("f22", "induced.edge_count", lambda: induced.edge_count)
    put(("f23", "f24", "f25", "f26", "f27"), "metrics.assortativity(induced)", lambda: _assort_block(induced))

    cp_graph = intra if cfg.cp_network == "intrastate" else induced

    def cp_block():
        rep = cp_report if cp_report is not None else cp_scores(_nonempty(cp_graph, cfg.cp_network), cfg.cp)
        cross = core_cross_state(rep, national, registry, state_graph=cp_graph)
        return rep.gini_cp, rep.core_entropy, cross.n_states_reached, cross.n_cross_referrals

    put(("f28", "f29", "f30", "f31"), f"coreperiphery.cp_scores({cfg.cp_network})", cp_block)

    put("reciprocity", "metrics.reciprocity(intrastate).corr", lambda: metrics.reciprocity(intra).corr)

    def triads():
        g = _nonempty(intra, "intrastate")
        if g.node_count < 3:
            raise ValueError("fewer than 3 nodes")
        return triad_census(g, cfg.triad_samples, cfg.triad_seed).proportions()

    put(tuple(f"T{i}" for i in range(1, 17)), "motifs.triad_census(intrastate)", triads)
    return vec


def features_frame(vectors):
    """DataFrame with columns state, year, f1..f31, extras (NaN = missing)."""
    import pandas as pd

    cols = list(FEATURE_IDS + EXTRA_IDS)
    rows = [[v.state, v.year] + [v.get(f) for f in cols] for v in vectors]
    return pd.DataFrame(rows, columns=["state", "year"] + cols)
