"""Declarative batch runs: ingest, build graphs, run the selected analyses.

A config (YAML or JSON) looks like::

    seed: 0
    inputs:
      referrals:
        2009: {path: referrals_2009.csv, format: cms}
      npi_states: npi_states.csv
      health: health.csv          # optional, needed by ``regress``
    analyses: [metrics, powerlaw, triads, smallworld, cp, gravity, features, regress, multivariate]
    params:
      triads: {samples: 1000000}
      cp: {states: [NH, VT]}

Relative paths resolve against the config file's directory. Each analysis
runs in isolation: an exception is recorded in ``failures.json`` and only the
analyses that depend on it are skipped.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import traceback
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import metrics as M
from . import report, svg
from ._accel import n_threads
from .coreperiphery import CpConfig, core_cross_state, core_state_code, cp_scores
from .graph import SubnetworkKind, assign_states, build_graph, extract_subnetwork, write_graph
from .gravity import aggregate_flows, fit_gravity
from .ingest import IngestError, health_frame, parse_health_attributes, parse_referrals, read_npi_states
from .motifs import triad_census
from .nullmodels import small_world_test
from .powerlaw import PowerLawError, ccdf_points, fit_powerlaw, gof_pvalue
from .states import STATES_50

log = logging.getLogger(__name__)

ANALYSES = ("metrics", "powerlaw", "triads", "smallworld", "cp", "gravity", "features", "regress", "multivariate")
# hard dependencies; ``features`` also reuses ``cp`` results when both run
DEPENDS = {"regress": ("features",), "multivariate": ("features",)}
SOFT_DEPENDS = {"features": ("cp",)}

DEFAULT_PARAMS: dict[str, dict] = {
    "graphs": {"cache": True},
    "metrics": {},
    "powerlaw": {"bootstrap": 100, "directions": ["in", "out"], "states": [], "min_samples": 50},
    "triads": {"samples": 1_000_000},
    "smallworld": {"ratio_threshold": 10.0, "path_factor": 4.0, "sample_size": 64},
    "cp": {"states": "all", "network": "intrastate", "iterations_per_node": 50, "max_iterations": 500_000,
           "alpha_grid": None, "beta_grid": None, "weighted": False},
    "gravity": {"pool_years": False},
    "features": {"states": "all", "diameter_samples": 64, "triad_samples": 100_000, "skip": [],
                 "exclude_years": [2015]},
    "regress": {"attributes": None, "features": None, "alpha": 0.05, "per_year_interactions": False,
                "triad_factors": 2},
    "multivariate": {"k": 4, "n_factors": 2},
}


class ConfigError(ValueError):
    """Invalid pipeline configuration (an input error)."""


@dataclass
class PipelineConfig:
    referrals: dict  # year -> {"path": ..., "format": ...}
    npi_states: str | None = None
    health: str | None = None
    analyses: tuple = ("metrics",)
    seed: int = 0
    output: str | None = None
    params: dict = field(default_factory=dict)
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - {"seed", "inputs", "analyses", "params", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        inputs = d.get("inputs") or {}
        refs = inputs.get("referrals")
        if not refs or not isinstance(refs, dict):
            raise ConfigError("inputs.referrals must map years to files")
        referrals = {}
        for year, spec in refs.items():
            try:
                y = int(year)
            except (TypeError, ValueError):
                raise ConfigError(f"referral year {year!r} is not an integer") from None
            if isinstance(spec, str):
                spec = {"path": spec}
            if not isinstance(spec, dict) or "path" not in spec:
                raise ConfigError(f"referral entry for {y} needs a path")
            referrals[y] = {"path": str(spec["path"]), "format": spec.get("format", "cms")}
        analyses = d.get("analyses", ["metrics"])
        if isinstance(analyses, str):
            analyses = [a.strip() for a in analyses.split(",") if a.strip()]
        bad = [a for a in analyses if a not in ANALYSES]
        if bad:
            raise ConfigError(f"unknown analyses {bad}; choose from {list(ANALYSES)}")
        params = d.get("params") or {}
        bad = [k for k in params if k not in DEFAULT_PARAMS]
        if bad:
            raise ConfigError(f"params for unknown analyses {bad}")
        merged = {}
        for k, defaults in DEFAULT_PARAMS.items():
            given = params.get(k) or {}
            extra = set(given) - set(defaults) - {"seed"}
            if extra:
                raise ConfigError(f"unknown params for {k}: {sorted(extra)}")
            merged[k] = {**defaults, **given}
        return cls(
            referrals=dict(sorted(referrals.items())),
            npi_states=inputs.get("npi_states"),
            health=inputs.get("health"),
            analyses=tuple(a for a in ANALYSES if a in analyses),
            seed=int(d.get("seed", 0)),
            output=d.get("output"),
            params=merged,
            base_dir=base_dir,
        )

    def resolve(self, p: str | None) -> str | None:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    def seed_for(self, analysis: str) -> int:
        return int(self.params.get(analysis, {}).get("seed", self.seed))

    def snapshot(self) -> dict:
        """Config fields that determine the outputs (no output dir, no base dir)."""
        return {
            "inputs": {
                "referrals": {str(y): s for y, s in self.referrals.items()},
                "npi_states": self.npi_states,
                "health": self.health,
            },
            "analyses": list(self.analyses),
            "seed": self.seed,
            "params": self.params,
        }


def load_config(path) -> PipelineConfig:
    path = os.fspath(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        if path.endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return PipelineConfig.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


@dataclass
class Failure:
    stage: str
    error: str
    message: str
    year: int | None = None
    input_error: bool = False

    def to_dict(self) -> dict:
        return {"stage": self.stage, "year": self.year, "error": self.error, "message": self.message,
                "input_error": self.input_error}


@dataclass
class PipelineResult:
    out_dir: str
    digest: str
    failures: list
    artifacts: list

    @property
    def exit_code(self) -> int:
        if any(f.input_error for f in self.failures):
            return 1
        return 2 if self.failures else 0


def _states(spec) -> list[str]:
    if spec in (None, "all"):
        return sorted(STATES_50)
    if isinstance(spec, str):
        spec = [s.strip() for s in spec.split(",") if s.strip()]
    return [s.upper() for s in spec]


class _Run:
    def __init__(self, cfg: PipelineConfig, out_dir: str, manifest: report.RunManifest):
        self.cfg = cfg
        self.out = out_dir
        self.manifest = manifest
        self.digest = manifest.digest()
        self.graphs: dict = {}  # year -> (graph, registry)
        self.cp: dict = {}  # (state, year) -> CpReport
        self.features: list = []
        self.failures: list[Failure] = []
        self.artifacts: list[str] = []
        self._lock = threading.Lock()

    def path(self, *parts) -> str:
        p = os.path.join(self.out, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        with self._lock:
            self.artifacts.append(os.path.relpath(p, self.out))
        return p

    def json(self, name, obj):
        report.write_json(self.path(name), obj, self.digest)

    def csv(self, name, header, rows):
        report.write_csv(self.path(name), header, rows, self.digest)

    def table(self, name, results, table_id):
        report.emit_table(results, table_id, self.path(name), self.digest)

    def svg(self, name, text):
        report.atomic_write_text(self.path(name), text)

    def fail(self, stage, exc, year=None, input_error=False):
        with self._lock:
            self.failures.append(Failure(stage, type(exc).__name__, str(exc), year, input_error))

    def params(self, name) -> dict:
        return self.cfg.params[name]


# ---------------------------------------------------------------------- stages


def _ingest(run: _Run) -> None:
    cfg = run.cfg
    table = None
    if cfg.npi_states:
        try:
            table, nrep = read_npi_states(cfg.resolve(cfg.npi_states))
            run.json("npi_states.json", {"report": nrep.to_dict()})
        except (IngestError, OSError, ValueError) as exc:
            run.fail("ingest:npi_states", exc, input_error=True)
            table = None
    for year, spec in cfg.referrals.items():
        try:
            stream = parse_referrals(cfg.resolve(spec["path"]), spec["format"], year)
            g, reg = build_graph(stream)
            rep = stream.report.to_dict()
            rep["path"] = spec["path"]
            out = {"year": year, "ingest": rep, "nodes": g.node_count, "edges": g.edge_count}
            if table is not None:
                reg, arep = assign_states(reg, g, table.for_year(year))
                out["assignment"] = arep.to_dict()
            run.graphs[year] = (g, reg)
            run.json(f"ingest_{year}.json", out)
            if run.params("graphs")["cache"]:
                write_graph(run.path("graphs", f"national_{year}.rfg"), g, reg,
                            meta={"year": year, "manifest": run.digest})
        except (IngestError, OSError, ValueError) as exc:
            run.fail("ingest", exc, year=year, input_error=True)


def _need_states(run: _Run, what: str) -> None:
    if not run.cfg.npi_states:
        raise ValueError(f"{what} needs inputs.npi_states")


def _metrics(run: _Run, year: int) -> None:
    g, _ = run.graphs[year]
    run.json(f"metrics_{year}.json", {"year": year, "national": M.summary(g)})


def _degrees(g, direction: str) -> np.ndarray:
    d = g.in_degree() if direction == "in" else g.out_degree()
    return d[d > 0]


def _powerlaw(run: _Run, year: int) -> None:
    p = run.params("powerlaw")
    seed = run.cfg.seed_for("powerlaw")
    g, reg = run.graphs[year]
    out: dict[str, Any] = {"year": year, "national": {}, "states": {}}
    for direction in p["directions"]:
        deg = _degrees(g, direction)
        fit = fit_powerlaw(deg, min_samples=p["min_samples"])
        gof = gof_pvalue(deg, fit, n_bootstrap=p["bootstrap"], seed=seed)
        out["national"][direction] = {"fit": fit.to_dict(), "gof": gof.to_dict()}
        x, s = ccdf_points(deg)
        run.csv(f"ccdf_{direction}_{year}.csv", ["degree", "ccdf"], zip(x.tolist(), s.tolist()))
        tail_mass = fit.n_tail / fit.n
        run.svg(f"ccdf_{direction}_{year}.svg",
                svg.loglog_ccdf(x, s, f"{direction}-degree CCDF, {year}", f"{direction}-degree",
                                fit=(fit.alpha, fit.xmin, tail_mass)))
    rows = []
    states = _states(p["states"]) if p["states"] else []
    if states:
        _need_states(run, "per-state power-law tests")
    for st in states:
        sub = extract_subnetwork(g, reg, SubnetworkKind("intrastate", st))
        for direction in p["directions"]:
            try:
                deg = _degrees(sub, direction)
                fit = fit_powerlaw(deg, min_samples=p["min_samples"])
                gof = gof_pvalue(deg, fit, n_bootstrap=p["bootstrap"], seed=seed)
                out["states"].setdefault(st, {})[direction] = {"fit": fit.to_dict(), "gof": gof.to_dict()}
                rows.append((st, year, direction, gof.p_value))
            except PowerLawError as exc:
                out["states"].setdefault(st, {})[direction] = {"error": str(exc)}
                rows.append((st, year, direction, None))
    run.json(f"powerlaw_{year}.json", out)
    if rows:
        run.table(f"powerlaw_pvalues_{year}.csv", rows, "powerlaw_pvalues")


def _triads(run: _Run, year: int) -> None:
    g, _ = run.graphs[year]
    c = triad_census(g, int(run.params("triads")["samples"]), run.cfg.seed_for("triads"))
    run.json(f"triads_{year}.json", {"year": year, "census": c.to_dict()})
    run.table(f"triads_{year}.csv", [(str(year), c)], "triad_census")


def _smallworld(run: _Run, year: int) -> None:
    p = run.params("smallworld")
    g, _ = run.graphs[year]
    v = small_world_test(g, p["ratio_threshold"], p["path_factor"], p["sample_size"], run.cfg.seed_for("smallworld"))
    run.json(f"smallworld_{year}.json", {"year": year, "verdict": v.to_dict()})


def _cp_config(run: _Run) -> CpConfig:
    p = run.params("cp")
    kw = {}
    if p["alpha_grid"] is not None:
        kw["alpha_grid"] = tuple(p["alpha_grid"])
    if p["beta_grid"] is not None:
        kw["beta_grid"] = tuple(p["beta_grid"])
    return CpConfig(iterations_per_node=p["iterations_per_node"], max_iterations=p["max_iterations"],
                    seed=run.cfg.seed_for("cp"), weighted=p["weighted"], **kw)


def _cp(run: _Run, year: int) -> None:
    _need_states(run, "core-periphery scoring")
    p = run.params("cp")
    cfg = _cp_config(run)
    g, reg = run.graphs[year]
    out: dict[str, Any] = {"year": year, "network": p["network"], "states": {}}
    for st in _states(p["states"]):
        sub = extract_subnetwork(g, reg, SubnetworkKind(p["network"], st))
        if sub.node_count == 0:
            out["states"][st] = {"error": "empty network"}
            continue
        rep = cp_scores(sub, cfg)
        with run._lock:
            run.cp[(st, year)] = rep
        cross = core_cross_state(rep, g, reg, state_graph=sub)
        core_parent = int(sub.parent[rep.core_node])
        out["states"][st] = {
            "nodes": sub.node_count, "gini_cp": rep.gini_cp, "core_entropy": rep.core_entropy,
            "core_npi": reg.npi_of(core_parent), "core_state": core_state_code(rep, reg, sub),
            "states_reached": cross.n_states_reached, "cross_referrals": cross.n_cross_referrals,
        }
        npis = [reg.npi_of(int(i)) for i in sub.parent]
        run.csv(os.path.join("cp", f"cp_{st}_{year}.csv"), ["npi", "cp_score"], zip(npis, rep.cp_score.tolist()))
        run.svg(os.path.join("cp", f"cp_{st}_{year}.svg"),
                svg.histogram(rep.cp_score, 20, f"CP scores, {st} {year}", "CP score", 0.0, 1.0))
    run.json(f"cp_{year}.json", out)


def _gravity(run: _Run) -> None:
    _need_states(run, "gravity fitting")
    years = sorted(run.graphs)
    m = aggregate_flows([run.graphs[y][0] for y in years], [run.graphs[y][1] for y in years], years)
    fit = fit_gravity(m, pool_years=run.params("gravity")["pool_years"])
    run.json("gravity.json", {
        "years": years, "fit": fit.to_dict(),
        "flows": {"cross_state": m.cross_weight, "intrastate": m.intrastate_weight, "other": m.other_weight,
                  "unlabeled_weight": m.unlabeled_weight, "unlabeled_edges": m.unlabeled_edges},
    })
    run.table("state_flows.csv", m, "state_flows")


def _features(run: _Run) -> None:
    from .statelab import FeatureConfig, build_features, features_frame

    _need_states(run, "state features")
    p = run.params("features")
    cp_p = run.params("cp")
    fcfg = FeatureConfig(diameter_samples=p["diameter_samples"], diameter_seed=run.cfg.seed_for("features"),
                         cp=_cp_config(run), cp_network=cp_p["network"], triad_samples=p["triad_samples"],
                         triad_seed=run.cfg.seed_for("features"), skip=tuple(p["skip"]))
    vecs = []
    for year in sorted(run.graphs):
        if year in p["exclude_years"]:
            continue
        g, reg = run.graphs[year]
        for st in _states(p["states"]):
            vecs.append(build_features(st, year, g, reg, fcfg, cp_report=run.cp.get((st, year))))
    if not vecs:
        raise ValueError("no state-years left after excluding years")
    run.features = vecs
    run.table("features.csv", vecs, "features")
    df = features_frame(vecs)
    extra = [c for c in df.columns if c.startswith("T") or c == "reciprocity"]
    run.csv("features_extra.csv", ["state", "year"] + extra, df[["state", "year"] + extra].itertuples(index=False))
    run.json("features_missing.json", {f"{v.state}_{v.year}": v.missing for v in vecs})


def _feature_matrix(vecs, ids=None):
    from .statelab import FEATURE_IDS, features_frame

    df = features_frame(vecs)
    ids = list(ids or FEATURE_IDS)
    cols = [c for c in ids if np.isfinite(df[c].to_numpy(float)).all() and df[c].std(ddof=0) > 0]
    return df, cols


def _regress(run: _Run) -> None:
    from .statelab import stepwise_select, triad_groups

    if not run.cfg.health:
        raise ValueError("regress needs inputs.health")
    p = run.params("regress")
    health = health_frame(parse_health_attributes(run.cfg.resolve(run.cfg.health)))
    df, cols = _feature_matrix(run.features, p["features"])
    notes = {}
    if p["features"] is None:
        # reciprocity and triad factor-group scores join the candidate set
        if "reciprocity" in _feature_matrix(run.features, ["reciprocity"])[1]:
            cols.append("reciprocity")
        try:
            tg = triad_groups(df, p["triad_factors"])
            for k in range(tg.scores.shape[1]):
                df[f"triad_group{k + 1}"] = tg.scores[:, k]
                cols.append(f"triad_group{k + 1}")
            notes["triad_groups"] = tg.members
        except (ValueError, np.linalg.LinAlgError) as exc:
            notes["triad_groups"] = f"not used: {exc}"
    if not cols:
        raise ValueError("no complete, non-constant feature columns to use as predictors")
    health = health.reset_index()
    attrs = p["attributes"] or sorted(c for c in health.columns if c not in ("state", "year"))
    out, table = {}, []
    for attr in attrs:
        if attr not in health.columns:
            out[attr] = {"error": "attribute not in health table"}
            continue
        h = health[["state", "year", attr]].rename(columns={attr: "value"})
        data = df.merge(h, on=["state", "year"], how="inner")
        data = data[np.isfinite(data["value"].to_numpy(float))]
        counts = data.groupby("state")["year"].transform("count")
        data = data[counts >= 2].sort_values(["state", "year"])
        if data["year"].nunique() < 2 or data["state"].nunique() < 3:
            out[attr] = {"error": "needs at least 2 years and 3 states with data"}
            continue
        res = stepwise_select(data["value"].to_numpy(float), data[cols].to_numpy(float), data["year"].to_numpy(),
                              data["state"].to_numpy(), cols, alpha=p["alpha"],
                              per_year_interactions=p["per_year_interactions"])
        out[attr] = {"selected": res.selected, "interactions": res.interactions, "fit": res.fit.to_dict(),
                     "steps": [list(s) for s in res.steps]}
        table.append((attr, res.fit))
    run.json("regress.json", {"candidates": cols, "outcomes": out, "notes": notes})
    run.table("mixed_model.csv", table, "mixed_model")


def _multivariate(run: _Run) -> None:
    from .statelab import classical_mds, euclidean_distances, features_frame, kmeans, standardize, triad_groups

    p = run.params("multivariate")
    seed = run.cfg.seed_for("multivariate")
    nearest, out = [], {"years": {}}
    for year in sorted({v.year for v in run.features}):
        vecs = [v for v in run.features if v.year == year]
        df, cols = _feature_matrix(vecs)
        if len(df) < max(p["k"], 3) or len(cols) < 2:
            out["years"][str(year)] = {"error": "too few states or complete features"}
            continue
        names = df["state"].tolist()
        X = standardize(df[cols].to_numpy(float))
        km = kmeans(X, p["k"], seed=seed)
        mds = classical_mds(euclidean_distances(X), 2)
        out["years"][str(year)] = {
            "features": cols, "kmeans": {"labels": dict(zip(names, km.labels.tolist())), "sse": km.sse,
                                         "nearest": km.nearest_names(names)},
            "mds_reduced": mds.reduced,
        }
        nearest.append((year, p["k"], km.nearest_names(names)))
        coords = mds.coords if mds.coords.shape[1] else np.zeros((len(names), 1))
        run.csv(f"mds_{year}.csv", ["state", "cluster", "x", "y"],
                [[n, int(l)] + list(c) + [0.0] * (2 - len(c)) for n, l, c in zip(names, km.labels, coords.tolist())])
        run.svg(f"mds_{year}.svg", svg.scatter(coords, names, km.labels, f"MDS of state features, {year}"))
    # triad factor analysis pooled over all state-years
    try:
        tg = triad_groups(features_frame(run.features), p["n_factors"])
        out["triad_factors"] = {"groups": tg.members, "converged": tg.loadings.converged,
                                "heywood": tg.loadings.heywood, "max_abs_residual": tg.loadings.max_abs_residual}
        run.table("factor_loadings.csv", (tg.names, tg.loadings), "factor_loadings")
    except (ValueError, np.linalg.LinAlgError) as exc:
        out["triad_factors"] = {"error": str(exc)}
    run.json("multivariate.json", out)
    if nearest:
        run.table("kmeans_nearest.csv", nearest, "kmeans_nearest")


PER_YEAR: dict[str, Callable] = {
    "metrics": _metrics, "powerlaw": _powerlaw, "triads": _triads, "smallworld": _smallworld, "cp": _cp,
}
ACROSS_YEARS: dict[str, Callable] = {
    "gravity": _gravity, "features": _features, "regress": _regress, "multivariate": _multivariate,
}


def _run_analysis(run: _Run, name: str) -> bool:
    ok = True
    if name in PER_YEAR:
        for year in sorted(run.graphs):
            try:
                PER_YEAR[name](run, year)
            except Exception as exc:  # isolate per analysis and year
                log.debug("analysis %s failed:\n%s", name, traceback.format_exc())
                run.fail(name, exc, year=year)
                ok = False
    else:
        try:
            ACROSS_YEARS[name](run)
        except Exception as exc:
            log.debug("analysis %s failed:\n%s", name, traceback.format_exc())
            run.fail(name, exc)
            ok = False
    return ok


def _schedule(run: _Run, names: tuple, workers: int) -> None:
    """Run analyses respecting dependencies; independent ones share a thread pool."""
    deps = {a: [d for d in DEPENDS.get(a, ()) + SOFT_DEPENDS.get(a, ()) if d in names] for a in names}
    hard = {a: [d for d in DEPENDS.get(a, ())] for a in names}
    status: dict[str, bool] = {}
    pending = list(names)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        running: dict = {}
        while pending or running:
            for a in list(pending):
                if all(d in status for d in deps[a]):
                    pending.remove(a)
                    missing = [d for d in hard[a] if not status.get(d, False)]
                    if missing:
                        run.fail(a, RuntimeError(f"skipped: dependency {', '.join(missing)} failed or not selected"))
                        status[a] = False
                        continue
                    running[ex.submit(_run_analysis, run, a)] = a
            if not running:
                continue
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            for f in done:
                status[running.pop(f)] = f.result()


def run_pipeline(config: PipelineConfig | dict | str, out_dir: str | None = None,
                 command: list | None = None) -> PipelineResult:
    """Execute a config and write all artifacts under ``out_dir``."""
    if isinstance(config, (str, os.PathLike)):
        config = load_config(config)
    elif isinstance(config, dict):
        config = PipelineConfig.from_dict(config)
    out_dir = out_dir or config.resolve(config.output or "refnet-out")
    os.makedirs(out_dir, exist_ok=True)

    digests, early = {}, []
    paths = [("referrals", str(y), s["path"]) for y, s in config.referrals.items()]
    paths += [(k, None, getattr(config, k)) for k in ("npi_states", "health") if getattr(config, k)]
    for kind, year, p in paths:
        key = f"{kind}:{year}" if year else kind
        try:
            digests[key] = report.file_digest(config.resolve(p))
        except OSError as exc:
            digests[key] = None
            early.append(Failure("inputs", "FileNotFoundError", f"{p}: {exc.strerror}",
                                 int(year) if year else None, True))
    manifest = report.RunManifest(
        command=["pipeline"],
        config=config.snapshot(),
        input_digests=digests,
        seeds={a: config.seed_for(a) for a in config.analyses},
    )
    run = _Run(config, out_dir, manifest)
    run.failures.extend(early)
    _ingest(run)
    analyses = config.analyses
    if not run.graphs:
        for a in analyses:
            run.fail(a, RuntimeError("skipped: no graph could be built"))
    else:
        _schedule(run, analyses, n_threads())

    failures = sorted(run.failures, key=lambda f: (f.stage, f.year or 0, f.message))
    run.json("failures.json", {"failures": [f.to_dict() for f in failures]})
    manifest.finish()
    report.write_json(os.path.join(out_dir, "manifest.json"), manifest.deterministic(), run.digest)
    stats = manifest.runtime()
    stats["artifacts"] = len(run.artifacts)
    stats["argv"] = list(command or [])
    report.atomic_write_text(os.path.join(out_dir, "run_stats.json"), report.canonical_json(stats))
    return PipelineResult(out_dir, run.digest, failures, sorted(set(run.artifacts)))
