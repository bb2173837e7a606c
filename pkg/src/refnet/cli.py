"""Command-line entry point: ``refnet <subcommand> ...``.

Exit codes: 0 success, 1 input error (bad arguments, unreadable or malformed
inputs), 2 analysis failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__, report, svg
from .graph import (SubnetworkKind, assign_states, build_graph, extract_subnetwork, read_graph,
                    subregistry, write_graph)
from .ingest import IngestError, parse_referrals, read_npi_states

log = logging.getLogger("refnet")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _csv_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip()]


def _years(text: str) -> list[int]:
    out = []
    for part in _csv_list(text):
        a, sep, b = part.partition("-")
        out.extend(range(int(a), int(b) + 1) if sep else [int(a)])
    return sorted(set(out))


# ---------------------------------------------------------------------- inputs


def _add_graph_inputs(p: argparse.ArgumentParser, subnet: bool = True) -> None:
    g = p.add_argument_group("graph input (one of --graph, --graphs/--year, --referrals)")
    g.add_argument("--graph", help="binary graph cache written by 'refnet ingest' or 'refnet graph'")
    g.add_argument("--graphs", help="directory holding national_<year>.rfg caches")
    g.add_argument("--year", type=int, default=0, help="data year")
    g.add_argument("--referrals", help="referral file to ingest on the fly")
    g.add_argument("--format", default="cms", help="referral file layout (preset or delim=..;header=..;cols=..)")
    g.add_argument("--npi-states", help="NPI-to-state table used to label physicians")
    if subnet:
        g.add_argument("--subnet", default="national", help="national | intrastate:XX | induced:XX")


def _load_graph(args, need_registry: bool = False):
    """Return (graph, registry, year, input_digests) for the selected input."""
    try:
        digests = {}
        if args.graph or args.graphs:
            path = args.graph or os.path.join(args.graphs, f"national_{args.year}.rfg")
            g, reg, meta = read_graph(path)
            digests["graph"] = report.file_digest(path)
            year = args.year or int(meta.get("year", 0))
        elif args.referrals:
            stream = parse_referrals(args.referrals, args.format, args.year)
            g, reg = build_graph(stream)
            digests["referrals"] = report.file_digest(args.referrals)
            year = args.year
        else:
            raise InputError("no graph input: give --graph, --graphs with --year, or --referrals")
        if getattr(args, "npi_states", None):
            table, _ = read_npi_states(args.npi_states)
            reg, _ = assign_states(reg, g, table.for_year(year or None))
            digests["npi_states"] = report.file_digest(args.npi_states)
        if need_registry and (reg is None or not (reg.state_of >= 0).any()):
            raise InputError("this command needs state labels: pass --npi-states or a cache built with them")
        kind = SubnetworkKind.parse(getattr(args, "subnet", "national") or "national")
        if kind.kind != "national":
            if reg is None:
                raise InputError("subnetworks need state labels: pass --npi-states")
            sub = extract_subnetwork(g, reg, kind)
            reg = subregistry(reg, sub)
            g = sub
        return g, reg, year, digests
    except (IngestError, OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _manifest(args, digests: dict, seeds: dict | None = None) -> report.RunManifest:
    skip = {"out", "func", "verbose", "csv", "svg", "scores", "ccdf", "flows"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return report.RunManifest(command=[args.command], config=cfg, input_digests=digests, seeds=seeds or {})


def _emit(args, payload: dict, manifest: report.RunManifest) -> None:
    if getattr(args, "out", None):
        report.write_json(args.out, payload, manifest.digest())
    else:
        payload = dict(payload, _manifest=manifest.digest())
        sys.stdout.write(report.canonical_json(payload))


# ---------------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    from .ingest import parse_health_attributes, write_health_attributes

    try:
        stream = parse_referrals(args.referrals, args.format, args.year)
        g, reg = build_graph(stream)
        out = {"year": args.year, "ingest": stream.report.to_dict(), "nodes": g.node_count, "edges": g.edge_count}
        digests = {"referrals": report.file_digest(args.referrals)}
        if args.npi_states:
            table, nrep = read_npi_states(args.npi_states)
            reg, arep = assign_states(reg, g, table.for_year(args.year or None))
            out["npi_states"] = nrep.to_dict()
            out["assignment"] = arep.to_dict()
            digests["npi_states"] = report.file_digest(args.npi_states)
        health = None
        if args.attributes:
            health = parse_health_attributes(args.attributes)
            out["attributes"] = {"records": len(health)}
            digests["attributes"] = report.file_digest(args.attributes)
    except (IngestError, OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    m = _manifest(args, digests)
    os.makedirs(args.out, exist_ok=True)
    write_graph(os.path.join(args.out, f"national_{args.year}.rfg"), g, reg,
                meta={"year": args.year, "manifest": m.digest()})
    if health is not None:
        write_health_attributes(os.path.join(args.out, "attributes.csv"), health)
    report.write_json(os.path.join(args.out, f"ingest_{args.year}.json"), out, m.digest())
    sys.stdout.write(report.canonical_json(dict(out, _manifest=m.digest())))
    return 0


def cmd_graph(args) -> int:
    g, reg, year, digests = _load_graph(args)
    m = _manifest(args, digests)
    write_graph(args.out, g, reg, meta={"year": year, "subnet": args.subnet, "manifest": m.digest()})
    sys.stdout.write(report.canonical_json({"subnet": args.subnet, "nodes": g.node_count, "edges": g.edge_count}))
    return 0


def cmd_metrics(args) -> int:
    from .metrics import summary

    g, _, year, digests = _load_graph(args)
    _emit(args, {"year": year, "subnet": args.subnet, "metrics": summary(g)}, _manifest(args, digests))
    return 0


def cmd_powerlaw(args) -> int:
    from .powerlaw import ccdf_points, fit_powerlaw, gof_pvalue

    g, _, year, digests = _load_graph(args)
    m = _manifest(args, digests, {"bootstrap": args.seed})
    deg = g.in_degree() if args.direction == "in" else g.out_degree()
    deg = deg[deg > 0]
    fit = fit_powerlaw(deg, min_samples=args.min_samples)
    out = {"year": year, "subnet": args.subnet, "direction": args.direction, "fit": fit.to_dict()}
    if args.bootstrap:
        out["gof"] = gof_pvalue(deg, fit, n_bootstrap=args.bootstrap, seed=args.seed).to_dict()
    x, s = ccdf_points(deg)
    if args.ccdf:
        report.write_csv(args.ccdf, ["degree", "ccdf"], zip(x.tolist(), s.tolist()), m.digest())
    if args.svg:
        report.atomic_write_text(args.svg, svg.loglog_ccdf(x, s, f"{args.direction}-degree CCDF",
                                                           f"{args.direction}-degree",
                                                           fit=(fit.alpha, fit.xmin, fit.n_tail / fit.n)))
    _emit(args, out, m)
    return 0


def cmd_cp(args) -> int:
    from .coreperiphery import DEFAULT_ALPHAS, DEFAULT_BETAS, CpConfig, cp_scores

    g, reg, year, digests = _load_graph(args)
    cfg = CpConfig(alpha_grid=args.alpha_grid or DEFAULT_ALPHAS, beta_grid=args.beta_grid or DEFAULT_BETAS,
                   iterations_per_node=args.iterations_per_node, max_iterations=args.max_iterations,
                   seed=args.seed, weighted=args.weighted)
    m = _manifest(args, digests, {"anneal": args.seed})
    rep = cp_scores(g, cfg)
    out = {"year": year, "subnet": args.subnet, "nodes": g.node_count, "gini_cp": rep.gini_cp,
           "core_entropy": rep.core_entropy, "core_node": rep.core_node}
    ids = [reg.npi_of(i) for i in range(g.node_count)] if reg is not None else list(range(g.node_count))
    out["core_npi"] = ids[rep.core_node]
    if args.scores:
        report.write_csv(args.scores, ["node", "cp_score"], zip(ids, rep.cp_score.tolist()), m.digest())
    if args.svg:
        report.atomic_write_text(args.svg, svg.histogram(rep.cp_score, 20, "CP scores", "CP score", 0.0, 1.0))
    _emit(args, out, m)
    return 0


def cmd_triads(args) -> int:
    from .motifs import triad_census

    g, _, year, digests = _load_graph(args)
    m = _manifest(args, digests, {"triads": args.seed})
    c = triad_census(g, args.samples or None, args.seed)
    if args.csv:
        report.emit_table([(str(year), c)], "triad_census", args.csv, m.digest())
    _emit(args, {"year": year, "subnet": args.subnet, "census": c.to_dict()}, m)
    return 0


def cmd_null(args) -> int:
    from .metrics import summary
    from .nullmodels import generate_er, generate_ws

    if args.model == "er":
        if args.p is None:
            raise InputError("--p is required for the ER model")
        g = generate_er(args.n, args.p, args.seed)
    else:
        if args.k is None or args.beta is None:
            raise InputError("--k and --beta are required for the WS model")
        g = generate_ws(args.n, args.k, args.beta, args.seed)
    m = _manifest(args, {}, {"generator": args.seed})
    if args.out:
        write_graph(args.out, g, None, meta={"model": args.model, "manifest": m.digest()})
    s = summary(g)
    sys.stdout.write(report.canonical_json({"model": args.model, "summary": s, "_manifest": m.digest()}))
    return 0


def cmd_smallworld(args) -> int:
    from .nullmodels import small_world_test

    g, _, year, digests = _load_graph(args)
    v = small_world_test(g, args.ratio_threshold, args.path_factor, args.sample_size, args.seed)
    _emit(args, {"year": year, "subnet": args.subnet, "verdict": v.to_dict()},
          _manifest(args, digests, {"diameter": args.seed}))
    return 0


def cmd_gravity(args) -> int:
    from .gravity import aggregate_flows, fit_gravity

    try:
        paths = list(args.graph or [])
        if args.graphs:
            years = _years(args.years) if args.years else sorted(
                int(f[len("national_"):-4]) for f in os.listdir(args.graphs)
                if f.startswith("national_") and f.endswith(".rfg"))
            paths += [os.path.join(args.graphs, f"national_{y}.rfg") for y in years]
        if not paths:
            raise InputError("give --graph FILE ... or --graphs DIR")
        graphs, regs, years, digests = [], [], [], {}
        table = read_npi_states(args.npi_states)[0] if args.npi_states else None
        for p in paths:
            g, reg, meta = read_graph(p)
            y = int(meta.get("year", len(years)))
            if table is not None:
                reg, _ = assign_states(reg, g, table.for_year(y or None))
            if reg is None or not (reg.state_of >= 0).any():
                raise InputError(f"{p}: no state labels; pass --npi-states")
            graphs.append(g)
            regs.append(reg)
            years.append(y)
            digests[p] = report.file_digest(p)
    except (IngestError, OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    m = _manifest(args, digests)
    mat = aggregate_flows(graphs, regs, years)
    fit = fit_gravity(mat, pool_years=args.pool_years)
    if args.flows:
        report.emit_table(mat, "state_flows", args.flows, m.digest())
    _emit(args, {"years": years, "fit": fit.to_dict(), "cross_state_weight": mat.cross_weight}, m)
    return 0


def cmd_features(args) -> int:
    from .coreperiphery import CpConfig
    from .states import STATES_50
    from .statelab import FeatureConfig, build_features

    g, reg, year, digests = _load_graph(args, need_registry=True)
    states = [s.upper() for s in _csv_list(args.states)] if args.states else sorted(STATES_50)
    cfg = FeatureConfig(diameter_samples=args.diameter_samples, diameter_seed=args.seed,
                        cp=CpConfig(iterations_per_node=args.cp_iterations, max_iterations=args.cp_max_iterations,
                                    seed=args.seed),
                        triad_samples=args.triad_samples or None, triad_seed=args.seed,
                        skip=tuple(_csv_list(args.skip)) if args.skip else ())
    m = _manifest(args, digests, {"features": args.seed})
    vecs = [build_features(s, year, g, reg, cfg) for s in states]
    text = report.emit_table(vecs, "features", args.out, m.digest())
    if not args.out:
        sys.stdout.write(text)
    return 0


def cmd_regress(args) -> int:
    from .ingest import health_frame, parse_health_attributes
    from .statelab import fit_mixed_model, stepwise_select

    try:
        feats = report.read_csv_frame(args.features)
        health = health_frame(parse_health_attributes(args.health)).reset_index()
        if args.outcome not in health.columns:
            raise InputError(f"outcome {args.outcome!r} not in {args.health}")
        data = feats.merge(health[["state", "year", args.outcome]], on=["state", "year"])
        cands = _csv_list(args.predictors) if args.predictors else [c for c in feats.columns if c.startswith("f")]
        missing = [c for c in cands if c not in data.columns]
        if missing:
            raise InputError(f"unknown predictors: {missing}")
        digests = {"features": report.file_digest(args.features), "health": report.file_digest(args.health)}
    except (IngestError, OSError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    cols = [c for c in cands if np.isfinite(data[c].to_numpy(float)).all()]
    dropped = sorted(set(cands) - set(cols))
    data = data[np.isfinite(data[args.outcome].to_numpy(float))].sort_values(["state", "year"])
    y = data[args.outcome].to_numpy(float)
    X = data[cols].to_numpy(float)
    m = _manifest(args, digests)
    if args.predictors and not args.select:
        inter = _csv_list(args.interactions) if args.interactions else []
        fit = fit_mixed_model(y, X, data["year"].to_numpy(), data["state"].to_numpy(), cols, inter)
        out = {"fit": fit.to_dict()}
    else:
        res = stepwise_select(y, X, data["year"].to_numpy(), data["state"].to_numpy(), cols, alpha=args.alpha)
        out = {"selected": res.selected, "interactions": res.interactions, "fit": res.fit.to_dict(),
               "steps": [list(s) for s in res.steps]}
    out.update(outcome=args.outcome, candidates=cols, dropped_incomplete=dropped)
    _emit(args, out, m)
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import ConfigError, run_pipeline

    try:
        res = run_pipeline(args.config, args.out, command=sys.argv[1:])
    except ConfigError as exc:
        raise InputError(str(exc)) from exc
    for f in res.failures:
        print(f"failed: {f.stage}{'' if f.year is None else f' {f.year}'}: {f.error}: {f.message}", file=sys.stderr)
    print(f"{len(res.artifacts)} artifacts in {res.out_dir} (manifest {res.digest})")
    return res.exit_code


def cmd_synth(args) -> int:
    from .synth import SynthConfig, generate

    info = generate(args.referrals, args.npi_states,
                    SynthConfig(n_rows=args.rows, n_physicians=args.physicians, seed=args.seed,
                                stream=args.stream))
    sys.stdout.write(report.canonical_json(info))
    return 0


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="refnet", description="Physician referral network analysis")
    p.add_argument("--version", action="version", version=f"refnet {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse a referral file into a binary graph cache")
    s.add_argument("--referrals", required=True)
    s.add_argument("--format", default="cms")
    s.add_argument("--year", type=int, default=0)
    s.add_argument("--npi-states")
    s.add_argument("--attributes", help="state health attribute table to validate and copy")
    s.add_argument("--out", required=True, help="directory for national_<year>.rfg and ingest_<year>.json")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("graph", help="extract a subnetwork into a new cache")
    _add_graph_inputs(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("metrics", help="descriptive statistics")
    _add_graph_inputs(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("powerlaw", help="discrete power-law fit and bootstrap test")
    _add_graph_inputs(s)
    s.add_argument("--direction", choices=("in", "out"), default="in")
    s.add_argument("--bootstrap", type=int, default=1000, help="replicates; 0 skips the test")
    s.add_argument("--min-samples", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ccdf", help="CSV of the empirical CCDF")
    s.add_argument("--svg", help="log-log CCDF plot")
    s.add_argument("--out")
    s.set_defaults(func=cmd_powerlaw)

    s = sub.add_parser("cp", help="core-periphery scores")
    _add_graph_inputs(s)
    s.add_argument("--alpha-grid", type=_csv_floats)
    s.add_argument("--beta-grid", type=_csv_floats)
    s.add_argument("--iterations-per-node", type=int, default=10_000)
    s.add_argument("--max-iterations", type=int)
    s.add_argument("--weighted", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scores", help="CSV of per-node scores")
    s.add_argument("--svg", help="histogram of scores")
    s.add_argument("--out")
    s.set_defaults(func=cmd_cp)

    s = sub.add_parser("triads", help="triad census (exact or Monte Carlo)")
    _add_graph_inputs(s)
    s.add_argument("--samples", type=int, default=0, help="Monte Carlo draws; 0 = exact when feasible")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--csv", help="16-column census table")
    s.add_argument("--out")
    s.set_defaults(func=cmd_triads)

    s = sub.add_parser("null", help="generate an ER or WS null-model graph")
    s.add_argument("--model", choices=("er", "ws"), required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=float)
    s.add_argument("--k", type=int)
    s.add_argument("--beta", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="graph cache to write")
    s.set_defaults(func=cmd_null)

    s = sub.add_parser("smallworld", help="small-world verdict against the ER baseline")
    _add_graph_inputs(s)
    s.add_argument("--ratio-threshold", type=float, default=10.0)
    s.add_argument("--path-factor", type=float, default=4.0)
    s.add_argument("--sample-size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_smallworld)

    s = sub.add_parser("gravity", help="gravity model of state-to-state referral flows")
    s.add_argument("--graph", action="append", help="labeled graph cache (repeatable, one per year)")
    s.add_argument("--graphs", help="directory of national_<year>.rfg caches")
    s.add_argument("--years", help="years to take from --graphs, e.g. 2009-2014 or 2009,2011")
    s.add_argument("--npi-states")
    s.add_argument("--pool-years", action="store_true")
    s.add_argument("--flows", help="CSV of the state flow matrix")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gravity)

    s = sub.add_parser("features", help="state feature vectors f1..f31")
    _add_graph_inputs(s, subnet=False)
    s.add_argument("--states", help="comma-separated codes (default: all 50)")
    s.add_argument("--diameter-samples", type=int, default=64)
    s.add_argument("--triad-samples", type=int, default=0)
    s.add_argument("--cp-iterations", type=int, default=200)
    s.add_argument("--cp-max-iterations", type=int, default=2_000_000)
    s.add_argument("--skip", help="comma-separated feature ids to leave missing")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="features CSV")
    s.set_defaults(func=cmd_features, subnet="national")

    s = sub.add_parser("regress", help="random-intercept model of a health attribute on features")
    s.add_argument("--features", required=True, help="features CSV from 'refnet features'")
    s.add_argument("--attributes", "--health", dest="health", required=True,
                   help="long state,year,attribute,value table")
    s.add_argument("--outcome", required=True)
    s.add_argument("--predictors", help="comma-separated feature ids (default: all f*)")
    s.add_argument("--interactions", help="predictors that also get a time interaction")
    s.add_argument("--select", action="store_true", help="stepwise selection over --predictors")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out")
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("pipeline", help="run a declarative config end to end")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="artifact directory (default: config 'output')")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("synth", help="write a synthetic CMS-format referral file")
    s.add_argument("--rows", type=int, default=100_000)
    s.add_argument("--physicians", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stream", type=int, default=0, help="referral stream (e.g. one per year) over the same physicians")
    s.add_argument("--referrals", required=True)
    s.add_argument("--npi-states", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args))
    except InputError as exc:
        print(f"refnet {args.command}: input error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # analysis failure
        log.debug("analysis failure", exc_info=True)
        print(f"refnet {args.command}: analysis failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
