"""Artifact writing: canonical JSON/CSV, run manifests and table layouts.

Every artifact carries the digest of the run manifest (a ``_manifest`` key in
JSON, a ``# manifest:`` first line in CSV). The digest covers only fields that
determine the analytical output, so reruns with the same inputs, config and
seeds produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import resource
import sys
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

from . import __version__, _accel

# ---------------------------------------------------------------------- atomic io


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj: dict, digest: str | None = None) -> None:
    payload = dict(obj)
    if digest is not None:
        payload["_manifest"] = digest
    atomic_write_text(path, canonical_json(payload))


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return "" if math.isnan(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(header: list, rows: Iterable[list], digest: str | None = None) -> str:
    buf = io.StringIO()
    if digest is not None:
        buf.write(f"# manifest: {digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_csv(path, header: list, rows: Iterable[list], digest: str | None = None) -> None:
    atomic_write_text(path, csv_text(header, rows, digest))


def read_csv_frame(path):
    import pandas as pd

    return pd.read_csv(path, comment="#")


# ---------------------------------------------------------------------- manifest


def file_digest(path, chunk: int = 1 << 24) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            b = fh.read(chunk)
            if not b:
                break
            h.update(b)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: list
    config: dict
    input_digests: dict
    seeds: dict
    version: str = __version__
    backend: str = field(default_factory=_accel.backend)
    # runtime fields, excluded from the digest
    started: float = field(default_factory=time.time)
    wall_seconds: float = 0.0
    peak_rss_mb: float = 0.0

    def deterministic(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "input_digests": self.input_digests,
            "seeds": self.seeds,
            "version": self.version,
            "backend": self.backend,
        }

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.deterministic()).encode()).hexdigest()[:16]

    def finish(self) -> None:
        self.wall_seconds = time.time() - self.started
        self.peak_rss_mb = peak_rss_mb()

    def runtime(self) -> dict:
        return {
            "manifest": self.digest(),
            "wall_seconds": self.wall_seconds,
            "peak_rss_mb": self.peak_rss_mb,
            "python": sys.version.split()[0],
            "platform": platform.platform(),
        }


def peak_rss_mb() -> float:
    """Peak resident set size of this process and its finished children."""
    self_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    child_kb = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    return max(self_kb, child_kb) / 1024.0


# ---------------------------------------------------------------------- tables


def _triad_table(results) -> tuple[list, list]:
    from .motifs import TriadCensus

    if isinstance(results, TriadCensus):
        results = [("all", results)]
    header = ["label"] + [f"T{i}" for i in range(1, 17)]
    rows = []
    for label, c in results:
        vals = c.tallies if c.tallies is not None else c.counts
        rows.append([label] + [int(v) if float(v).is_integer() else float(v) for v in vals])
    return header, rows


def _powerlaw_pvalue_table(results) -> tuple[list, list]:
    """``results``: iterable of (state, year, direction, p). Years become
    columns; one row per state and direction plus a count row per direction."""
    recs = list(results)
    years = sorted({r[1] for r in recs})
    header = ["state", "direction"] + [str(y) for y in years]
    cell = {(s, d, y): p for s, y, d, p in recs}
    rows = []
    for d in sorted({r[2] for r in recs}):
        states = sorted({r[0] for r in recs if r[2] == d})
        for s in states:
            rows.append([s, d] + [cell.get((s, d, y)) for y in years])
        counts = []
        for y in years:
            ps = [cell[(s, d, y)] for s in states if (s, d, y) in cell and cell[(s, d, y)] is not None]
            counts.append(sum(1 for p in ps if p > 0.05))
        rows.append(["n_states_p>0.05", d] + counts)
    return header, rows


def _features_table(results) -> tuple[list, list]:
    from .statelab.features import FEATURE_IDS

    header = ["state", "year"] + list(FEATURE_IDS)
    rows = [v.row(FEATURE_IDS) for v in sorted(results, key=lambda v: (v.year, v.state))]
    return header, rows


def _correlation_table(results) -> tuple[list, list]:
    return ["feature", "attribute", "r", "r_squared", "n"], [list(r) for r in results]


def _flows_table(results) -> tuple[list, list]:
    rows = results.to_csv_rows()
    return rows[0], rows[1:]


def _loadings_table(results) -> tuple[list, list]:
    names, fl = results
    header = ["variable"] + [f"factor{k + 1}" for k in range(fl.n_factors)] + ["communality", "group"]
    groups = fl.groups()
    rows = [[n] + fl.loadings[i].tolist() + [float(fl.communalities[i]), groups[i] + 1] for i, n in enumerate(names)]
    return header, rows


def _nearest_table(results) -> tuple[list, list]:
    """``results``: iterable of (year, k, [nearest state per centroid])."""
    rows = [[y, k, " ".join(states)] for y, k, states in results]
    return ["year", "k", "nearest_states"], rows


def _mixed_table(results) -> tuple[list, list]:
    """``results``: iterable of (outcome, MixedModelFit)."""
    rows = []
    for outcome, fit in results:
        for p in fit.predictors:
            rows.append([outcome, p, fit.beta1[p], fit.se.get(p)])
        for name, v in fit.beta2.items():
            rows.append([outcome, name, v, fit.se.get(name)])
    return ["outcome", "term", "estimate", "se"], rows


TABLES: dict[str, Callable] = {
    "triad_census": _triad_table,
    "powerlaw_pvalues": _powerlaw_pvalue_table,
    "features": _features_table,
    "correlations": _correlation_table,
    "state_flows": _flows_table,
    "factor_loadings": _loadings_table,
    "kmeans_nearest": _nearest_table,
    "mixed_model": _mixed_table,
}


def emit_table(results, table_id: str, path=None, digest: str | None = None) -> str:
    """Render ``results`` in the layout registered under ``table_id`` as CSV
    text; also written to ``path`` when given."""
    try:
        fn = TABLES[table_id]
    except KeyError:
        raise ValueError(f"unknown table id {table_id!r}; known: {', '.join(sorted(TABLES))}") from None
    header, rows = fn(results)
    text = csv_text(header, rows, digest)
    if path is not None:
        atomic_write_text(path, text)
    return text
