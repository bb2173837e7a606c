"""Parsing of CMS shared-patient files, NPI-by-state tables and state health attributes.

Referral files are streamed in byte blocks and parsed with pandas' C reader, so a
50M-row vintage never has to sit in memory as text. NPIs are validated as
exactly ten ASCII digits and carried internally as int64; they are always
rendered back zero-padded to ten characters.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

from .states import STATE_CODES, STATE_INDEX

log = logging.getLogger(__name__)

MALFORMED_ABORT_FRACTION = 0.01
_BLOCK_BYTES = 64 << 20
_BLANK_LINE = re.compile(rb"(?m)^[ \t\r]*\n")


class IngestError(Exception):
    """Input file is unreadable or does not match the declared format."""


def format_npi(npi: int) -> str:
    return f"{int(npi):010d}"


@dataclass(frozen=True, slots=True)
class RawReferralRecord:
    from_npi: str
    to_npi: str
    shared_count: int
    year: int


@dataclass(frozen=True, slots=True)
class NpiStateRecord:
    npi: str
    state: str
    year: int | None = None


@dataclass(frozen=True, slots=True)
class StateHealthRecord:
    state: str
    year: int
    attribute_name: str
    value: float


@dataclass(frozen=True)
class FormatSpec:
    """Layout of one referral-file vintage.

    ``columns`` names every field of a row in order; ``from``, ``to`` and
    ``count`` must each appear once, anything else is ignored (use ``_``).
    """

    delimiter: str = ","
    header: bool = False
    columns: tuple[str, ...] = ("from", "to", "count")

    def __post_init__(self):
        for name in ("from", "to", "count"):
            if self.columns.count(name) != 1:
                raise ValueError(f"format columns must contain {name!r} exactly once: {self.columns}")
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")

    @property
    def n_fields(self) -> int:
        return len(self.columns)

    @classmethod
    def parse(cls, spec: "str | FormatSpec | None") -> "FormatSpec":
        """Accept a preset name (``cms``, ``cms5``, ``cms-header``) or
        ``delim=,;header=0;cols=from,to,count``."""
        if spec is None:
            return cls()
        if isinstance(spec, FormatSpec):
            return spec
        spec = spec.strip()
        if spec in _PRESETS:
            return _PRESETS[spec]
        kw = {}
        for part in spec.split(";"):
            if not part.strip():
                continue
            key, _, val = part.partition("=")
            key = key.strip().lower()
            if key in ("delim", "delimiter"):
                kw["delimiter"] = {"tab": "\t", "\\t": "\t", "comma": ",", "pipe": "|"}.get(val, val)
            elif key == "header":
                kw["header"] = val.strip().lower() in ("1", "true", "yes", "y")
            elif key in ("cols", "columns"):
                kw["columns"] = tuple(c.strip().lower() for c in val.split(","))
            else:
                raise ValueError(f"unknown format key {key!r} in {spec!r}")
        return cls(**kw)

    def describe(self) -> str:
        delim = {"\t": "tab"}.get(self.delimiter, self.delimiter)
        return f"delim={delim};header={int(self.header)};cols={','.join(self.columns)}"


_PRESETS = {
    "cms": FormatSpec(),
    "cms3": FormatSpec(),
    "cms5": FormatSpec(columns=("from", "to", "count", "_", "_")),
    "cms-header": FormatSpec(header=True),
}


@dataclass
class IngestReport:
    path: str
    format: str
    year: int
    rows_total: int = 0
    records: int = 0
    malformed: int = 0
    self_loops: int = 0
    malformed_examples: list[str] = field(default_factory=list)

    @property
    def malformed_fraction(self) -> float:
        return self.malformed / self.rows_total if self.rows_total else 0.0

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "format": self.format,
            "year": self.year,
            "rows_total": self.rows_total,
            "records": self.records,
            "malformed": self.malformed,
            "self_loops": self.self_loops,
            "malformed_fraction": self.malformed_fraction,
            "malformed_examples": self.malformed_examples,
        }


@dataclass(frozen=True)
class ReferralChunk:
    """Validated records of one block as parallel arrays."""

    src: np.ndarray
    dst: np.ndarray
    count: np.ndarray
    year: int

    def __len__(self) -> int:
        return len(self.src)

    def records(self) -> Iterator[RawReferralRecord]:
        for s, d, c in zip(self.src.tolist(), self.dst.tolist(), self.count.tolist()):
            yield RawReferralRecord(format_npi(s), format_npi(d), c, self.year)


def _read_blocks(path: str, block_bytes: int) -> Iterator[bytes]:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        tail = b""
        while True:
            buf = fh.read(block_bytes)
            if not buf:
                if tail:
                    yield tail
                return
            buf = tail + buf
            cut = buf.rfind(b"\n")
            if cut < 0:
                tail = buf
                continue
            tail = buf[cut + 1:]
            yield buf[: cut + 1]


def _count_rows(block: bytes) -> int:
    n = block.count(b"\n") - len(_BLANK_LINE.findall(block))
    if not block.endswith(b"\n"):
        last = block[block.rfind(b"\n") + 1:]
        n += 1 if last.strip() else 0
    return n


def _valid_npi(col: pd.Series) -> np.ndarray:
    s = col.str.strip()
    return s.str.fullmatch(r"[0-9]{10}").to_numpy(dtype=bool)


class ReferralStream:
    """Iterable of :class:`RawReferralRecord` over one referral file.

    ``chunks()`` yields the same data as numpy blocks; ``report`` is complete
    once the stream is exhausted. Exceeding 1% malformed rows raises
    :class:`IngestError` at the end of the pass.
    """

    def __init__(self, path: str | os.PathLike, format_spec=None, year: int = 0,
                 block_bytes: int = _BLOCK_BYTES, max_malformed_fraction: float = MALFORMED_ABORT_FRACTION):
        self.path = os.fspath(path)
        self.fmt = FormatSpec.parse(format_spec)
        self.year = int(year)
        self.block_bytes = block_bytes
        self.max_malformed_fraction = max_malformed_fraction
        self.report = IngestReport(self.path, self.fmt.describe(), self.year)
        if not os.path.isfile(self.path):
            raise IngestError(f"cannot read {self.path}: no such file")

    def __iter__(self) -> Iterator[RawReferralRecord]:
        for chunk in self.chunks():
            yield from chunk.records()

    def chunks(self) -> Iterator[ReferralChunk]:
        fmt = self.fmt
        rep = self.report = IngestReport(self.path, fmt.describe(), self.year)
        i_from, i_to, i_cnt = (fmt.columns.index(c) for c in ("from", "to", "count"))
        first = True
        for block in _read_blocks(self.path, self.block_bytes):
            if first and fmt.header:
                nl = block.find(b"\n")
                block = block[nl + 1:] if nl >= 0 else b""
            first = False
            n_rows = _count_rows(block)
            if n_rows == 0:
                continue
            try:
                df = pd.read_csv(
                    io.BytesIO(block), sep=fmt.delimiter, header=None,
                    names=range(fmt.n_fields + 1), dtype=str, na_filter=False,
                    on_bad_lines="skip", skip_blank_lines=True, engine="c",
                    skipinitialspace=True, quoting=csv.QUOTE_NONE,
                )
            except Exception as exc:  # pandas raises several parser error types
                raise IngestError(f"{self.path}: unparseable block ({exc})") from exc
            rep.rows_total += n_rows
            n_skipped = n_rows - len(df)
            ok = (df[fmt.n_fields] == "").to_numpy()
            if fmt.n_fields > 1:
                ok &= (df[fmt.n_fields - 1] != "").to_numpy()
            ok &= _valid_npi(df[i_from]) & _valid_npi(df[i_to])
            cnt_s = df[i_cnt].str.strip()
            ok &= cnt_s.str.fullmatch(r"[0-9]{1,17}").to_numpy(dtype=bool)
            src = np.zeros(len(df), dtype=np.int64)
            dst = np.zeros(len(df), dtype=np.int64)
            cnt = np.zeros(len(df), dtype=np.int64)
            if ok.any():
                src[ok] = df[i_from][ok].str.strip().astype(np.int64).to_numpy()
                dst[ok] = df[i_to][ok].str.strip().astype(np.int64).to_numpy()
                cnt[ok] = cnt_s[ok].astype(np.int64).to_numpy()
            ok &= cnt >= 1
            bad = ~ok
            if bad.any() and len(rep.malformed_examples) < 10:
                rows = df[bad].head(10 - len(rep.malformed_examples))
                for row in rows.itertuples(index=False):
                    rep.malformed_examples.append(fmt.delimiter.join(v for v in row if v != ""))
            loops = ok & (src == dst)
            keep = ok & ~loops
            rep.malformed += int(bad.sum()) + n_skipped
            rep.self_loops += int(loops.sum())
            rep.records += int(keep.sum())
            if keep.any():
                yield ReferralChunk(src[keep], dst[keep], cnt[keep], self.year)
        if rep.rows_total and rep.malformed_fraction > self.max_malformed_fraction:
            raise IngestError(
                f"{self.path}: {rep.malformed} of {rep.rows_total} rows malformed "
                f"({100 * rep.malformed_fraction:.2f}%); check the format spec ({fmt.describe()}). "
                f"Examples: {rep.malformed_examples[:3]}"
            )
        log.info("ingested %s: %d records, %d malformed, %d self-loops",
                 self.path, rep.records, rep.malformed, rep.self_loops)


def parse_referrals(path, format_spec=None, year: int = 0, **kw) -> ReferralStream:
    return ReferralStream(path, format_spec, year, **kw)


def write_referrals(path, records: Iterable[RawReferralRecord], format_spec=None) -> None:
    fmt = FormatSpec.parse(format_spec)
    with open(path, "w", newline="") as fh:
        if fmt.header:
            fh.write(fmt.delimiter.join(fmt.columns) + "\n")
        for r in records:
            fields = []
            for c in fmt.columns:
                fields.append({"from": r.from_npi, "to": r.to_npi, "count": str(r.shared_count)}.get(c, ""))
            fh.write(fmt.delimiter.join(fields) + "\n")


# --------------------------------------------------------------------------- NPI -> state


@dataclass
class NpiStateReport:
    path: str
    rows_total: int = 0
    records: int = 0
    duplicates: int = 0
    rejected: list[tuple[int, str, str]] = field(default_factory=list)  # (line, value, reason)
    unknown_states: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "rows_total": self.rows_total,
            "records": self.records,
            "duplicates": self.duplicates,
            "rejected": len(self.rejected),
            "rejected_examples": [list(r) for r in self.rejected[:20]],
            "unknown_states": dict(sorted(self.unknown_states.items())),
        }


@dataclass
class NpiStateTable:
    """Deduplicated (npi, state[, year]) rows as arrays; ``state`` indexes STATE_CODES."""

    npi: np.ndarray
    state: np.ndarray
    year: np.ndarray  # -1 where absent

    def __len__(self) -> int:
        return len(self.npi)

    def records(self) -> list[NpiStateRecord]:
        return [
            NpiStateRecord(format_npi(n), STATE_CODES[s], None if y < 0 else int(y))
            for n, s, y in zip(self.npi.tolist(), self.state.tolist(), self.year.tolist())
        ]

    @classmethod
    def from_records(cls, records: Iterable[NpiStateRecord]) -> "NpiStateTable":
        recs = list(records)
        npi = np.array([int(r.npi) for r in recs], dtype=np.int64)
        st = np.array([STATE_INDEX[r.state] for r in recs], dtype=np.int16)
        yr = np.array([-1 if r.year is None else r.year for r in recs], dtype=np.int32)
        return _dedupe(npi, st, yr)[0]

    def for_year(self, year: int | None) -> "NpiStateTable":
        if year is None or not (self.year >= 0).any():
            return self
        keep = (self.year == year) | (self.year < 0)
        return NpiStateTable(self.npi[keep], self.state[keep], self.year[keep])


def _dedupe(npi, st, yr):
    key = np.stack([npi, st.astype(np.int64), yr.astype(np.int64)], axis=1)
    _, first = np.unique(key, axis=0, return_index=True)
    first.sort()
    n_dup = len(npi) - len(first)
    return NpiStateTable(npi[first], st[first], yr[first]), n_dup


def _find_col(header: list[str], names: tuple[str, ...]) -> int | None:
    low = [h.strip().lower() for h in header]
    for n in names:
        if n in low:
            return low.index(n)
    return None


def read_npi_states(path, delimiter: str = ",") -> tuple[NpiStateTable, NpiStateReport]:
    """Read an NPI-by-state table. A header row is detected when its first
    field is not a ten-digit number; columns are then located by name
    (``npi``; ``state``/``pstate``/``provider_state``; optional ``year``)."""
    path = os.fspath(path)
    rep = NpiStateReport(path)
    try:
        df = pd.read_csv(path, sep=delimiter, header=None, dtype=str, na_filter=False,
                         skip_blank_lines=True, engine="c", quoting=csv.QUOTE_MINIMAL)
    except (OSError, pd.errors.EmptyDataError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    line0 = 1
    i_npi, i_state, i_year = 0, 1, None
    first = [str(v) for v in df.iloc[0].tolist()] if len(df) else []
    if first and not re.fullmatch(r"[0-9]{10}", first[0].strip()):
        i_npi = _find_col(first, ("npi",))
        i_state = _find_col(first, ("state", "pstate", "provider_state", "st"))
        i_year = _find_col(first, ("year",))
        if i_npi is None or i_state is None:
            raise IngestError(f"{path}: header {first} lacks npi/state columns")
        df = df.iloc[1:]
        line0 = 2
    if df.shape[1] < 2:
        raise IngestError(f"{path}: expected at least two columns")
    rep.rows_total = len(df)
    npi_s = df[i_npi].astype(str).str.strip()
    st_s = df[i_state].astype(str).str.strip().str.upper()
    ok_npi = _valid_npi(npi_s)
    st_idx = st_s.map(STATE_INDEX)
    ok_state = st_idx.notna().to_numpy()
    if i_year is not None:
        yr_s = df[i_year].astype(str).str.strip()
        # a blank year cell means the row applies to every year
        ok_year = (yr_s.str.fullmatch(r"[0-9]{1,4}") | (yr_s == "")).to_numpy(dtype=bool)
    else:
        yr_s = None
        ok_year = np.ones(len(df), dtype=bool)
    ok = ok_npi & ok_state & ok_year
    for pos in np.flatnonzero(~ok)[:1000]:
        line = int(pos) + line0
        if not ok_npi[pos]:
            rep.rejected.append((line, npi_s.iloc[pos], "bad npi"))
        elif not ok_state[pos]:
            rep.rejected.append((line, st_s.iloc[pos], "unknown state"))
        else:
            rep.rejected.append((line, yr_s.iloc[pos], "bad year"))
    bad_states = st_s[ok_npi & ~ok_state]
    rep.unknown_states = {k: int(v) for k, v in bad_states.value_counts().items()}
    npi = npi_s[ok].astype(np.int64).to_numpy()
    st = st_idx[ok].astype(np.int16).to_numpy()
    yr = (yr_s[ok].replace("", "-1").astype(np.int32).to_numpy() if yr_s is not None
          else np.full(len(npi), -1, np.int32))
    table, rep.duplicates = _dedupe(npi, st, yr)
    rep.records = len(table)
    if not len(table):
        raise IngestError(f"{path}: no valid npi/state rows (wrong file?)")
    if rep.unknown_states:
        log.warning("%s: unknown state codes %s", path, rep.unknown_states)
    return table, rep


def parse_npi_states(path, delimiter: str = ",") -> list[NpiStateRecord]:
    return read_npi_states(path, delimiter)[0].records()


def write_npi_states(path, records: Iterable[NpiStateRecord]) -> None:
    recs = list(records)
    with_year = any(r.year is not None for r in recs)
    with open(path, "w", newline="") as fh:
        fh.write("npi,state,year\n" if with_year else "npi,state\n")
        for r in recs:
            fh.write(f"{r.npi},{r.state},{'' if r.year is None else r.year}\n" if with_year
                     else f"{r.npi},{r.state}\n")


# --------------------------------------------------------------------------- health attributes


def parse_health_attributes(path) -> list[StateHealthRecord]:
    """Long-format ``state,year,attribute,value`` table; keys must be unique."""
    path = os.fspath(path)
    try:
        df = pd.read_csv(path, dtype=str, na_filter=False, skipinitialspace=True)
    except (OSError, pd.errors.EmptyDataError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    cols = [c.strip().lower() for c in df.columns]
    need = ["state", "year", "attribute", "value"]
    if cols[:4] != need:
        raise IngestError(f"{path}: header must be {','.join(need)}, got {','.join(cols)}")
    out = []
    seen: dict[tuple[str, int, str], int] = {}
    for line, (st, yr, attr, val) in enumerate(df.iloc[:, :4].itertuples(index=False, name=None), start=2):
        st = st.strip().upper()
        if st not in STATE_INDEX:
            raise IngestError(f"{path}:{line}: unknown state {st!r}")
        try:
            yr_i = int(yr)
            v = float(val)
        except ValueError:
            raise IngestError(f"{path}:{line}: bad year/value ({yr!r}, {val!r})") from None
        if not math.isfinite(v):
            raise IngestError(f"{path}:{line}: non-finite value for ({st},{yr_i},{attr})")
        key = (st, yr_i, attr.strip())
        if key in seen:
            raise IngestError(f"{path}:{line}: duplicate key ({st},{yr_i},{key[2]}) first seen on line {seen[key]}")
        seen[key] = line
        out.append(StateHealthRecord(st, yr_i, key[2], v))
    return out


def write_health_attributes(path, records: Iterable[StateHealthRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("state,year,attribute,value\n")
        for r in records:
            fh.write(f"{r.state},{r.year},{r.attribute_name},{r.value!r}\n")


def health_frame(records: Iterable[StateHealthRecord]) -> pd.DataFrame:
    """Wide table indexed by (state, year) with one column per attribute."""
    df = pd.DataFrame([(r.state, r.year, r.attribute_name, r.value) for r in records],
                      columns=["state", "year", "attribute", "value"])
    return df.pivot(index=["state", "year"], columns="attribute", values="value").sort_index()
