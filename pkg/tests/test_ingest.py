from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from refnet.ingest import (FormatSpec, IngestError, NpiStateRecord, RawReferralRecord, StateHealthRecord,
                           parse_health_attributes, parse_npi_states, parse_referrals, read_npi_states,
                           write_health_attributes, write_npi_states, write_referrals)
from refnet.states import STATES_50


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_row_maps_to_record(tmp_path):
    p = _write(tmp_path, "r.csv", "1234567890,9876543210,17\n")
    recs = list(parse_referrals(p, year=2009))
    assert recs == [RawReferralRecord("1234567890", "9876543210", 17, 2009)]


def test_self_loop_dropped_and_counted(tmp_path):
    p = _write(tmp_path, "r.csv", "1234567890,1234567890,5\n1234567890,9876543210,11\n")
    stream = parse_referrals(p)
    recs = list(stream)
    assert len(recs) == 1
    assert stream.report.self_loops == 1
    assert stream.report.rows_total == 2


def test_malformed_rows_counted(tmp_path):
    good = "".join(f"{1000000000 + i},{1000000001 + i},12\n" for i in range(300))
    p = _write(tmp_path, "r.csv", good + "12345,9876543210,3\n1234567890,9876543210,0\n")
    stream = parse_referrals(p)
    recs = list(stream)
    rep = stream.report
    assert rep.malformed == 2
    assert rep.rows_total == rep.records + rep.malformed + rep.self_loops
    assert len(recs) == 300


def test_too_many_malformed_aborts(tmp_path):
    p = _write(tmp_path, "r.csv", "1234567890,9876543210,3\nnot,a,row\n")
    with pytest.raises(IngestError, match="malformed"):
        list(parse_referrals(p))


def test_missing_file_is_ingest_error(tmp_path):
    with pytest.raises(IngestError):
        parse_referrals(tmp_path / "nope.csv")


def test_format_spec_five_columns_with_header(tmp_path):
    p = _write(tmp_path, "r.tsv", "a\tb\tc\td\te\n1234567890\t9876543210\t14\tx\ty\n")
    fmt = FormatSpec.parse("delim=tab;header=1;cols=from,to,count,_,_")
    recs = list(parse_referrals(p, fmt))
    assert [(r.from_npi, r.shared_count) for r in recs] == [("1234567890", 14)]
    assert FormatSpec.parse(fmt.describe()) == fmt


def test_format_spec_rejects_missing_column():
    with pytest.raises(ValueError):
        FormatSpec(columns=("from", "count"))


def test_small_blocks_match_single_block(tmp_path):
    rows = "".join(f"{1000000000 + i % 97},{1000000100 + i % 89},{11 + i % 7}\n" for i in range(2000))
    p = _write(tmp_path, "r.csv", rows)
    a = list(parse_referrals(p))
    b = list(parse_referrals(p, block_bytes=257))
    assert a == b


def test_npi_state_row_and_whitelist(tmp_path):
    p = _write(tmp_path, "s.csv", "1234567890,NH\n1234567891,ZZ\n")
    table, rep = read_npi_states(p)
    assert table.records() == [NpiStateRecord("1234567890", "NH")]
    assert rep.rejected[0][1:] == ("ZZ", "unknown state")
    assert rep.unknown_states == {"ZZ": 1}


def test_npi_state_dedupe_matches_sort_unique(tmp_path):
    rng = np.random.default_rng(3)
    npis = rng.integers(1_000_000_000, 1_000_000_020, 200)
    sts = rng.choice(["NH", "VT", "ME"], 200)
    p = _write(tmp_path, "s.csv", "npi,state\n" + "".join(f"{n},{s}\n" for n, s in zip(npis, sts)))
    table, rep = read_npi_states(p)
    oracle = sorted(set(zip(npis.tolist(), sts.tolist())))
    got = sorted((int(r.npi), r.state) for r in table.records())
    assert got == oracle
    assert rep.duplicates == 200 - len(oracle)


def test_health_record_and_duplicate_key(tmp_path):
    p = _write(tmp_path, "h.csv", "state,year,attribute,value\nNH,2012,mortality,0.8\n")
    assert parse_health_attributes(p) == [StateHealthRecord("NH", 2012, "mortality", 0.8)]
    q = _write(tmp_path, "h2.csv", "state,year,attribute,value\nNH,2012,mortality,0.8\nNH,2012,mortality,0.9\n")
    with pytest.raises(IngestError, match=r"NH,2012,mortality"):
        parse_health_attributes(q)


def test_health_count_identity(tmp_path):
    recs = [StateHealthRecord(s, y, "mortality", float(i)) for i, (s, y) in
            enumerate((s, y) for s in sorted(STATES_50) for y in range(2009, 2015))]
    p = tmp_path / "h.csv"
    write_health_attributes(p, recs)
    assert len(parse_health_attributes(p)) == 300


def test_health_rejects_non_finite(tmp_path):
    p = _write(tmp_path, "h.csv", "state,year,attribute,value\nNH,2012,mortality,nan\n")
    with pytest.raises(IngestError):
        parse_health_attributes(p)


npi = st.integers(1_000_000_000, 9_999_999_999).map(lambda v: f"{v:010d}")
referral = st.builds(lambda a, b, c: (a, b, c), npi, npi, st.integers(1, 10 ** 6))


@given(st.lists(referral, min_size=1, max_size=60))
def test_referral_round_trip_and_conservation(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("rt")
    recs = [RawReferralRecord(a, b, c, 2010) for a, b, c in rows]
    p = d / "r.csv"
    write_referrals(p, recs)
    stream = parse_referrals(p, year=2010)
    back = list(stream)
    rep = stream.report
    assert back == [r for r in recs if r.from_npi != r.to_npi]
    assert rep.rows_total == rep.records + rep.malformed + rep.self_loops
    q = d / "r2.csv"
    write_referrals(q, back)
    assert list(parse_referrals(q, year=2010)) == back


@given(st.lists(st.tuples(npi, st.sampled_from(sorted(STATES_50)), st.one_of(st.none(), st.integers(2009, 2015))),
                min_size=1, max_size=40))
def test_npi_state_round_trip(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("ns")
    has_year = any(y is not None for *_, y in rows)
    recs = [NpiStateRecord(n, s, y if has_year else None) for n, s, y in rows]
    p = d / "s.csv"
    write_npi_states(p, recs)
    once = parse_npi_states(p)
    write_npi_states(p, once)
    assert parse_npi_states(p) == once
    assert set(once) == set(recs)
