from __future__ import annotations

import os
import re

import pytest
from hypothesis import HealthCheck, settings

from refnet import _accel

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BACKENDS = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]

# criterion number -> (outcome, detail line)
ACCEPTANCE: dict[int, list] = {}
DETAILS: dict[int, str] = {}


_CRIT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


@pytest.fixture(params=BACKENDS)
def backend(request):
    with _accel.backend_context(request.param):
        yield request.param


@pytest.fixture
def record_criterion():
    """Attach a one-line measurement to the current criterion."""
    def rec(n: int, text: str) -> None:
        DETAILS[n] = text
    return rec


def pytest_runtest_logreport(report):
    m = _CRIT.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            outcome = "XFAIL" if report.skipped else "XPASS"
        else:
            outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        ACCEPTANCE.setdefault(n, []).append(outcome)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        outs = ACCEPTANCE[n]
        if "FAIL" in outs or "XPASS" in outs:
            verdict = "FAIL"
        elif all(o == "SKIP" for o in outs):
            verdict = "SKIP"
        elif "XFAIL" in outs:
            verdict = "PASS (with documented xfail)"
        else:
            verdict = "PASS"
        tr.write_line(f"criterion {n}: {verdict} [{', '.join(outs)}] {DETAILS.get(n, '')}")


SYNTH_YEARS = (2009, 2010, 2011)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Three years of synthetic referrals over one physician population, the
    NPI-state table and a long-format health table."""
    import numpy as np

    from refnet.ingest import StateHealthRecord, write_health_attributes
    from refnet.states import STATES_50
    from refnet.synth import SynthConfig, generate

    d = tmp_path_factory.mktemp("synth")
    for k, year in enumerate(SYNTH_YEARS):
        generate(d / f"referrals_{year}.csv", d / "npi_states.csv", SynthConfig(n_rows=20_000, seed=3, stream=k))
    rng = np.random.default_rng(0)
    recs = [StateHealthRecord(s, y, a, float(rng.normal(10, 2)))
            for s in sorted(STATES_50) for y in SYNTH_YEARS for a in ("discharges", "mortality")]
    write_health_attributes(d / "health.csv", recs)
    return d
