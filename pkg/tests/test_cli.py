from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

from conftest import SYNTH_YEARS
from refnet.cli import main


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def cache(synth_dir, tmp_path_factory):
    d = tmp_path_factory.mktemp("cache")
    for y in SYNTH_YEARS:
        assert main(["ingest", "--referrals", str(synth_dir / f"referrals_{y}.csv"), "--year", str(y),
                     "--npi-states", str(synth_dir / "npi_states.csv"), "--out", str(d)]) == 0
    return d


def test_ingest_outputs(cache):
    assert {f"national_{y}.rfg" for y in SYNTH_YEARS} <= set(os.listdir(cache))
    info = json.load(open(cache / "ingest_2009.json"))
    assert info["ingest"]["rows_total"] == 20_000 and info["assignment"]["unlabeled"] == 0


def test_metrics_and_subnet(capsys, cache):
    code, out, _ = _run(capsys, "metrics", "--graphs", cache, "--year", 2010, "--subnet", "intrastate:CA")
    assert code == 0
    d = json.loads(out)
    assert d["subnet"] == "intrastate:CA" and d["metrics"]["node_count"] > 0 and "_manifest" in d


def test_triads_csv(capsys, cache, tmp_path):
    code, out, _ = _run(capsys, "triads", "--graph", cache / "national_2009.rfg", "--samples", 20_000,
                        "--csv", tmp_path / "t.csv")
    assert code == 0 and json.loads(out)["census"]["n_samples"] == 20_000
    assert (tmp_path / "t.csv").read_text().splitlines()[1].startswith("label,T1,")


def test_powerlaw_and_outputs(capsys, cache, tmp_path):
    code, _, _ = _run(capsys, "powerlaw", "--graph", cache / "national_2009.rfg", "--bootstrap", 100,
                      "--svg", tmp_path / "c.svg", "--ccdf", tmp_path / "c.csv", "--out", tmp_path / "p.json")
    assert code == 0
    p = json.load(open(tmp_path / "p.json"))
    assert 0 <= p["gof"]["p_value"] <= 1 and (tmp_path / "c.svg").read_text().startswith("<svg")


def test_cp_scores(capsys, cache, tmp_path):
    code, out, _ = _run(capsys, "cp", "--graph", cache / "national_2011.rfg", "--subnet", "intrastate:VT",
                        "--iterations-per-node", 20, "--scores", tmp_path / "s.csv")
    assert code == 0 and json.loads(out)["nodes"] > 0


def test_gravity_and_smallworld(capsys, cache):
    code, out, _ = _run(capsys, "gravity", "--graphs", cache, "--years", "2009-2011")
    assert code == 0 and json.loads(out)["years"] == list(SYNTH_YEARS)
    code, out, _ = _run(capsys, "smallworld", "--graph", cache / "national_2009.rfg")
    assert code == 0 and "is_small_world" in json.loads(out)["verdict"]


def test_features_then_regress(capsys, cache, synth_dir, tmp_path):
    for y in SYNTH_YEARS:
        code, _, _ = _run(capsys, "features", "--graphs", cache, "--year", y, "--states", "CA,TX,NY,FL,PA",
                          "--skip", "f28,f29,f30,f31", "--triad-samples", 10_000, "--out", tmp_path / f"f{y}.csv")
        assert code == 0
    import pandas as pd

    frames = [pd.read_csv(tmp_path / f"f{y}.csv", comment="#") for y in SYNTH_YEARS]
    pd.concat(frames).to_csv(tmp_path / "features.csv", index=False)
    code, out, _ = _run(capsys, "regress", "--features", tmp_path / "features.csv", "--attributes",
                        synth_dir / "health.csv", "--outcome", "mortality", "--predictors", "f1,f9")
    assert code == 0 and set(json.loads(out)["fit"]["beta1"]) == {"f1", "f9"}


def test_null_generator(capsys, tmp_path):
    code, out, _ = _run(capsys, "null", "--model", "er", "--n", 100, "--p", 0.1, "--out", tmp_path / "er.rfg")
    assert code == 0 and (tmp_path / "er.rfg").exists()
    assert _run(capsys, "null", "--model", "ws", "--n", 100)[0] == 1


def test_input_errors_exit_one(capsys, tmp_path):
    assert _run(capsys, "metrics", "--referrals", tmp_path / "missing.csv")[0] == 1
    assert _run(capsys, "metrics")[0] == 1
    assert _run(capsys, "pipeline", "--config", tmp_path / "missing.yaml")[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1


def test_analysis_failure_exits_two(capsys, tmp_path):
    (tmp_path / "r.csv").write_text("1000000001,1000000002,11\n")
    code, _, err = _run(capsys, "powerlaw", "--referrals", tmp_path / "r.csv")
    assert code == 2 and "analysis failed" in err


def test_synth_and_pipeline_via_console_script(tmp_path):
    env = dict(os.environ)
    r = subprocess.run([sys.executable, "-m", "refnet.cli", "synth", "--rows", "5000", "--referrals",
                        str(tmp_path / "r.csv"), "--npi-states", str(tmp_path / "s.csv")],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0 and json.loads(r.stdout)["rows"] == 5000
    (tmp_path / "c.yaml").write_text("inputs:\n  referrals:\n    2009: r.csv\n  npi_states: s.csv\n"
                                     "analyses: [metrics, gravity]\n")
    r = subprocess.run([sys.executable, "-m", "refnet.cli", "pipeline", "--config", str(tmp_path / "c.yaml"),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True, env=env)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "o" / "gravity.json").exists()
