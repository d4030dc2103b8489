"""Scenario parsing and the command-line front door (exit codes, report
schema, determinism across thread counts)."""

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from lfgeom import cli
from lfgeom.scenario import ConfigError, load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

MINK1_ALL = """\
name: mini
model:
  name: minkowski
  n: 1
  weight: [[linear_x0, 0.4]]
sclv:
  apex: [0.0, 0.0]
  radius: 0.6
  cut: 2.0
checks:
  bg:
    N: 3.0
    pairs: [[0.5, 1.0]]
  gunther: {}
  bg_inf:
    pairs: [[0.5, 1.0]]
  ball:
    eps: 0.05
    r_grid: [0.5, 1.5]
numerics:
  oracle: true
"""


@pytest.fixture()
def mini_scenario(tmp_path):
    p = tmp_path / "mini.yaml"
    p.write_text(MINK1_ALL)
    return p


# ---------------------------------------------------------------- scenario


def test_parse_round_trip_is_lossless(mini_scenario):
    scen = load_scenario(mini_scenario)
    assert scen.to_dict() == yaml.safe_load(MINK1_ALL)
    assert scen.model.weight == [("linear_x0", 0.4)]
    assert scen.checks.requested() == ["bg", "gunther", "bg_inf", "ball"]
    assert scen.numerics.oracle and scen.numerics.t_scan == 32


@pytest.mark.parametrize("mutate, path_bit", [
    (lambda d: d["model"].update(novel=1), "model.novel"),
    (lambda d: d["checks"]["bg"].update(slope=2), "checks.bg.slope"),
    (lambda d: d["numerics"].update(fast=True), "numerics.fast"),
    (lambda d: d.update(extra={}), "extra"),
])
def test_unknown_keys_rejected_with_path(tmp_path, mutate, path_bit):
    doc = yaml.safe_load(MINK1_ALL)
    mutate(doc)
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(doc))
    with pytest.raises(ConfigError, match=path_bit.replace(".", r"\.")):
        load_scenario(p)


def test_missing_and_malformed_fields(tmp_path):
    for text, fragment in [
        ("name: x\nmodel: {name: minkowski, n: 2}\n", "sclv"),
        ("name: x\nmodel: {n: 2}\nsclv: {apex: [0,0,0], radius: 1, cut: 1}\n",
         "name and n"),
        ("name: x\nmodel: {name: minkowski, n: 2}\n"
         "sclv: {apex: [0,0], radius: 1, cut: 1}\n", "3 components"),
        ("name: x\nmodel: {name: minkowski, n: 2}\n"
         "sclv: {apex: [0,0,0], radius: 1, cut: 1}\n"
         "checks: {bg: {pairs: [[0.5, 1]]}}\n", "N and pairs"),
    ]:
        p = tmp_path / "frag.yaml"
        p.write_text(text)
        with pytest.raises(ConfigError, match=fragment):
            load_scenario(p)


def test_not_yaml_and_missing_file(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("a: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_scenario(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "absent.yaml")


# --------------------------------------------------------------------- CLI


def test_bg_anchor_report(tmp_path):
    code = cli.main(["bg", "--scenario", str(SCENARIOS / "mink2_bg_anchor.yaml"),
                     "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "mink2-bg-anchor-bg.json").read_text())
    assert rep["schema"] == 1
    assert rep["verdict"] == "PASS"
    row = rep["checks"]["bg"]["results"][0]
    assert abs(row["margin"] - 0.09375) < 1e-9
    assert row["tol"] > 0  # every number carries its tolerance
    csv_text = (tmp_path / "mink2-bg-anchor-bg.csv").read_text().splitlines()
    assert csv_text[0].split(",")[:4] == ["direction", "t", "detA", "lambda"]


def test_bad_hypothesis_is_config_error(tmp_path, capsys):
    doc = yaml.safe_load(MINK1_ALL)
    doc["checks"]["bg"]["N"] = 0.5
    p = tmp_path / "badN.yaml"
    p.write_text(yaml.safe_dump(doc))
    code = cli.main(["bg", "--scenario", str(p), "--out", str(tmp_path)])
    assert code == 2
    assert "N in (n, oo)" in capsys.readouterr().err


def test_falsified_override_fails(tmp_path):
    doc = yaml.safe_load(MINK1_ALL)
    doc["checks"]["bg"]["c"] = 0.3  # flat space cannot certify c > 0
    p = tmp_path / "false.yaml"
    p.write_text(yaml.safe_dump(doc))
    code = cli.main(["bg", "--scenario", str(p), "--out", str(tmp_path)])
    assert code == 1
    rep = json.loads((tmp_path / "mini-bg.json").read_text())
    assert rep["verdict"] == "FAIL"


def test_no_admissible_epsilon_aborts(tmp_path, capsys):
    doc = yaml.safe_load(MINK1_ALL)
    doc["checks"]["ball"] = {"eps": 0.5, "r_grid": [1.0e-05]}
    p = tmp_path / "abort.yaml"
    p.write_text(yaml.safe_dump(doc))
    code = cli.main(["ball", "--scenario", str(p), "--out", str(tmp_path)])
    assert code == 3
    assert "no admissible epsilon" in capsys.readouterr().err


def test_missing_scenario_flag(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("LFGEOM_SCENARIO", raising=False)
    assert cli.main(["bg", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("LFGEOM_SCENARIO", str(SCENARIOS / "mink2_bg_anchor.yaml"))
    monkeypatch.setenv("LFGEOM_THREADS", "2")
    code = cli.main(["validate-model", "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "mink2-bg-anchor-validate-model.json").read_text())
    assert rep["validate_model"]["verdict"] == "PASS"


def test_validate_model_quartic(tmp_path):
    doc = {"name": "quartic-check",
           "model": {"name": "quartic_finsler", "n": 2,
                     "params": {"eps": 0.05}},
           "sclv": {"apex": [0.0, 0.0, 0.0], "radius": 0.4, "cut": 1.0}}
    p = tmp_path / "quartic.yaml"
    p.write_text(yaml.safe_dump(doc))
    code = cli.main(["validate-model", "--scenario", str(p),
                     "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "quartic-check-validate-model.json").read_text())
    body = rep["validate_model"]
    assert body["verdict"] == "PASS"
    assert body["signature"]["ok"] and body["signature"]["min_eig_margin"] > 1e-3
    assert body["homogeneity"]["L_deg2_rel"] < 1e-9


def test_jacobi_csv_columns(mini_scenario, tmp_path):
    code = cli.main(["jacobi", "--scenario", str(mini_scenario),
                     "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "mini-jacobi.csv").read_text().splitlines()
    assert lines[0] == "t,detA,lambda,h,f"
    first = [float(x) for x in lines[1].split(",")]
    # flat, one spatial dimension: detA = t, f = 1
    assert abs(first[1] - first[0]) < 1e-9
    assert abs(first[4] - 1.0) < 1e-9


def test_geodesic_and_curvature_reports(mini_scenario, tmp_path):
    assert cli.main(["geodesic", "--scenario", str(mini_scenario),
                     "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "mini-geodesic.json").read_text())
    assert rep["geodesic"]["max_L_drift"] < 1e-9
    assert cli.main(["curvature", "--scenario", str(mini_scenario),
                     "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "mini-curvature.csv").read_text().splitlines()
    assert lines[0].startswith("t,ric,ric_inf,ric_N")


def test_all_is_deterministic_across_threads(mini_scenario, tmp_path):
    out1, out4 = tmp_path / "t1", tmp_path / "t4"
    assert cli.main(["all", "--scenario", str(mini_scenario), "--out",
                     str(out1), "--threads", "1"]) == 0
    assert cli.main(["all", "--scenario", str(mini_scenario), "--out",
                     str(out4), "--threads", "4"]) == 0
    for name in ("mini-all.json", "mini-all.csv"):
        assert (out1 / name).read_bytes() == (out4 / name).read_bytes()
    rep = json.loads((out1 / "mini-all.json").read_text())
    assert set(rep["checks"]) == {"bg", "gunther", "bg_inf", "ball"}
    assert rep["volume_oracle"]["verdict"] == "PASS"
    assert rep["volume_oracle"]["rel_diff"] < 1e-4


def test_library_scenarios_parse():
    for path in sorted(SCENARIOS.glob("*.yaml")):
        scen = load_scenario(path)
        assert scen.name
        assert scen.model.build().n == scen.model.n
