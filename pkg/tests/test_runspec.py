"""Run-spec loading, validation and result serialisation."""

import json

import numpy as np
import pytest
import yaml

from targetrial.engine import Scenario, TrialConfig, replicate
from targetrial.inference import NullScenarioSet, calibrate
from targetrial.policies import PolicySpec
from targetrial.runspec import (SpecError, dump_runspec, load_runspec,
                                parse_runspec, read_calibration_audit,
                                write_calibration_audit, write_oc_table)

MINIMAL = """
seed: 42
scenario:
  means: [1.0, -1.0]
  sigmas: [2.0, 2.0]
"""


class TestLoading:
    def test_minimal_defaults(self, tmp_path):
        p = tmp_path / "spec.yaml"
        p.write_text(MINIMAL)
        spec = load_runspec(p)
        assert spec.seed == 42
        assert spec.replicas == 2000
        assert spec.n_patients == 100 and spec.burn_in == 1
        assert len(spec.scenarios) == 1
        assert spec.design_names == ("FR",)
        assert spec.calibration is None

    def test_malformed_numeric_names_field(self, tmp_path):
        p = tmp_path / "spec.yaml"
        p.write_text("seed: 42\nscenario:\n  means: [1.0, oops]\n  sigmas: [1, 1]\n")
        with pytest.raises(SpecError, match=r"means\[1\]"):
            load_runspec(p)

    def test_missing_required_field(self):
        with pytest.raises(SpecError, match="seed"):
            parse_runspec({"scenario": {"means": [0, 1], "sigmas": [1, 1]}})

    def test_bad_design_kind(self):
        doc = yaml.safe_load(MINIMAL)
        doc["designs"] = [{"kind": "banana"}]
        with pytest.raises(SpecError, match=r"designs\[0\]"):
            parse_runspec(doc)

    def test_bool_is_not_a_number(self):
        doc = yaml.safe_load(MINIMAL)
        doc["replicas"] = True
        with pytest.raises(SpecError, match="replicas"):
            parse_runspec(doc)

    def test_round_trip(self, tmp_path):
        doc = yaml.safe_load(MINIMAL)
        doc["designs"] = [{"kind": "we_sym", "p": 1, "kappa": 0.55}]
        doc["calibration"] = {"rule": "average", "alpha": 0.05,
                              "grid": {"kind": "univariate_quadratic",
                                       "c_max": 40, "points": 5}}
        spec = parse_runspec(doc)
        out = tmp_path / "dumped.yaml"
        dump_runspec(spec, out)
        spec2 = load_runspec(out)
        assert spec2.raw == spec.raw
        assert spec2.design_names == spec.design_names
        assert np.array_equal(spec2.scenarios[0][1].means, spec.scenarios[0][1].means)

    def test_multivariate_scenario(self):
        doc = {"seed": 1, "scenario": {
            "means": [[1, 10], [-1, 25]], "cov": [[4, 0], [0, 64]],
            "targets": [0, 100]}}
        spec = parse_runspec(doc)
        assert spec.scenarios[0][1].dim == 2

    def test_null_set_construction(self):
        doc = yaml.safe_load(MINIMAL)
        doc["calibration"] = {"grid": {"kind": "univariate_quadratic",
                                       "c_max": 40, "points": 4}}
        nulls = parse_runspec(doc).null_set()
        assert len(nulls) == 4

    def test_shipped_specs_load(self):
        from targetrial.cli import _REPRODUCE_SPECS, _shipped_spec

        seen = set()
        for names in _REPRODUCE_SPECS.values():
            for name in names:
                if name in seen:
                    continue
                seen.add(name)
                spec = load_runspec(_shipped_spec(name))
                assert spec.replicas >= 1000
                if spec.calibration is not None:
                    assert spec.calibration.alpha == 0.05


class TestResultWriters:
    def test_oc_table_format(self, tmp_path):
        scen = Scenario.univariate([0.5, -1.0], [1, 1], 0.0)
        oc = replicate(scen, TrialConfig(20, PolicySpec.fr(burn_in=1), seed=1),
                       50, eta=0.9)
        path = tmp_path / "oc.tsv"
        write_oc_table([("FR", oc)], path)
        lines = path.read_text().splitlines()
        assert lines[0].split("\t") == ["design", "PB", "PB_se", "CS1_pct",
                                        "CS12_pct", "power_cond", "power_tc",
                                        "reject_rate", "eta", "replicas"]
        assert lines[1].startswith("FR\t")

    def test_oc_table_byte_stable(self, tmp_path):
        scen = Scenario.univariate([0.5, -1.0], [1, 1], 0.0)
        rows = []
        for run in range(2):
            oc = replicate(scen, TrialConfig(20, PolicySpec.fr(burn_in=1), seed=9),
                           80, eta=None)
            path = tmp_path / f"oc{run}.tsv"
            write_oc_table([("FR", oc)], path)
            rows.append(path.read_bytes())
        assert rows[0] == rows[1]

    def test_calibration_audit_roundtrip(self, tmp_path):
        scen = Scenario.univariate([1.0, 1.0], [1, 1], 0.0)
        nulls = NullScenarioSet(scenarios=(scen,))
        cfg = TrialConfig(20, PolicySpec.fr(burn_in=1), seed=5)
        calib = calibrate("average", nulls, cfg, 0.1, 200)
        path = tmp_path / "audit.json"
        write_calibration_audit(calib, nulls, "FR", path)
        doc = read_calibration_audit(path)
        assert doc["design"] == "FR"
        assert doc["rule"] == "average" and doc["alpha"] == 0.1
        assert doc["eta"] == calib.eta
        assert len(doc["scenarios"]) == 1
        assert doc["scenarios"][0]["eta_individual"] == calib.per_scenario[0]
        assert doc["replicas_per_scenario"] == 200 and doc["seed"] == 5
