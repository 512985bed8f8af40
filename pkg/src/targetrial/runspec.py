"""Declarative run specifications and result serialisation.

A run spec is one human-editable YAML file describing scenarios, designs,
calibration and kappa-selection settings.  Loading is schema-checked with
error messages that name the offending field path; ``load(dump(spec))``
round-trips to an identical spec.  Results are written as tab-separated
tables (one row per design) plus JSON audit files for calibrations and
kappa-selection reports, so reproduction artifacts diff cleanly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .engine import OperatingCharacteristics, Scenario
from .inference import (CutoffCalibration, NullScenarioSet, null_grid_bivariate,
                        null_grid_sigma_cross, null_grid_univariate)
from .policies import GittinsTable, PolicySpec


class SpecError(ValueError):
    """Schema violation in a run spec; the message names the field path."""


_MISSING = object()


def _get(d: dict, key: str, kind, path: str, default=_MISSING):
    if key not in d:
        if default is not _MISSING:
            return default
        raise SpecError(f"{path}.{key}: required field missing")
    val = d[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SpecError(f"{path}.{key}: expected a number, got {val!r}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise SpecError(f"{path}.{key}: expected an integer, got {val!r}")
        return val
    if kind is str and not isinstance(val, str):
        raise SpecError(f"{path}.{key}: expected a string, got {val!r}")
    if kind is bool and not isinstance(val, bool):
        raise SpecError(f"{path}.{key}: expected true/false, got {val!r}")
    if kind is list and not isinstance(val, list):
        raise SpecError(f"{path}.{key}: expected a list, got {val!r}")
    if kind is dict and not isinstance(val, dict):
        raise SpecError(f"{path}.{key}: expected a mapping, got {val!r}")
    return val


def _num_list(d: dict, key: str, path: str, default=_MISSING):
    val = _get(d, key, list, path, default)
    if val is default and default is not _MISSING:
        return val
    for i, x in enumerate(val):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise SpecError(f"{path}.{key}[{i}]: expected a number, got {x!r}")
    return [float(x) for x in val]


@dataclass(frozen=True)
class CalibrationSpec:
    rule: str
    alpha: float
    replicas: int
    grid: dict


@dataclass(frozen=True)
class KappaSpec:
    p_values: tuple
    objectives: tuple
    grid_lo: float
    grid_hi: float
    grid_step: float
    ensemble: dict
    replicas: int
    calibration_replicas: int
    xi: float
    floor_frac: float


@dataclass(frozen=True)
class RunSpec:
    seed: int
    replicas: int
    n_patients: int
    burn_in: int
    scenarios: tuple            # ((name, Scenario), ...)
    designs: tuple              # (PolicySpec, ...)
    design_names: tuple
    calibration: CalibrationSpec | None
    kappa: KappaSpec | None
    raw: dict

    def null_set(self) -> NullScenarioSet:
        """Build the calibration null grid named by the spec."""
        if self.calibration is None:
            raise SpecError("runspec has no calibration section")
        g = self.calibration.grid
        kind = g["kind"]
        name, base = self.scenarios[0]
        if kind == "univariate_quadratic":
            return null_grid_univariate(
                base.sigmas, float(base.targets[0]), c_max=g["c_max"],
                points=g["points"], variance_known=base.variance_known)
        if kind == "sigma_cross":
            return null_grid_sigma_cross(
                g["c_values"], g["sigma_values"], base.n_arms,
                target=float(base.targets[0]),
                variance_known=base.variance_known)
        if kind == "bivariate":
            return null_grid_bivariate(
                g["c1_values"], g["c2_values"], base.covs[0], base.targets[0],
                n_arms=base.n_arms)
        raise SpecError(f"calibration.grid.kind: unknown kind {kind!r}")


def _parse_scenario(d: dict, path: str) -> tuple[str, Scenario]:
    name = _get(d, "name", str, path, default="scenario")
    means = _get(d, "means", list, path)
    if means and isinstance(means[0], list):
        mean_rows = [_num_list({"row": r}, "row", f"{path}.means[{i}]")
                     for i, r in enumerate(means)]
        cov = _get(d, "cov", list, path)
        targets = _num_list(d, "targets", path)
        scen = Scenario.multivariate(np.array(mean_rows), np.array(cov, dtype=float),
                                     np.array(targets))
    else:
        mu = _num_list(d, "means", path)
        sig = _num_list(d, "sigmas", path)
        target = _get(d, "target", float, path, default=0.0)
        variance = _get(d, "variance", str, path, default="known")
        if variance not in ("known", "unknown"):
            raise SpecError(f"{path}.variance: expected 'known' or 'unknown'")
        scen = Scenario.univariate(np.array(mu), np.array(sig), target,
                                   variance_known=variance == "known")
    return name, scen


def _parse_design(d: dict, path: str, base_dir: Path, burn_in: int) -> tuple[str, PolicySpec]:
    kind = _get(d, "kind", str, path)
    b = _get(d, "burn_in", int, path, default=burn_in)
    try:
        if kind == "fr":
            spec = PolicySpec.fr(burn_in=b)
        elif kind == "cb":
            spec = PolicySpec.cb(burn_in=b)
        elif kind == "ts":
            spec = PolicySpec.ts(draws=_get(d, "draws", int, path, default=1000),
                                 mode=_get(d, "mode", str, path, default="argmax"),
                                 burn_in=b)
        elif kind in ("sgi", "tgi"):
            table_path = _get(d, "table", str, path)
            table = GittinsTable.from_file(base_dir / table_path)
            discount = _get(d, "discount", float, path, default=0.99)
            ctor = PolicySpec.sgi if kind == "sgi" else PolicySpec.tgi
            spec = ctor(table, discount=discount, burn_in=b)
        elif kind == "we_sym":
            spec = PolicySpec.we_sym(_get(d, "p", float, path),
                                     _get(d, "kappa", float, path), burn_in=b)
        elif kind == "we_asym":
            spec = PolicySpec.we_asym(_get(d, "a", float, path),
                                      _get(d, "b", float, path),
                                      _get(d, "kappa", float, path, default=1.0),
                                      burn_in=b)
        elif kind == "we_mv":
            spec = PolicySpec.we_mv(_get(d, "kappa", float, path), burn_in=b)
        else:
            raise SpecError(f"{path}.kind: unknown design kind {kind!r}")
    except SpecError:
        raise
    except (ValueError, OSError) as exc:
        raise SpecError(f"{path}: {exc}") from exc
    name = _get(d, "name", str, path, default=spec.label)
    return name, spec


def parse_runspec(doc: dict, base_dir: Path | None = None) -> RunSpec:
    if not isinstance(doc, dict):
        raise SpecError("runspec: top level must be a mapping")
    base_dir = Path(base_dir or ".")
    seed = _get(doc, "seed", int, "runspec")
    replicas = _get(doc, "replicas", int, "runspec", default=2000)
    trial = _get(doc, "trial", dict, "runspec", default={})
    n_patients = _get(trial, "patients", int, "runspec.trial", default=100)
    burn_in = _get(trial, "burn_in", int, "runspec.trial", default=1)

    if "scenario" in doc:
        raw_scens = [_get(doc, "scenario", dict, "runspec")]
    else:
        raw_scens = _get(doc, "scenarios", list, "runspec", default=[])
    scenarios = tuple(_parse_scenario(s, f"runspec.scenario[{i}]")
                      for i, s in enumerate(raw_scens))

    raw_designs = _get(doc, "designs", list, "runspec", default=[{"kind": "fr"}])
    named = [_parse_design(d, f"runspec.designs[{i}]", base_dir, burn_in)
             for i, d in enumerate(raw_designs)]
    designs = tuple(spec for _, spec in named)
    design_names = tuple(name for name, _ in named)

    calibration = None
    if "calibration" in doc:
        c = _get(doc, "calibration", dict, "runspec")
        rule = _get(c, "rule", str, "runspec.calibration", default="average")
        if rule not in ("strong", "average"):
            raise SpecError("runspec.calibration.rule: expected 'strong' or 'average'")
        grid = _get(c, "grid", dict, "runspec.calibration")
        kind = _get(grid, "kind", str, "runspec.calibration.grid")
        gpath = "runspec.calibration.grid"
        if kind == "univariate_quadratic":
            grid = {"kind": kind, "c_max": _get(grid, "c_max", float, gpath, default=40.0),
                    "points": _get(grid, "points", int, gpath, default=10)}
        elif kind == "sigma_cross":
            grid = {"kind": kind, "c_values": _num_list(grid, "c_values", gpath),
                    "sigma_values": _num_list(grid, "sigma_values", gpath)}
        elif kind == "bivariate":
            grid = {"kind": kind, "c1_values": _num_list(grid, "c1_values", gpath),
                    "c2_values": _num_list(grid, "c2_values", gpath)}
        else:
            raise SpecError(f"{gpath}.kind: unknown kind {kind!r}")
        calibration = CalibrationSpec(
            rule=rule, alpha=_get(c, "alpha", float, "runspec.calibration", default=0.05),
            replicas=_get(c, "replicas", int, "runspec.calibration", default=replicas),
            grid=grid)

    kappa = None
    if "kappa_selection" in doc:
        kd = _get(doc, "kappa_selection", dict, "runspec")
        kp = "runspec.kappa_selection"
        grid = _get(kd, "grid", dict, kp, default={})
        ens = _get(kd, "ensemble", dict, kp)
        _get(ens, "size", int, f"{kp}.ensemble")
        kappa = KappaSpec(
            p_values=tuple(_num_list(kd, "p_values", kp, default=[1.0, 2.0])),
            objectives=tuple(_get(kd, "objectives", list, kp, default=["pb", "power"])),
            grid_lo=_get(grid, "lo", float, f"{kp}.grid", default=0.5),
            grid_hi=_get(grid, "hi", float, f"{kp}.grid", default=1.5),
            grid_step=_get(grid, "step", float, f"{kp}.grid", default=0.05),
            ensemble=ens,
            replicas=_get(kd, "replicas", int, kp, default=2000),
            calibration_replicas=_get(kd, "calibration_replicas", int, kp, default=2000),
            xi=_get(kd, "xi", float, kp, default=0.9),
            floor_frac=_get(kd, "floor", float, kp, default=0.8))

    return RunSpec(seed=seed, replicas=replicas, n_patients=n_patients,
                   burn_in=burn_in, scenarios=scenarios, designs=designs,
                   design_names=design_names, calibration=calibration,
                   kappa=kappa, raw=doc)


def load_runspec(path) -> RunSpec:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SpecError(f"{path}: not valid YAML: {exc}") from exc
    return parse_runspec(doc, base_dir=path.parent)


def dump_runspec(spec: RunSpec, path):
    Path(path).write_text(yaml.safe_dump(spec.raw, sort_keys=True))


# ---------------------------------------------------------------------------
# result writers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def write_oc_table(rows: list[tuple[str, OperatingCharacteristics]], path):
    """One tab-separated row per design: the columns of the paper's tables."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["design", "PB", "PB_se", "CS1_pct", "CS12_pct",
            "power_cond", "power_tc", "reject_rate", "eta", "replicas"]
    lines = ["\t".join(cols)]
    for name, oc in rows:
        lines.append("\t".join([
            name, _fmt(oc.pb_pct), _fmt(oc.pb_se), _fmt(oc.cs1_pct),
            _fmt(oc.cs12_pct), _fmt(oc.power_conditional),
            _fmt(oc.power_two_components), _fmt(oc.rejection_rate),
            _fmt(oc.eta), _fmt(oc.n_replicas),
        ]))
    path.write_text("\n".join(lines) + "\n")


def _scenario_descriptor(s: Scenario) -> dict:
    d = {"targets": np.asarray(s.targets).tolist(),
         "means": np.asarray(s.means).tolist(),
         "variance_known": s.variance_known}
    if s.dim == 1:
        d["sigmas"] = np.asarray(s.sigmas).tolist()
    else:
        d["covs"] = np.asarray(s.covs).tolist()
    return d


def write_calibration_audit(calib: CutoffCalibration, nulls: NullScenarioSet,
                            design_name: str, path):
    """Full audit trail of one cut-off calibration, as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "design": design_name,
        "rule": calib.rule,
        "alpha": calib.alpha,
        "eta": calib.eta,
        "replicas_per_scenario": calib.n_replicas,
        "seed": calib.seed,
        "weights": None if calib.weights is None else list(calib.weights),
        "scenarios": [
            {"index": i, "eta_individual": float(calib.per_scenario[i]),
             **_scenario_descriptor(s)}
            for i, s in enumerate(nulls.scenarios)
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def read_calibration_audit(path) -> dict:
    return json.loads(Path(path).read_text())


def write_kappa_report(report: dict, u_matrices: dict, path_prefix):
    """Selection summary (JSON) plus one u-matrix table per (p, metric)."""
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".json").write_text(json.dumps(report, indent=2) + "\n")
    for key, grid_result in u_matrices.items():
        kvals = grid_result.kappa.values
        lines = ["\t".join(["scenario"] + [f"kappa_{k:g}" for k in kvals] + ["FR"])]
        for s in range(grid_result.u.shape[0]):
            cells = [str(s)] + [_fmt(float(v)) for v in grid_result.u[s]]
            cells.append(_fmt(float(grid_result.u_fr[s])))
            lines.append("\t".join(cells))
        Path(f"{prefix}_{key}.tsv").write_text("\n".join(lines) + "\n")
