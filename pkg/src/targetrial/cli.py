"""Command-line entry points.

Subcommands
-----------
simulate      scenario sweep -> operating-characteristic tables
calibrate     null grid -> cut-off audit files and realized type-I rates
select-kappa  scenario ensemble -> robust kappa report
reproduce     shipped specs for the published tables and figure data
serve         start the live-trial HTTP service

Data goes to files under ``--out`` (default from $TARGETRIAL_OUT or
``./results``); progress lines go to standard error.  Identical invocations
with the same seed produce identical output files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .engine import TrialConfig, replicate
from .inference import calibrate, type_i_rate
from .kappa import (KappaGrid, evaluate_metric, sample_ensemble, select_kappa_pb,
                    select_kappa_power)
from .runspec import (RunSpec, SpecError, load_runspec, write_calibration_audit,
                      write_kappa_report, write_oc_table)


def _log(msg: str):
    print(msg, file=sys.stderr, flush=True)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("TARGETRIAL_OUT", "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise SystemExit("--threads must be >= 1")
        return args.threads
    return os.cpu_count() or 1


def _apply_overrides(spec_path: str, args) -> RunSpec:
    spec = load_runspec(spec_path)
    raw = dict(spec.raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.replicas is not None:
        raw["replicas"] = args.replicas
        if "calibration" in raw:
            raw["calibration"] = {**raw["calibration"], "replicas": args.replicas}
    from .runspec import parse_runspec

    return parse_runspec(raw, base_dir=Path(spec_path).parent)


def _config(spec: RunSpec, design, seed_offset: int = 0) -> TrialConfig:
    return TrialConfig(n_patients=spec.n_patients, policy=design,
                       seed=spec.seed + seed_offset)


def _calibrated_etas(spec: RunSpec, workers: int, out: Path | None) -> dict:
    """Design-specific cut-offs per the spec's calibration section."""
    etas = {}
    if spec.calibration is None:
        return etas
    nulls = spec.null_set()
    for name, design in zip(spec.design_names, spec.designs):
        _log(f"calibrating {name} ({spec.calibration.rule} rule, "
             f"alpha={spec.calibration.alpha}, {len(nulls)} null scenarios, "
             f"M={spec.calibration.replicas}) ...")
        calib = calibrate(spec.calibration.rule, nulls, _config(spec, design),
                          spec.calibration.alpha, spec.calibration.replicas,
                          workers=workers)
        etas[name] = calib.eta
        _log(f"  eta[{name}] = {calib.eta:.4f}")
        if out is not None:
            safe = name.replace("/", "_").replace(" ", "_")
            write_calibration_audit(calib, nulls, name, out / f"calibration_{safe}.json")
    return etas


def cmd_simulate(args) -> int:
    spec = _apply_overrides(args.spec, args)
    if not spec.scenarios:
        raise SpecError("runspec.scenario: simulate needs at least one scenario")
    workers = _workers(args)
    out = _out_dir(args)
    etas = _calibrated_etas(spec, workers, out)
    summary = {}
    for scen_name, scenario in spec.scenarios:
        rows = []
        for name, design in zip(spec.design_names, spec.designs):
            _log(f"simulating {scen_name} / {name}: M={spec.replicas} ...")
            oc = replicate(scenario, _config(spec, design), spec.replicas,
                           eta=etas.get(name), workers=workers)
            rows.append((name, oc))
            summary.setdefault(scen_name, {})[name] = oc.row()
        table = out / f"oc_{scen_name}.tsv"
        write_oc_table(rows, table)
        _log(f"wrote {table}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _log(f"wrote {out / 'summary.json'}")
    return 0


def cmd_calibrate(args) -> int:
    spec = _apply_overrides(args.spec, args)
    if spec.calibration is None:
        raise SpecError("runspec.calibration: calibrate needs a calibration section")
    workers = _workers(args)
    out = _out_dir(args)
    etas = _calibrated_etas(spec, workers, out)
    if args.rates:
        nulls = spec.null_set()
        lines = ["design\tscenario\trate"]
        for name, design in zip(spec.design_names, spec.designs):
            _log(f"re-simulating type-I rates for {name} (M={args.rates}) ...")
            for s_idx, scen in enumerate(nulls.scenarios):
                cfg = TrialConfig(n_patients=spec.n_patients, policy=design,
                                  seed=spec.seed + 7001 + s_idx)
                rate = type_i_rate(scen, cfg, etas[name], args.rates, workers=workers)
                lines.append(f"{name}\t{s_idx}\t{rate:.6g}")
        (out / "type_i_rates.tsv").write_text("\n".join(lines) + "\n")
        _log(f"wrote {out / 'type_i_rates.tsv'}")
    return 0


def cmd_select_kappa(args) -> int:
    spec = _apply_overrides(args.spec, args)
    if spec.kappa is None:
        raise SpecError("runspec.kappa_selection: select-kappa needs this section")
    ks = spec.kappa
    workers = _workers(args)
    out = _out_dir(args)
    ens_cfg = ks.ensemble
    default_arms = (len(ens_cfg["sigmas"]) if ens_cfg.get("sigmas")
                    else (spec.scenarios[0][1].n_arms if spec.scenarios else 4))
    ensemble = sample_ensemble(
        n_arms=ens_cfg.get("n_arms", default_arms), size=ens_cfg["size"],
        seed=ens_cfg.get("seed", spec.seed),
        mu_bounds=tuple(ens_cfg.get("mu_bounds", (-4.0, 4.0))),
        sigmas=ens_cfg.get("sigmas"),
        sigma_bounds=(tuple(ens_cfg["sigma_bounds"]) if "sigma_bounds" in ens_cfg else None),
        target=ens_cfg.get("target", 0.0))
    grid = KappaGrid(np.round(np.arange(ks.grid_lo, ks.grid_hi + ks.grid_step / 2,
                                        ks.grid_step), 10))
    from .policies import PolicySpec

    template = TrialConfig(n_patients=spec.n_patients,
                           policy=PolicySpec.fr(burn_in=spec.burn_in), seed=spec.seed)
    nulls = spec.null_set() if spec.calibration is not None else None
    alpha = spec.calibration.alpha if spec.calibration is not None else 0.05
    report = {"grid": [float(k) for k in grid.values], "selected": {}}
    matrices = {}
    for p in ks.p_values:
        for objective in ks.objectives:
            metric = "pb" if objective == "pb" else "power_tc"
            _log(f"evaluating u[s][kappa] for p={p:g}, metric={metric} "
                 f"(S={len(ensemble)}, M={ks.replicas}) ...")
            mg = evaluate_metric(ensemble, grid, p, metric, template, ks.replicas,
                                 burn_in=spec.burn_in, workers=workers, nulls=nulls,
                                 alpha=alpha, calibration_replicas=ks.calibration_replicas)
            key = f"p{p:g}_{metric}"
            matrices[key] = mg
            if objective == "pb":
                kstar, g1 = select_kappa_pb(mg)
                report["selected"][key] = {"kappa": kstar,
                                           "g1": [float(v) for v in g1]}
            else:
                kstar, probs, fallback = select_kappa_power(mg, xi=ks.xi,
                                                            floor_frac=ks.floor_frac)
                report["selected"][key] = {
                    "kappa": kstar, "fallback": fallback,
                    "attainment": [float(v) for v in probs],
                    "etas": [float(e) for e in mg.etas],
                    "eta_fr": mg.eta_fr,
                }
            _log(f"  kappa*[{key}] = {report['selected'][key]['kappa']}")
    write_kappa_report(report, matrices, out / "kappa_selection")
    _log(f"wrote {out / 'kappa_selection.json'} and u-matrix tables")
    return 0


_REPRODUCE_SPECS = {
    "table1": ("table1-scenario-i.yaml", "table1-scenario-ii.yaml"),
    "table2": ("table2-bivariate.yaml",),
    "fig2": ("fig2-type-i.yaml",),
    "fig3": ("fig3-kappa.yaml",),
    "fig5": ("table2-bivariate.yaml",),
}


def _shipped_spec(name: str) -> Path:
    ref = resources.files("targetrial").joinpath("specs", name)
    return Path(str(ref))


def cmd_reproduce(args) -> int:
    if args.target not in _REPRODUCE_SPECS:
        raise SystemExit(f"unknown reproduce target {args.target!r}; "
                         f"choose from {sorted(_REPRODUCE_SPECS)}")
    rc = 0
    for spec_name in _REPRODUCE_SPECS[args.target]:
        sub = argparse.Namespace(**vars(args))
        sub.spec = str(_shipped_spec(spec_name))
        _log(f"== reproducing from {spec_name}")
        if args.target == "fig3":
            rc |= cmd_select_kappa(sub)
        elif args.target in ("fig2", "fig5"):
            sub.rates = args.replicas or 10_000
            rc |= cmd_calibrate(sub)
        else:
            rc |= cmd_simulate(sub)
    return rc


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(log_path=args.log)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_common(p: argparse.ArgumentParser, spec_arg: bool = True):
    if spec_arg:
        p.add_argument("spec", help="path to a YAML run spec")
    p.add_argument("--seed", type=int, default=None, help="override the spec's master seed")
    p.add_argument("--replicas", type=int, default=None, help="override replica counts")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: available parallelism)")
    p.add_argument("--out", default=None,
                   help="output directory (default: $TARGETRIAL_OUT or ./results)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="targetrial",
                                 description="Response-adaptive target trials: "
                                             "simulation, calibration, conduct.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="scenario sweep -> OC tables")
    _add_common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("calibrate", help="null grid -> cut-off audit files")
    _add_common(p)
    p.add_argument("--rates", type=int, default=0,
                   help="also re-simulate per-scenario type-I rates with this many replicas")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("select-kappa", help="scenario ensemble -> robust kappa report")
    _add_common(p)
    p.set_defaults(fn=cmd_select_kappa)

    p = sub.add_parser("reproduce", help="run the shipped reproduction specs")
    p.add_argument("target", help="table1 | table2 | fig2 | fig3 | fig5")
    _add_common(p, spec_arg=False)
    p.add_argument("--rates", type=int, default=0, help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_reproduce)

    p = sub.add_parser("serve", help="start the live-trial HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8710)
    p.add_argument("--log", default=os.environ.get("TARGETRIAL_SESSION_LOG",
                                                   "sessions.jsonl"),
                   help="event-log path for session persistence")
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SpecError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
