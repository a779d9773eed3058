"""Command-line front end for studies, index builds and design audits.

Verbs:
  design run <manifest>      solve a study manifest and emit its reports
  design jdstar --dsat <m>   build or load the control-effort index model
  design eval <design-file>  audit one design against a case definition
  design check <table>       re-validate the feasible rows of a table.csv

Exit codes: 0 success, 2 validation or input error, 3 when a study is
entirely infeasible, an evaluated design violates its constraints, or a
table fails re-validation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import optimizer as opt
from . import sizing as sz
from . import studio
from .formation import ControlIndexModel


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="design",
        description="Design-study toolkit for coil-actuated antenna grids")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a study manifest")
    run.add_argument("manifest", help="path to a JSON study manifest")
    run.add_argument("--seed", type=int, default=None,
                     help="override the manifest seed")
    run.add_argument("--jobs", type=int, default=None,
                     help="override the manifest worker count")
    run.add_argument("--out", default=None,
                     help="override the manifest output directory")

    jdstar = sub.add_parser("jdstar",
                            help="build the control-effort index model")
    jdstar.add_argument("--dsat", type=float, required=True,
                        help="grid spacing [m]")
    jdstar.add_argument("--out", default=".",
                        help="output and cache directory")
    jdstar.add_argument("--jobs", type=int, default=1)
    jdstar.add_argument("--seed", type=int, default=0,
                        help="accepted for interface uniformity; the "
                        "build is deterministic")
    jdstar.add_argument("--scale", type=float, default=1.0,
                        help="disturbance amplitude scale")
    jdstar.add_argument("--samples", default=None,
                        help="comma-separated grid half-widths to sample")
    jdstar.add_argument("--horizon", type=float, default=None,
                        help="simulation horizon [s]")
    jdstar.add_argument("--n-angles", type=int, default=64, dest="n_angles",
                        help="force-direction resolution of the cost table")

    ev = sub.add_parser("eval", help="audit one design file")
    ev.add_argument("design_file", help="JSON file with design and case")

    check = sub.add_parser("check", help="re-validate a study table")
    check.add_argument("table", help="path to a table.csv")
    check.add_argument("--constants", default=None,
                       help="JSON file with sizing-constant overrides")
    return parser


def _cmd_run(args) -> int:
    manifest = studio.load_manifest(args.manifest)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        manifest = replace(manifest, **overrides)
    table = studio.run_study(manifest)
    print(f"cells: {len(table.rows)}  feasible: {table.feasible_count}")
    if manifest.out_dir is not None:
        print(f"reports written to {manifest.out_dir}")
    return 3 if table.all_infeasible else 0


def _cmd_jdstar(args) -> int:
    sample_ns = None
    if args.samples is not None:
        sample_ns = tuple(int(v) for v in args.samples.split(","))
    model = studio.build_control_index(
        args.dsat, out_dir=args.out, sample_ns=sample_ns, jobs=args.jobs,
        horizon=args.horizon, n_angles=args.n_angles, scale=args.scale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"jdstar_{model.d_sat:g}.csv"
    studio._write_jdstar(model, path)
    print(f"index model samples written to {path}")
    return 0


def _case_from_mapping(data) -> opt.CaseConfig:
    known = {"d_sat", "m_sys_target", "mode", "mu_mar", "transmit_power",
             "wavelength", "altitude", "index_model", "constants"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown case keys: {sorted(unknown)}")
    kwargs = {k: data[k] for k in known & set(data)
              if k not in ("index_model", "constants")}
    if "index_model" in data and data["index_model"] is not None:
        kwargs["index_model"] = ControlIndexModel.from_json(
            Path(data["index_model"]).read_text())
    if "constants" in data and data["constants"] is not None:
        kwargs["consts"] = sz.constants_from_mapping(data["constants"])
    return opt.CaseConfig(n_gs=1, **kwargs)


def _cmd_eval(args) -> int:
    data = json.loads(Path(args.design_file).read_text())
    if "design" not in data or "case" not in data:
        raise ValueError("design file needs 'design' and 'case' sections")
    design = sz.SatelliteDesign(**data["design"])
    case = _case_from_mapping(data["case"])
    result = opt.evaluate_design(design, case, m_sys=data.get("m_sys"))
    for name, value in result.margins.margins:
        print(f"{name:>18s}  {value: .6e}")
    verdict = "feasible" if result.feasible else \
        f"infeasible ({result.reason})"
    print(f"design is {verdict}")
    return 0 if result.feasible else 3


def _cmd_check(args) -> int:
    table = studio.parse_table(args.table)
    consts = None
    if args.constants is not None:
        consts = sz.constants_from_mapping(
            json.loads(Path(args.constants).read_text()))
    failures = studio.check_table(table, consts)
    if failures:
        for row_no, name, value in failures:
            print(f"row {row_no}: {name} margin {value:.3e} below tolerance")
        return 3
    print(f"table passes re-validation "
          f"({sum(1 for r in table.rows)} rows)")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "jdstar": _cmd_jdstar,
                "eval": _cmd_eval, "check": _cmd_check}
    try:
        return handlers[args.command](args)
    except (ValueError, KeyError, TypeError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
