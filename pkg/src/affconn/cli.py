"""Command line interface.

Six verbs over a scenario file:

  validate   parse and cross-check the scenario (structure, curves)
  check      run selected checks
  transport  parallel transport along the first curve, CSV or JSON
  berwald    emit both linearisation coefficient tables
  sode       derive the pseudo-SODE connection, emit it, run its suite
  report     run every applicable check, emit the canonical JSON report

Exit codes: 0 all checks ok, 1 a check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import io
import json
import sys

from . import (__version__, algebroid, berwald, expr, report, scenario,
               transport)
from .bundle import ValidationError
from .report import Report


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True,
                        help="path to the scenario JSON file")
    common.add_argument("--step", type=float, default=None,
                        help="integration step override")
    common.add_argument("--tol", type=float, default=None,
                        help="tolerance override for integration checks")
    common.add_argument("--samples", type=int, default=None,
                        help="sample count override")
    common.add_argument("--seed", type=int, default=None,
                        help="seed override")
    common.add_argument("--format", choices=("json", "text"), default=None,
                        help="output format")
    common.add_argument("--out", default=None,
                        help="write output to this path instead of stdout")

    p = argparse.ArgumentParser(
        prog="affconn",
        description="parallel transport and linearised connections on "
                    "anchored affine bundles")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("validate", parents=[common],
                   help="parse the scenario and validate its objects")
    pc = sub.add_parser("check", parents=[common], help="run checks")
    pc.add_argument("--check", default="all",
                    help="comma separated check names, or 'all'")
    sub.add_parser("transport", parents=[common],
                   help="parallel transport along the first curve")
    sub.add_parser("berwald", parents=[common],
                   help="emit the linearisation coefficient tables")
    sub.add_parser("sode", parents=[common],
                   help="derive and verify the pseudo-SODE connection")
    sub.add_parser("report", parents=[common],
                   help="run all applicable checks, canonical JSON out")
    return p


def _overrides(args) -> dict:
    return {"h_step": args.step, "tol": args.tol,
            "samples": args.samples, "seed": args.seed}


def _emit(text: str, args) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_report(rep: Report, args, default_format: str) -> int:
    fmt = args.format or default_format
    if fmt == "json":
        _emit(report.to_json(rep), args)
    else:
        _emit(report.render_text(rep), args)
    return 0 if rep.ok else 1


def _cmd_validate(scn, args) -> int:
    rep = scenario.run_checks(scn, ["validate"])
    return _emit_report(rep, args, "text")


def _cmd_check(scn, args) -> int:
    names = args.check.strip()
    requested = "all" if names == "all" else [
        nm.strip() for nm in names.split(",") if nm.strip()]
    if requested != "all" and not requested:
        print("error: --check needs at least one name", file=sys.stderr)
        return 2
    rep = scenario.run_checks(scn, requested)
    return _emit_report(rep, args, "text")


def _cmd_report(scn, args) -> int:
    rep = scenario.run_checks(scn, "all")
    return _emit_report(rep, args, "json")


def _cmd_transport(scn, args) -> int:
    if scn.conn is None:
        print("error: scenario has no connection", file=sys.stderr)
        return 2
    curve = scn.first_curve()
    if curve is None:
        print("error: scenario has no curves", file=sys.stderr)
        return 2
    lift = transport.horizontal_lift_curve(scn.conn, curve,
                                           scn.points["e1"], scn.cfg)
    if (args.format or "text") == "json":
        doc = {
            "format": "affconn-transport/1",
            "columns": ["u"] + list(lift.cols),
            "rows": [[float(u)] + [float(v) for v in row]
                     for u, row in zip(lift.us, lift.values)],
        }
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args)
    else:
        buf = io.StringIO()
        lift.to_csv(buf)
        _emit(buf.getvalue(), args)
    return 0


def _cmd_berwald(scn, args) -> int:
    if scn.conn is None:
        print("error: scenario has no connection", file=sys.stderr)
        return 2
    tables = {v: berwald.berwald_table(scn.conn, v)
              for v in berwald.VARIANTS}
    if (args.format or "text") == "json":
        doc = {"format": "affconn-berwald/1", "name": scn.name}
        for v, t in tables.items():
            doc[v] = berwald.table_to_doc(t)
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args)
    else:
        parts = [berwald.table_to_text(t) for t in tables.values()]
        _emit("\n".join(parts), args)
    return 0


def _cmd_sode(scn, args) -> int:
    if scn.structure is None:
        print("error: scenario has no structure block", file=sys.stderr)
        return 2
    if scn.force is None:
        print("error: scenario has no symbolic force "
              "(pseudo_sode or k=1 lagrangian)", file=sys.stderr)
        return 2
    conn = algebroid.sode_connection(scn.structure, scn.force)
    suite = algebroid.verify_sode_suite(scn.structure, scn.force, scn.sampler)
    gamma = [[expr.to_str(g) for g in row] for row in conn.gamma]
    if (args.format or "text") == "json":
        doc = {
            "format": "affconn-sode/1",
            "name": scn.name,
            "force": [expr.to_str(c) for c in scn.force],
            "gamma": gamma,
            "check": {
                "status": suite.status,
                "residual": suite.residual,
                "tolerance": suite.tolerance,
                "details": suite.details,
            },
        }
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args)
    else:
        lines = [f"pseudo-SODE connection for scenario {scn.name!r}",
                 "force: " + ", ".join(expr.to_str(c) for c in scn.force),
                 ""]
        width = max(len(c) for row in gamma for c in row)
        for al, row in enumerate(gamma):
            cells = "  ".join(f"{c:<{width}}" for c in row)
            lines.append(f"gamma[{al+1}][0..{scn.chart.k}]: {cells}")
        lines.append("")
        lines.append(f"suite: {suite.status}  residual {suite.residual:.3e}"
                     f"  tol {suite.tolerance:.0e}")
        _emit("\n".join(lines) + "\n", args)
    return 0 if suite.ok else 1


_COMMANDS = {
    "validate": _cmd_validate,
    "check": _cmd_check,
    "transport": _cmd_transport,
    "berwald": _cmd_berwald,
    "sode": _cmd_sode,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        scn = scenario.load_scenario(args.scenario,
                                     overrides=_overrides(args))
        return _COMMANDS[args.verb](scn, args)
    except scenario.ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValidationError, expr.ExprError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
