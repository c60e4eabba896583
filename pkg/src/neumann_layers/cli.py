"""Command-line front end.

Exit codes: 0 success with all verdicts passing, 1 a verdict failed,
2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from . import reports
from .asymptotics import classify_regime, compute_constants, predict_boundary
from .bvp import solve
from .coefficients import ProbeSpec, validate_assumptions
from .config import RunSettings, load_settings
from .errors import (
    ConfigError,
    InvalidExponentError,
    ModeError,
    NeumannLayerError,
    OutOfDomainError,
    PreconditionError,
)
from .verification import (
    SweepSpec,
    compare_corollary_rk1,
    concentration_check,
    sweep,
)

log = logging.getLogger("neumann_layers")

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
_USAGE_ERRORS = (ConfigError, ModeError, PreconditionError, InvalidExponentError,
                 OutOfDomainError, ValueError)

COMMANDS = {
    "validate": (
        "Check the structural assumptions on f, e, a and b at radius R.",
        "f(theta0) = 0, f' > 0, e > 0, e' <= 0, a and b positive and bounded, "
        "b r^(N-1) nondecreasing, supplied derivatives consistent with the values.",
        "--input [--R] [--output] [--format]",
    ),
    "solve": (
        "Solve the radial Neumann problem at radius R on a layer-graded mesh.",
        "eps^2 (u'' + ((N-1)/s + alpha'/alpha) u') = (beta/alpha) f(u), "
        "u'(0) = 0, eps u'(1) = e(u(1)), eps = 1/R.",
        "--input [--R] [--tol] [--output] [--format]",
    ),
    "predict": (
        "Evaluate the two-term expansion of u(R) and u'(R).",
        "u(R) = p0 + C0 H(R), u'(R) = e(p0) + e'(p0) C0 H(R), "
        "H(R) = (N-1)/R + (a'/a + b'/b)(R)/2, e(p0) = sqrt(2 mu0 (F(p0) - F(theta0))); "
        "mode 'perturbed' adds dp0/dmu0 (b(R)/a(R) - mu0).",
        "--input [--R] [--mode] [--output] [--format]",
    ),
    "sweep": (
        "Solve over a sequence of radii and compare with the expansion.",
        "R^k |u(R) - prediction| for k = min(1, tau*), first-integral residuals, "
        "layer energy functionals, layer masses and interior decay fits.",
        "--input [--radii] [--mode] [--jobs] [--tol] [--plot-data DIR] [--output] [--format]",
    ),
    "classify": (
        "Classify which term dominates the boundary correction for b/a = mu0 + mu* R^-tau*.",
        "tau* < 1: ratio offset dominates; tau* = 1: both at order 1/R; "
        "tau* > 1: curvature term C0 H(R) dominates; remainder ~ R^-min(1, tau*).",
        "--input [--R] [--output] [--format]",
    ),
    "concentration": (
        "Track the layer masses over a sweep of radii.",
        "int (u - theta0) dr -> (1/sqrt(mu0)) int (t - theta0)/sqrt(2 dF(t)) dt and "
        "int u'^2 dr -> sqrt(mu0) int sqrt(2 dF(t)) dt; u(r0) - theta0 -> 0.",
        "--input [--radii] [--jobs] [--tol] [--output] [--format]",
    ),
    "compare": (
        "Check monotone orderings of u(R), u'(R) between two instances.",
        "case I: larger radius gives smaller u(R); case II_i: larger b/a gives smaller u(R) "
        "and larger u'(R); case II_ii: equal ratios, larger a'/a + b'/b gives larger u(R).",
        "--input (with 'case' and 'second') [--R] [--tol] [--output] [--format]",
    ),
}


def _configure_logging() -> None:
    level = os.environ.get("NL_LOG_LEVEL", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_radii(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid radii list {text!r}") from None


def _parse_set(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"override {key!r} needs a numeric value") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="neumann-layers", description="Boundary-layer laboratory for radial "
                "semilinear Neumann problems on large balls.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, (summary, _, _) in COMMANDS.items():
        sp = sub.add_parser(name, help=summary, description=summary)
        sp.add_argument("--input", required=True, help="JSON config path")
        sp.add_argument("--output", help="report path (default: stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--R", type=float, help="radius override")
        sp.add_argument("--radii", type=_parse_radii, help="comma-separated radii")
        sp.add_argument("--mode", choices=("theorem1", "perturbed"))
        sp.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
        sp.add_argument("--tol", type=float, help="Newton tolerance override")
        sp.add_argument("--set", type=_parse_set, action="append", default=[],
                        metavar="KEY=VALUE", help="numeric config override")
        if name == "sweep":
            sp.add_argument("--plot-data", metavar="DIR",
                            help="also write two-column CSV series into DIR")
    d = sub.add_parser("describe", help="explain a command")
    d.add_argument("name", nargs="?")
    return p


def _overrides(args) -> dict:
    ov = {}
    for key, value in args.set:
        ov[key] = value
    if args.R is not None:
        ov["R"] = args.R
    if args.radii is not None:
        ov["radii"] = args.radii
    if args.mode is not None:
        ov["mode"] = args.mode
    if args.tol is not None:
        ov["newton_tol"] = args.tol
    return ov


def describe(name: Optional[str], out=None) -> int:
    out = out or sys.stdout
    if name is None:
        out.write("commands:\n")
        for cmd, (summary, _, _) in COMMANDS.items():
            out.write(f"  {cmd:<14}{summary}\n")
        return EXIT_OK
    if name not in COMMANDS:
        sys.stderr.write(f"unknown command {name!r}; try one of: {', '.join(COMMANDS)}\n")
        return EXIT_USAGE
    summary, formula, flags = COMMANDS[name]
    out.write(f"{name}: {summary}\n  usage: neumann-layers {name} {flags}\n"
              f"  exercises: {formula}\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# commands; each returns (payload, csv_text or None, passed)


def _meta(settings: RunSettings, command: str, args) -> dict:
    return {"command": command, "config": settings.to_dict(),
            "overrides": dict(settings.overrides), "jobs": args.jobs}


def _cmd_validate(settings, args):
    inst = settings.family().at(settings["R"])
    rep = validate_assumptions(inst, ProbeSpec(), settings.family())
    payload = {"metadata": _meta(settings, "validate", args), **rep.to_dict()}
    return payload, reports.records_csv(rep.to_dict()), rep.passed


def _cmd_solve(settings, args):
    inst = settings.family().at(settings["R"])
    profile = solve(inst, settings.solver())
    meta = profile.metadata()
    meta.update(_meta(settings, "solve", args))
    meta["u_R"] = float(profile.u[-1])
    meta["du_R"] = profile.eps * float(profile.du[-1])
    return {"metadata": meta}, reports.profile_csv(profile), True


def _cmd_predict(settings, args):
    fam = settings.family()
    inst = fam.at(settings["R"])
    c = compute_constants(inst)
    pred = predict_boundary(inst, settings["mode"], fam, c)
    payload = {"metadata": _meta(settings, "predict", args), "R": inst.radius,
               "constants": c.to_dict(), **pred.to_dict()}
    return payload, reports.records_csv(payload), True


def _cmd_sweep(settings, args):
    spec = SweepSpec(settings.family(), tuple(settings.radii), settings.solver(),
                     settings["mode"], args.jobs)
    rep = sweep(spec)
    rep.metadata.update(_meta(settings, "sweep", args))
    if getattr(args, "plot_data", None):
        reports.write_plot_data(rep, args.plot_data)
    return rep.to_dict(), reports.report_csv(rep), rep.passed


def _cmd_classify(settings, args):
    rep = classify_regime(settings.family(), settings["R"])
    payload = {"metadata": _meta(settings, "classify", args), **rep.to_dict()}
    return payload, reports.records_csv(payload), True


def _cmd_concentration(settings, args):
    table = concentration_check(settings.family(), settings.radii, settings.solver(),
                                settings["r0"], args.jobs)
    payload = {"metadata": _meta(settings, "concentration", args), **table.to_dict()}
    rows = list(zip(table.radii, table.I1, table.I2, table.pointwise))
    return payload, reports._csv_text(("R", "I1", "I2", "pointwise"), rows), table.passed


def _cmd_compare(settings, args):
    if settings.get("case") is None or settings.second is None:
        raise ConfigError("compare needs fields 'case' and 'second'")
    first = settings.family().at(settings["R"])
    second = settings.second.family().at(settings.second["R"])
    verdict = compare_corollary_rk1(settings["case"], first, second, settings.solver())
    payload = {"metadata": _meta(settings, "compare", args), **verdict.to_dict()}
    return payload, reports.records_csv(payload), verdict.passed


_HANDLERS = {
    "validate": _cmd_validate, "solve": _cmd_solve, "predict": _cmd_predict,
    "sweep": _cmd_sweep, "classify": _cmd_classify, "concentration": _cmd_concentration,
    "compare": _cmd_compare,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command == "describe":
        return describe(args.name)
    try:
        settings = load_settings(args.input, _overrides(args))
        payload, csv_text, passed = _HANDLERS[args.command](settings, args)
    except _USAGE_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except NeumannLayerError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    text = csv_text if args.format == "csv" else reports.to_json(payload)
    if args.output:
        reports.atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_VERDICT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
