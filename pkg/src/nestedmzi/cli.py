"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 parse or validation error,
3 physics error (impossible post-selection, zero overlap).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import tempfile

import numpy as np

from . import circuitfile, engine, scenarios, tsvf
from .errors import (
    InvalidCircuitError,
    PhysicsError,
    UnknownCutError,
    UnknownDetectorError,
    UnknownParameterError,
)
from .model import bind_params, validate_circuit

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_PHYSICS = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _assignment(text):
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=value, got {text!r}")
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {name} is not a real: {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nestedmzi", description="Nested Mach-Zehnder weak-measurement simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def source(p, required=True):
        group = p.add_mutually_exclusive_group(required=required)
        group.add_argument("--scenario", choices=scenarios.scenario_names())
        group.add_argument("--circuit", metavar="FILE", help="circuit file (.mzc)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       type=_assignment, metavar="NAME=VALUE")
        p.add_argument("--out", metavar="PATH", help="write output here instead of stdout")

    p = sub.add_parser("run", help="evolve a circuit and print a key=value report")
    source(p)
    p.add_argument("--select", default="D")
    p.add_argument("--cut", default=scenarios.INNER_CUT)

    p = sub.add_parser("sweep", help="sweep one parameter, CSV output")
    source(p)
    p.add_argument("--param", required=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--select", default="D")

    p = sub.add_parser("weak-values", help="weak-value table at a cut, CSV output")
    source(p)
    p.add_argument("--cut", default=scenarios.INNER_CUT)
    p.add_argument("--select", default="D")

    p = sub.add_parser("scenario", help="print a scenario as a circuit file")
    p.add_argument("name", choices=scenarios.scenario_names())
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   type=_assignment, metavar="NAME=VALUE")
    p.add_argument("--out", metavar="PATH")

    p = sub.add_parser("validate", help="check a circuit file")
    p.add_argument("circuit", metavar="FILE")
    return parser


def _load(args):
    if args.scenario:
        return scenarios.build_scenario(args.scenario), args.scenario
    try:
        with open(args.circuit, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise circuitfile.CircuitFileError(
            [circuitfile.ParseError(circuitfile.SourceSpan(0, 0, 0), f"cannot read {args.circuit}: {exc.strerror}")]
        ) from None
    return circuitfile.parse(text), "circuit"


def _bindings(circuit, args):
    try:
        return bind_params(circuit, dict(args.overrides))
    except UnknownParameterError as exc:
        raise UsageError(str(exc)) from None


def _require_detector(circuit, name, subsystem=None):
    det = circuit.detector(name)
    if det is None or (subsystem and det.subsystem != subsystem):
        raise UsageError(str(UnknownDetectorError(name, subsystem)))
    return det


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".nestedmzi-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_run(args):
    circuit, kind = _load(args)
    bindings = _bindings(circuit, args)
    _require_detector(circuit, args.select)
    cut = args.cut if circuit.cut_index(args.cut) is not None else None
    if args.cut != scenarios.INNER_CUT and cut is None:
        raise UsageError(str(UnknownCutError(args.cut)))
    response = (
        kind in ("nominal", "single_arm_b", "single_arm_c") and args.select == scenarios.SELECT
    )
    report = scenarios.report_circuit(
        circuit, bindings, select=args.select, cut=cut, kind=kind, response=response
    )
    _emit(report.to_text(), args.out)


def cmd_sweep(args):
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    if args.start > args.stop:
        raise UsageError("--from must not exceed --to")
    circuit, _ = _load(args)
    bindings = _bindings(circuit, args)
    if args.param not in circuit.params:
        raise UsageError(str(UnknownParameterError(args.param, circuit.params)))
    _require_detector(circuit, args.select)
    if args.steps == 1:
        values = [args.start]
    else:
        values = np.linspace(args.start, args.stop, args.steps).tolist()
    result = engine.sweep(circuit, args.param, values, args.select, bindings)
    _emit(result.to_csv(), args.out)


def cmd_weak_values(args):
    circuit, _ = _load(args)
    bindings = _bindings(circuit, args)
    _require_detector(circuit, args.select, "system")
    if circuit.cut_index(args.cut) is None:
        raise UsageError(str(UnknownCutError(args.cut)))
    report = tsvf.weak_value_report(circuit, args.cut, args.select, bindings)
    _emit(report.to_csv(), args.out)


def cmd_scenario(args):
    circuit = scenarios.build_scenario(args.name)
    bindings = _bindings(circuit, args)
    circuit = dataclasses.replace(circuit, params=bindings)
    _emit(circuitfile.serialize(circuit), args.out)


def cmd_validate(args):
    args.scenario = None
    circuit, _ = _load(args)
    report = validate_circuit(circuit)
    if not report.ok:
        raise InvalidCircuitError(report.diagnostics)
    sys.stdout.write("ok\n")


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "weak-values": cmd_weak_values,
    "scenario": cmd_scenario,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"nestedmzi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except circuitfile.CircuitFileError as exc:
        for err in exc.errors:
            print(f"{err.span.line}:{err.span.col_start}: {err.message}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidCircuitError as exc:
        for diag in exc.diagnostics:
            print(f"0:0: {diag}", file=sys.stderr)
        return EXIT_PARSE
    except PhysicsError as exc:
        print(f"nestedmzi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
