"""Command-line surface: compile, evaluate, differentiate, and inspect.

Subcommands wrap the library thinly; outputs match calling the underlying
operations directly with the same inputs and seed. Results go to stdout
at 12 significant digits, diagnostics to stderr as a single line with a
machine-parsable prefix: ``error[usage]:`` (exit 1), ``error[format]:``
(exit 2), or ``error[semantic]:`` (exit 3).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .compiler import (Circuit, check_properties, compile_cnf, load_circuit,
                       save_circuit, smooth)
from .compose import load_manifest
from .errors import (CarrierError, CircuitError, CompositionError, DimacsError,
                     FormulaError, StructureError)
from .formula import make_name_table, parse_dimacs, parse_formula, to_cnf, to_nnf
from .layered import (LeafBatch, backward, evaluate, evaluate_recursive,
                      layer_summary, layerize)
from .semantics import evaluate_fuzzy, fuzzy_value_and_grad, get_structure
from .tasks import bench, read_weight_rows

_FMT = "{:.12g}".format


class _UsageError(Exception):
    pass


class _FormatError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through our exit-code scheme."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="nesycirc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nesycirc {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    p = sub.add_parser("compile", help="compile a constraint into a circuit file")
    p.add_argument("--dimacs", metavar="FILE", help="DIMACS CNF input")
    p.add_argument("--formula", metavar="TEXT", help="formula text input")
    p.add_argument("--names", metavar="A,B,...", help="variable names for --formula, "
                   "in id order")
    p.add_argument("--out", metavar="FILE", required=True, help="circuit output path")
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("eval", help="evaluate weight rows, one value per row")
    p.add_argument("--circuit", metavar="FILE")
    p.add_argument("--formula", metavar="TEXT", help="formula text (fuzzy semantics)")
    p.add_argument("--names", metavar="A,B,...")
    p.add_argument("--weights", metavar="FILE", required=True)
    p.add_argument("--semantics", default="probability", metavar="TAG")
    p.add_argument("--batch", action="store_true",
                   help="one layered pass over all rows instead of per-row recursion")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("grad", help="per-variable gradients, one row per weight row")
    p.add_argument("--circuit", metavar="FILE")
    p.add_argument("--formula", metavar="TEXT", help="formula text (fuzzy semantics)")
    p.add_argument("--names", metavar="A,B,...")
    p.add_argument("--weights", metavar="FILE", required=True)
    p.add_argument("--semantics", default="probability", metavar="TAG")
    p.set_defaults(func=_cmd_grad)

    p = sub.add_parser("loss", help="semantic loss per row plus the mean")
    p.add_argument("--circuit", metavar="FILE", required=True)
    p.add_argument("--weights", metavar="FILE", required=True)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("check", help="verify structural circuit properties")
    p.add_argument("--circuit", metavar="FILE", required=True)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("inspect", help="pretty-print a composition manifest")
    p.add_argument("--manifest", metavar="FILE", required=True)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("bench", help="time recursive vs layered evaluation")
    p.add_argument("--task", required=True, choices=["addition"])
    p.add_argument("--digits", type=int, required=True, metavar="N")
    p.add_argument("--batch", default="1024", metavar="B[,B...]",
                   help="batch size or comma-separated sizes (default 1024)")
    p.add_argument("--reps", type=int, default=5, metavar="R")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--allow-large", action="store_true",
                   help="permit the slow four-digit configuration")
    p.set_defaults(func=_cmd_bench)
    return parser


# ---------------------------------------------------------------------------
# Input loading


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise _FormatError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_circuit_file(path) -> Circuit:
    try:
        return load_circuit(path)
    except OSError as exc:
        raise _FormatError(f"cannot read {path}: {exc.strerror or exc}") from None
    except CircuitError as exc:
        raise _FormatError(f"{path}: {exc}") from None


def _load_weights(path) -> tuple[list[str], np.ndarray]:
    try:
        return read_weight_rows(path)
    except OSError as exc:
        raise _FormatError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise _FormatError(str(exc)) from None


def _formula_from_args(args):
    if not args.formula:
        raise _UsageError("this semantics requires --formula")
    if not args.names:
        raise _UsageError("--formula requires --names (variable names in id order)")
    try:
        table = make_name_table([n.strip() for n in args.names.split(",")])
        return parse_formula(args.formula, table), len(table)
    except FormulaError as exc:
        raise _FormatError(str(exc)) from None


def _checked(c: Circuit, path) -> Circuit:
    report = check_properties(c)
    if not report.ok:
        failed = [p for p in ("decomposable", "deterministic", "smooth")
                  if not getattr(report, p)]
        raise StructureError(f"{path}: circuit violates {', '.join(failed)}")
    return c


def _probability_batch(c: Circuit, rows: np.ndarray, path) -> LeafBatch:
    n_inputs = c.num_vars - len(c.aux_vars)
    if rows.shape[1] != n_inputs:
        raise _FormatError(f"{path}: {rows.shape[1]} weight columns for a circuit "
                           f"with {n_inputs} input variables")
    return LeafBatch.from_probabilities(rows, num_vars=c.num_vars, aux_vars=c.aux_vars)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_compile(args) -> int:
    if bool(args.dimacs) == bool(args.formula):
        raise _UsageError("exactly one of --dimacs or --formula is required")
    if args.dimacs:
        try:
            cnf = parse_dimacs(_read_text(args.dimacs))
        except DimacsError as exc:
            raise _FormatError(f"{args.dimacs}: {exc}") from None
    else:
        f, _ = _formula_from_args(args)
        cnf = to_cnf(to_nnf(f))
    circuit = smooth(compile_cnf(cnf))
    lc = layerize(circuit)
    save_circuit(circuit, args.out, comments=layer_summary(lc).splitlines())
    print(f"nodes {len(circuit.nodes)} layers {len(lc.layers)}")
    return 0


def _cmd_eval(args) -> int:
    s = get_structure(args.semantics)
    _, rows = _load_weights(args.weights)
    if not s.circuit_safe:
        if args.circuit:
            raise StructureError("fuzzy semantics require formula input")
        f, n = _formula_from_args(args)
        if rows.shape[1] != n:
            raise _FormatError(f"{args.weights}: {rows.shape[1]} weight columns "
                               f"for {n} declared names")
        values = np.atleast_1d(evaluate_fuzzy(to_nnf(f), s, rows))
        for v in values:
            print(_FMT(v))
        return 0
    if not args.circuit:
        raise _UsageError(f"semantics {s.name!r} evaluates circuits; pass --circuit")
    c = _checked(_load_circuit_file(args.circuit), args.circuit)
    batch = _probability_batch(c, rows, args.weights)
    if args.batch:
        values = evaluate(layerize(c), batch, s)
    else:
        values = evaluate_recursive(c, batch, s)
    for v in values:
        print(_FMT(v))
    return 0


def _cmd_grad(args) -> int:
    s = get_structure(args.semantics)
    if not s.differentiable:
        raise StructureError(f"structure {s.name!r} is not differentiable")
    _, rows = _load_weights(args.weights)
    if not s.circuit_safe:
        if args.circuit:
            raise StructureError("fuzzy semantics require formula input")
        f, n = _formula_from_args(args)
        if rows.shape[1] != n:
            raise _FormatError(f"{args.weights}: {rows.shape[1]} weight columns "
                               f"for {n} declared names")
        _, grads = fuzzy_value_and_grad(to_nnf(f), s, rows)
        for row in np.atleast_2d(grads):
            print(" ".join(_FMT(g) for g in row))
        return 0
    if not args.circuit:
        raise _UsageError(f"semantics {s.name!r} differentiates circuits; pass --circuit")
    c = _checked(_load_circuit_file(args.circuit), args.circuit)
    batch = _probability_batch(c, rows, args.weights)
    grads = backward(layerize(c), batch, s)
    for row in grads:
        print(" ".join(_FMT(g) for g in row))
    return 0


def _cmd_loss(args) -> int:
    c = _checked(_load_circuit_file(args.circuit), args.circuit)
    _, rows = _load_weights(args.weights)
    batch = _probability_batch(c, rows, args.weights)
    per_row = -evaluate(layerize(c), batch, "log_probability")
    for v in per_row:
        print(_FMT(v))
    print(f"mean {_FMT(np.mean(per_row))}")
    return 0


def _cmd_check(args) -> int:
    c = _load_circuit_file(args.circuit)
    report = check_properties(c)
    failed = []
    for prop in ("decomposable", "deterministic", "smooth"):
        if getattr(report, prop):
            print(f"{prop}: ok")
        else:
            nodes = " ".join(str(i) for i in report.violations[prop])
            print(f"{prop}: fail (nodes {nodes})")
            failed.append(prop)
    if failed:
        print(f"error[semantic]: circuit violates {', '.join(failed)}", file=sys.stderr)
        return 3
    return 0


_RECORD_STYLES = {
    "external": lambda r: f"external input {r[1]}: {r[2]} [{r[3]}]",
    "module": lambda r: f"module {r[1]}: {r[2] or '(none)'} -> {r[3]}",
    "edge": lambda r: f"  edge {r[1]} -> {r[3]}: {r[4]}",
    "transform": lambda r: f"  transform {r[1]} -> {r[3]} into {r[4]}",
    "reshape": lambda r: f"  reshape {r[1]}: source columns {r[2]}",
    "connective": lambda r: f"  connective {r[1]} -> {r[2]}",
    "group": lambda r: f"stage {r[1]}: {' '.join(r[2:])}",
    "output": lambda r: f"output {r[1]}: {r[2]} [{r[3]}]",
}


def _cmd_inspect(args) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except OSError as exc:
        raise _FormatError(f"cannot read {args.manifest}: {exc.strerror or exc}") from None
    except CompositionError as exc:
        raise _FormatError(str(exc)) from None
    print(f"manifest {manifest.name}")
    for record in manifest.records:
        style = _RECORD_STYLES.get(record[0])
        try:
            line = style(record) if style else " ".join(record)
        except IndexError:
            line = " ".join(record)
        print(line)
    return 0


def _cmd_bench(args) -> int:
    try:
        sizes = [int(b) for b in args.batch.split(",") if b.strip()]
    except ValueError:
        raise _UsageError(f"--batch takes an int or comma-separated ints, "
                          f"got {args.batch!r}") from None
    if not sizes:
        raise _UsageError("--batch needs at least one size")
    if args.digits > 3 and not args.allow_large:
        raise _UsageError("--digits above 3 is a deliberately heavy configuration; "
                          "pass --allow-large to run it")
    try:
        report = bench(args.digits, sizes if len(sizes) > 1 else sizes[0],
                       repetitions=args.reps, seed=args.seed,
                       allow_large=args.allow_large)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    print(report.to_text())
    return 0


# ---------------------------------------------------------------------------
# Entry point


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise _UsageError("a subcommand is required (see --help)")
        return args.func(args)
    except _UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 1
    except _FormatError as exc:
        print(f"error[format]: {exc}", file=sys.stderr)
        return 2
    except (StructureError, CarrierError, CompositionError, CircuitError) as exc:
        print(f"error[semantic]: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error[semantic]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
