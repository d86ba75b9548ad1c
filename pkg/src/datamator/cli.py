"""Command line interface.

`datamator compile` turns a CSV plus a query (or an explicit script) into
a datamation document on disk, with per-step intermediate tables next to
it. `datamator serve` starts the HTTP API for the editor.

Exit codes: 0 success, 1 input/output problems, 2 pipeline errors
(unrecognized query, validation failures, no continuous order), with a
machine-readable JSON report on stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .compiler import compile_pipeline
from .dataset import Table, linearize_query, load_table
from .decomposer import FeedbackStore, decompose
from .document import build_document, canonical_json
from .errors import (
    DatamatorError,
    ExecutionError,
    MalformedCsvError,
    NoContinuousOrderError,
    QdmrScriptError,
    UnrecognizedQueryError,
)
from .executor import ColumnView, Grouped, Ordered, RecordSet, Scalar
from .qdmr import ValidationError, parse_pipeline, validate_pipeline

DATA_DIR_ENV = "DATAMATOR_DATA_DIR"


def _error_report(code: str, message: str, **extra) -> str:
    return json.dumps({"error": {"code": code, "message": message, **extra}}, sort_keys=True)


def _fail(code: str, message: str, exit_code: int = 2, **extra) -> int:
    print(_error_report(code, message, **extra))
    return exit_code


def _value_rows(value, table: Table) -> tuple[list[str], list[list[str]]]:
    """Small tabular rendering of one step value."""
    if isinstance(value, (RecordSet, Ordered)):
        header = ["row_id", *table.column_names]
        rows = [
            [str(r), *["" if c is None else c for c in table.rows[r]]]
            for r in value.row_ids
        ]
        return header, rows
    if isinstance(value, ColumnView):
        header = ["row_id", value.attribute]
        rows = [
            [str(r), "" if v is None else v]
            for r, v in zip(value.row_ids, value.values)
        ]
        return header, rows
    if isinstance(value, Grouped):
        header = [value.attribute, "row_ids", value.method]
        rows = [
            [g.key, " ".join(str(r) for r in g.row_ids), f"{g.agg_value:g}"]
            for g in value.groups
        ]
        return header, rows
    if isinstance(value, Scalar):
        return ["method", "value"], [[value.method, f"{value.value:g}"]]
    raise TypeError(f"unknown step value {value!r}")


def _print_table(header: list[str], rows: list[list[str]]) -> None:
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))


def _write_step_tables(directory: Path, compilation, table: Table) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for step in compilation.steps:
        header, rows = _value_rows(step.value, table)
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(row))
        path = directory / f"step_{step.index}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_compile(args: argparse.Namespace) -> int:
    csv_path = Path(args.csv)
    try:
        raw = csv_path.read_bytes()
    except OSError as exc:
        print(_error_report("io_error", str(exc)), file=sys.stderr)
        return 1
    name = args.name or csv_path.stem
    try:
        table = load_table(raw, name, delimiter=args.delimiter)
    except MalformedCsvError as exc:
        return _fail("malformed_csv", str(exc))

    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    ledger_path = Path(data_dir) / "ledger.jsonl" if data_dir else None
    ledger = FeedbackStore(ledger_path)

    query = None
    try:
        if args.query:
            query = args.query
            pipeline = decompose(linearize_query(query, table), table, ledger)
        else:
            script_text = Path(args.script).read_text(encoding="utf-8")
            pipeline = parse_pipeline(script_text)
    except OSError as exc:
        print(_error_report("io_error", str(exc)), file=sys.stderr)
        return 1
    except UnrecognizedQueryError as exc:
        return _fail("unrecognized_query", str(exc))
    except QdmrScriptError as exc:
        return _fail("syntax_error", exc.reason, line=exc.line)

    errors: list[ValidationError] = validate_pipeline(pipeline, table)
    if errors:
        return _fail(
            "validation_failed",
            "pipeline does not fit the table schema",
            details=[
                {"code": e.code, "message": e.message, "step": e.step} for e in errors
            ],
        )

    try:
        compilation = compile_pipeline(
            pipeline, table, table1b_channels=args.table1b_channels
        )
    except NoContinuousOrderError as exc:
        return _fail(
            "no_continuous_order",
            str(exc),
            dependencies={str(k): sorted(v) for k, v in exc.dependencies.items()},
        )
    except ExecutionError as exc:
        return _fail("execution_error", str(exc), step=exc.step)

    doc = build_document(compilation, table, query=query)
    out_path = Path(args.out) if args.out else csv_path.with_suffix(".datamation.json")
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(canonical_json(doc), encoding="utf-8")
        _write_step_tables(
            out_path.with_name(out_path.stem + "_steps"), compilation, table
        )
    except OSError as exc:
        print(_error_report("io_error", str(exc)), file=sys.stderr)
        return 1

    if args.explain:
        for step in compilation.steps:
            print(f"\n#{step.index} {step.keyframe.caption}")
            header, rows = _value_rows(step.value, table)
            _print_table(header, rows)
    print(f"wrote {out_path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV) or "datamator-data"
    app = create_app(data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="datamator",
        description="Compile tabular data plus a data question into a datamation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    compile_p = sub.add_parser("compile", help="compile a CSV and a query or script")
    compile_p.add_argument("csv", help="path to the CSV file")
    group = compile_p.add_mutually_exclusive_group(required=True)
    group.add_argument("--query", help="restricted natural-language question")
    group.add_argument("--script", help="path to a step script")
    compile_p.add_argument("--name", help="table name (default: CSV stem)")
    compile_p.add_argument("--out", help="output document path")
    compile_p.add_argument("--delimiter", default=",")
    compile_p.add_argument(
        "--explain", action="store_true", help="print each step's value as a table"
    )
    compile_p.add_argument("--data-dir", help="directory holding the feedback ledger")
    compile_p.add_argument(
        "--table1b-channels",
        action="store_true",
        help="band categorical group keys on the y axis",
    )
    compile_p.set_defaults(func=cmd_compile)

    serve_p = sub.add_parser("serve", help="run the HTTP API")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8077)
    serve_p.add_argument("--data-dir", help="persistence directory")
    serve_p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DatamatorError as exc:
        return _fail("internal_error", str(exc))


if __name__ == "__main__":
    sys.exit(main())
