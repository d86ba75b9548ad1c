"""Pipeline model: the ten operators, their script form, and validation.

Script surface, one statement per line::

    #1 = SELECT("students")
    #2 = PROJECT("birth_year", #1)
    #3 = COMPARATIVE(#1, #2, "= 2000")
    #4 = AGGREGATE(count, #3)

String literals are double-quoted, step references are written ``#j``, and
keyword arguments (aggregation methods, max/min, asc/desc) are bare words.
Parsing rejects forward references; pipelines assembled in memory (for
example by editor drags) may hold them until ``reorder`` normalizes the
arrangement.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Union

from .dataset import Table, parse_number, parse_temporal
from .errors import (
    ArityMismatchError,
    ForwardReferenceError,
    QdmrSyntaxError,
    UnknownOperatorError,
)

AGG_METHODS = ("count", "max", "min", "sum", "avg", "median")
COMPARATORS = ("=", "!=", ">", "<", ">=", "<=")

_COMPARATOR_ALIASES = {"==": "=", "≠": "!=", "≥": ">=", "≤": "<="}


@dataclass(frozen=True)
class StepRef:
    index: int  # 1-based step number

    def __str__(self) -> str:
        return f"#{self.index}"


@dataclass(frozen=True)
class Condition:
    comparator: str
    literal: str

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ValueError(f"bad comparator {self.comparator!r}")

    def __str__(self) -> str:
        return f"{self.comparator} {self.literal}"

    @classmethod
    def parse(cls, text: str) -> "Condition":
        text = text.strip()
        m = re.match(r"^(==|!=|>=|<=|≠|≥|≤|=|>|<)\s*(.+)$", text)
        if not m:
            raise ValueError(f"cannot parse condition {text!r}")
        comp = _COMPARATOR_ALIASES.get(m.group(1), m.group(1))
        return cls(comp, m.group(2).strip())


@dataclass(frozen=True)
class Select:
    source: str                       # "table" or "table.column"
    condition: Condition | None = None

    @property
    def table_name(self) -> str:
        return self.source.split(".", 1)[0]

    @property
    def source_column(self) -> str | None:
        parts = self.source.split(".", 1)
        return parts[1] if len(parts) == 2 else None


@dataclass(frozen=True)
class Project:
    attribute: str
    records: StepRef


@dataclass(frozen=True)
class Comparative:
    records: StepRef
    attribute: Union[StepRef, str]
    condition: Condition


@dataclass(frozen=True)
class Superlative:
    records: StepRef
    attribute: Union[StepRef, str]
    extremum: str  # "max" | "min"


@dataclass(frozen=True)
class Aggregate:
    records: StepRef
    method: str


@dataclass(frozen=True)
class Group:
    records: StepRef
    attribute: str
    method: str


@dataclass(frozen=True)
class SetUnion:
    a: StepRef
    b: StepRef


@dataclass(frozen=True)
class Discard:
    a: StepRef
    b: StepRef


@dataclass(frozen=True)
class Intersection:
    a: StepRef
    b: StepRef


@dataclass(frozen=True)
class Sort:
    records: StepRef
    attribute: str
    order: str  # "asc" | "desc"


QdmrOp = Union[
    Select, Project, Comparative, Superlative, Aggregate,
    Group, SetUnion, Discard, Intersection, Sort,
]

OP_KINDS = {
    Select: "SELECT",
    Project: "PROJECT",
    Comparative: "COMPARATIVE",
    Superlative: "SUPERLATIVE",
    Aggregate: "AGGREGATE",
    Group: "GROUP",
    SetUnion: "UNION",
    Discard: "DISCARD",
    Intersection: "INTERSECTION",
    Sort: "SORT",
}


def op_kind(op: QdmrOp) -> str:
    return OP_KINDS[type(op)]


def op_refs(op: QdmrOp) -> list[int]:
    """Every step index the operator references (records and attributes)."""
    refs = []
    for value in vars(op).values():
        if isinstance(value, StepRef):
            refs.append(value.index)
    return refs


@dataclass(frozen=True)
class Pipeline:
    steps: tuple[QdmrOp, ...]
    provenance: str = "decomposed"  # "decomposed" | "user_edited" | "script"

    def __len__(self) -> int:
        return len(self.steps)

    def kinds(self) -> list[str]:
        return [op_kind(op) for op in self.steps]

    def with_provenance(self, provenance: str) -> "Pipeline":
        return replace(self, provenance=provenance)


def same_steps(a: Pipeline, b: Pipeline) -> bool:
    """Structural pipeline equality, ignoring provenance."""
    return a.steps == b.steps


# --- script parsing -----------------------------------------------------------

_STMT = re.compile(r"^#(\d+)\s*=\s*([A-Za-z_]+)\s*\((.*)\)\s*$")


def _split_args(body: str, line: int) -> list[str]:
    args: list[str] = []
    current = []
    in_string = False
    for ch in body:
        if ch == '"':
            in_string = not in_string
            current.append(ch)
        elif ch == "," and not in_string:
            args.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    if in_string:
        raise QdmrSyntaxError("unterminated string literal", line)
    last = "".join(current).strip()
    if last:
        args.append(last)
    elif current and not args:
        pass
    return [a for a in args if a != ""]


def _parse_ref(tok: str, line: int, max_ref: int) -> StepRef:
    m = re.match(r"^#(\d+)$", tok)
    if not m:
        raise QdmrSyntaxError(f"expected a step reference, got {tok!r}", line)
    idx = int(m.group(1))
    if idx < 1:
        raise QdmrSyntaxError(f"step reference {tok} out of range", line)
    if idx >= max_ref:
        raise ForwardReferenceError(
            f"step #{max_ref} references #{idx} before it is defined", line
        )
    return StepRef(idx)


def _parse_string(tok: str, line: int) -> str:
    if len(tok) >= 2 and tok.startswith('"') and tok.endswith('"'):
        return tok[1:-1]
    raise QdmrSyntaxError(f"expected a quoted string, got {tok!r}", line)


def _parse_ref_or_column(tok: str, line: int, max_ref: int) -> Union[StepRef, str]:
    if tok.startswith("#"):
        return _parse_ref(tok, line, max_ref)
    return _parse_string(tok, line)


def _parse_condition(tok: str, line: int) -> Condition:
    try:
        return Condition.parse(_parse_string(tok, line))
    except ValueError as exc:
        raise QdmrSyntaxError(str(exc), line) from exc


def _parse_keyword(tok: str, allowed: tuple[str, ...], line: int) -> str:
    word = tok.strip().lower()
    if word not in allowed:
        raise QdmrSyntaxError(
            f"expected one of {', '.join(allowed)}, got {tok!r}", line
        )
    return word


def _expect_arity(kind: str, args: list[str], allowed: tuple[int, ...], line: int):
    if len(args) not in allowed:
        want = " or ".join(str(a) for a in allowed)
        raise ArityMismatchError(
            f"{kind} takes {want} argument(s), got {len(args)}", line
        )


def parse_statement(text: str, index: int, line: int) -> QdmrOp:
    """Parse one `#k = KIND(args)` statement. `index` is the expected k."""
    m = _STMT.match(text.strip())
    if not m:
        raise QdmrSyntaxError(f"not a `#k = KIND(...)` statement: {text.strip()!r}", line)
    k, kind, body = int(m.group(1)), m.group(2).upper(), m.group(3)
    if k != index:
        raise QdmrSyntaxError(f"expected step #{index}, found #{k}", line)
    args = _split_args(body, line)

    if kind == "SELECT":
        _expect_arity(kind, args, (1, 2), line)
        source = _parse_string(args[0], line)
        cond = _parse_condition(args[1], line) if len(args) == 2 else None
        return Select(source, cond)
    if kind == "PROJECT":
        _expect_arity(kind, args, (2,), line)
        return Project(_parse_string(args[0], line), _parse_ref(args[1], line, index))
    if kind == "COMPARATIVE":
        _expect_arity(kind, args, (3,), line)
        return Comparative(
            _parse_ref(args[0], line, index),
            _parse_ref_or_column(args[1], line, index),
            _parse_condition(args[2], line),
        )
    if kind == "SUPERLATIVE":
        _expect_arity(kind, args, (3,), line)
        return Superlative(
            _parse_ref(args[0], line, index),
            _parse_ref_or_column(args[1], line, index),
            _parse_keyword(args[2], ("max", "min"), line),
        )
    if kind == "AGGREGATE":
        _expect_arity(kind, args, (2,), line)
        return Aggregate(
            records=_parse_ref(args[1], line, index),
            method=_parse_keyword(args[0], AGG_METHODS, line),
        )
    if kind == "GROUP":
        _expect_arity(kind, args, (3,), line)
        return Group(
            records=_parse_ref(args[2], line, index),
            attribute=_parse_string(args[1], line),
            method=_parse_keyword(args[0], AGG_METHODS, line),
        )
    if kind in ("UNION", "DISCARD", "INTERSECTION"):
        _expect_arity(kind, args, (2,), line)
        a = _parse_ref(args[0], line, index)
        b = _parse_ref(args[1], line, index)
        cls = {"UNION": SetUnion, "DISCARD": Discard, "INTERSECTION": Intersection}[kind]
        return cls(a, b)
    if kind == "SORT":
        _expect_arity(kind, args, (3,), line)
        return Sort(
            _parse_ref(args[0], line, index),
            _parse_string(args[1], line),
            _parse_keyword(args[2], ("asc", "desc"), line),
        )
    raise UnknownOperatorError(f"unknown operator {kind}", line)


def parse_pipeline(text: str, provenance: str = "script") -> Pipeline:
    """Parse a newline-separated QDMR script into a Pipeline."""
    steps: list[QdmrOp] = []
    index = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("//") or stripped.startswith("#!"):
            continue
        index += 1
        steps.append(parse_statement(stripped, index, line_no))
    if not steps:
        raise QdmrSyntaxError("empty script", None)
    return Pipeline(tuple(steps), provenance=provenance)


# --- printing -----------------------------------------------------------------

def print_op(op: QdmrOp) -> str:
    if isinstance(op, Select):
        if op.condition is not None:
            return f'SELECT("{op.source}", "{op.condition}")'
        return f'SELECT("{op.source}")'
    if isinstance(op, Project):
        return f'PROJECT("{op.attribute}", {op.records})'
    if isinstance(op, Comparative):
        attr = op.attribute if isinstance(op.attribute, StepRef) else f'"{op.attribute}"'
        return f'COMPARATIVE({op.records}, {attr}, "{op.condition}")'
    if isinstance(op, Superlative):
        attr = op.attribute if isinstance(op.attribute, StepRef) else f'"{op.attribute}"'
        return f"SUPERLATIVE({op.records}, {attr}, {op.extremum})"
    if isinstance(op, Aggregate):
        return f"AGGREGATE({op.method}, {op.records})"
    if isinstance(op, Group):
        return f'GROUP({op.method}, "{op.attribute}", {op.records})'
    if isinstance(op, SetUnion):
        return f"UNION({op.a}, {op.b})"
    if isinstance(op, Discard):
        return f"DISCARD({op.a}, {op.b})"
    if isinstance(op, Intersection):
        return f"INTERSECTION({op.a}, {op.b})"
    if isinstance(op, Sort):
        return f'SORT({op.records}, "{op.attribute}", {op.order})'
    raise TypeError(f"unknown op {op!r}")


def print_pipeline(p: Pipeline) -> str:
    return "\n".join(f"#{i} = {print_op(op)}" for i, op in enumerate(p.steps, start=1))


# --- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class ValidationError:
    code: str
    message: str
    step: int | None = None


def _resolve_attribute(p: Pipeline, op: Union[Comparative, Superlative]) -> str | None:
    """Column name behind the attribute argument, following one PROJECT ref."""
    attr = op.attribute
    if isinstance(attr, str):
        return attr
    target = p.steps[attr.index - 1]
    if isinstance(target, Project):
        return target.attribute
    return None


def validate_pipeline(p: Pipeline, table: Table) -> list[ValidationError]:
    """Check a pipeline against a table schema. Returns [] when valid."""
    errors: list[ValidationError] = []

    def err(code: str, message: str, step: int):
        errors.append(ValidationError(code, message, step))

    if not p.steps:
        return [ValidationError("empty_pipeline", "pipeline has no steps", None)]

    if not isinstance(p.steps[0], Select):
        err("first_step_not_select", "step 1 must be SELECT", 1)

    def check_column(name: str, step: int) -> bool:
        if not table.has_column(name):
            err("unknown_column", f"no column named {name!r}", step)
            return False
        return True

    def check_condition(column: str | None, cond: Condition, step: int):
        if column is None or not table.has_column(column):
            return
        kind = table.column(column).kind
        if kind in ("numerical", "temporal"):
            parser = parse_number if kind == "numerical" else parse_temporal
            if parser(cond.literal) is None:
                err(
                    "kind_mismatch",
                    f"literal {cond.literal!r} does not parse as {kind} "
                    f"for column {column!r}",
                    step,
                )
        else:
            if cond.comparator not in ("=", "!="):
                err(
                    "unordered_comparison",
                    f"comparator {cond.comparator!r} needs an ordered column, "
                    f"but {column!r} is {kind}",
                    step,
                )

    for i, op in enumerate(p.steps, start=1):
        for ref in op_refs(op):
            if ref >= i:
                err("forward_reference", f"step {i} references #{ref}", i)

        if isinstance(op, Select):
            if op.table_name != table.name:
                err("unknown_table", f"no table named {op.table_name!r}", i)
            col = op.source_column
            if col is not None and check_column(col, i) and op.condition:
                check_condition(col, op.condition, i)
            if op.condition is not None and col is None:
                err(
                    "kind_mismatch",
                    "a conditioned SELECT needs a `table.column` source",
                    i,
                )
        elif isinstance(op, Project):
            check_column(op.attribute, i)
        elif isinstance(op, (Comparative, Superlative)):
            attr = _resolve_attribute(p, op)
            if attr is None:
                if isinstance(op.attribute, StepRef) and op.attribute.index < i:
                    err(
                        "unknown_column",
                        f"step {i} attribute {op.attribute} is not a PROJECT",
                        i,
                    )
            else:
                ok = check_column(attr, i)
                if ok and isinstance(op, Comparative):
                    check_condition(attr, op.condition, i)
                if ok and isinstance(op, Superlative):
                    if table.column(attr).kind not in ("numerical", "temporal"):
                        err(
                            "unordered_comparison",
                            f"SUPERLATIVE needs an ordered attribute, "
                            f"{attr!r} is {table.column(attr).kind}",
                            i,
                        )
        elif isinstance(op, Aggregate):
            if op.method != "count" and op.records.index < i:
                target = p.steps[op.records.index - 1]
                numeric_source = isinstance(target, Group) or (
                    isinstance(target, Project)
                    and table.has_column(target.attribute)
                    and table.column(target.attribute).kind == "numerical"
                )
                if not numeric_source:
                    err(
                        "non_numeric_aggregate",
                        f"AGGREGATE({op.method}) needs a numerical PROJECT "
                        f"or a GROUP as input",
                        i,
                    )
        elif isinstance(op, Group):
            ok = check_column(op.attribute, i)
            if ok and op.method != "count":
                if table.column(op.attribute).kind != "numerical":
                    err(
                        "non_numeric_aggregate",
                        f"GROUP({op.method}) needs a numerical attribute, "
                        f"{op.attribute!r} is {table.column(op.attribute).kind}",
                        i,
                    )
        elif isinstance(op, Sort):
            check_column(op.attribute, i)

    return errors


def dependency_graph(p: Pipeline) -> dict[int, set[int]]:
    """Edges j -> i (1-based) whenever step i references step j."""
    edges: dict[int, set[int]] = {i: set() for i in range(1, len(p.steps) + 1)}
    for i, op in enumerate(p.steps, start=1):
        for j in op_refs(op):
            if j != i:
                edges[j].add(i)
    return edges
