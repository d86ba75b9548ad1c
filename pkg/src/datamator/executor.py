"""Execute validated pipelines against a table, one StepValue per operator.

All functions are pure: tables and pipelines are immutable and every
operator result is derived only from the table and earlier step values,
so runs are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .dataset import Table, normalize_text, parse_number, parse_temporal
from .errors import (
    EmptyInputError,
    ExecutionError,
    KindMismatchError,
    NonNumericValueError,
    UnorderedComparisonError,
    VariantMismatchError,
)
from .qdmr import (
    Aggregate,
    Comparative,
    Condition,
    Discard,
    Group,
    Intersection,
    Pipeline,
    Project,
    QdmrOp,
    Select,
    SetUnion,
    Sort,
    StepRef,
    Superlative,
)


@dataclass(frozen=True)
class RecordSet:
    row_ids: tuple[int, ...]


@dataclass(frozen=True)
class ColumnView:
    row_ids: tuple[int, ...]
    attribute: str
    values: tuple[str | None, ...]  # aligned to row_ids


@dataclass(frozen=True)
class GroupEntry:
    key: str
    row_ids: tuple[int, ...]
    agg_value: float


@dataclass(frozen=True)
class Grouped:
    attribute: str
    groups: tuple[GroupEntry, ...]
    method: str


@dataclass(frozen=True)
class Scalar:
    value: float
    method: str
    source_row_ids: tuple[int, ...]


@dataclass(frozen=True)
class Ordered:
    row_ids: tuple[int, ...]
    attribute: str
    order: str


StepValue = Union[RecordSet, ColumnView, Grouped, Scalar, Ordered]


def row_ids_of(value: StepValue) -> tuple[int, ...]:
    """The record identity of any step value (groups concatenate in key
    order, scalars expose the rows they aggregated)."""
    if isinstance(value, (RecordSet, ColumnView, Ordered)):
        return value.row_ids
    if isinstance(value, Grouped):
        out: list[int] = []
        for g in value.groups:
            out.extend(g.row_ids)
        return tuple(out)
    if isinstance(value, Scalar):
        return value.source_row_ids
    raise VariantMismatchError(f"no rows behind {type(value).__name__}")


def _records_arg(env: list[StepValue], ref: StepRef, op_name: str) -> tuple[int, ...]:
    value = env[ref.index - 1]
    if isinstance(value, Scalar):
        raise VariantMismatchError(f"{op_name} cannot consume a scalar ({ref})")
    return row_ids_of(value)


def _attribute_of(env: list[StepValue], attr: Union[StepRef, str], op_name: str) -> str:
    if isinstance(attr, str):
        return attr
    value = env[attr.index - 1]
    if isinstance(value, ColumnView):
        return value.attribute
    raise VariantMismatchError(
        f"{op_name} attribute {attr} must point at a PROJECT output"
    )


def _comparable(table: Table, row_id: int, column: str):
    """Value used in comparisons: a number for ordered kinds, the
    normalized text otherwise, None for nulls."""
    kind = table.column(column).kind
    if kind in ("numerical", "temporal"):
        return table.numeric(row_id, column)
    raw = table.cell(row_id, column)
    return None if raw is None else normalize_text(raw)


def _condition_literal(table: Table, column: str, cond: Condition):
    kind = table.column(column).kind
    if kind == "numerical":
        value = parse_number(cond.literal)
        if value is None:
            raise KindMismatchError(
                f"literal {cond.literal!r} is not numerical for {column!r}"
            )
        return value
    if kind == "temporal":
        value = parse_temporal(cond.literal)
        if value is None:
            raise KindMismatchError(
                f"literal {cond.literal!r} is not a year or ISO date for {column!r}"
            )
        return float(value)
    if cond.comparator not in ("=", "!="):
        raise UnorderedComparisonError(
            f"comparator {cond.comparator!r} on {kind} column {column!r}"
        )
    return normalize_text(cond.literal)


def _satisfies(cell_value, comparator: str, literal) -> bool:
    if cell_value is None:
        return False  # nulls fail every comparison, including !=
    if comparator == "=":
        return cell_value == literal
    if comparator == "!=":
        return cell_value != literal
    if comparator == ">":
        return cell_value > literal
    if comparator == "<":
        return cell_value < literal
    if comparator == ">=":
        return cell_value >= literal
    if comparator == "<=":
        return cell_value <= literal
    raise ValueError(f"unknown comparator {comparator!r}")


def _filter_rows(
    table: Table, rows: tuple[int, ...], column: str, cond: Condition
) -> tuple[int, ...]:
    literal = _condition_literal(table, column, cond)
    return tuple(
        r for r in rows if _satisfies(_comparable(table, r, column), cond.comparator, literal)
    )


def _numeric_values(
    table: Table, rows: tuple[int, ...], column: str
) -> list[float]:
    """Non-null numeric values of a column over rows; rejects kinds that
    have no numeric reading."""
    kind = table.column(column).kind
    if kind not in ("numerical", "temporal"):
        raise NonNumericValueError(f"column {column!r} is {kind}, not numeric")
    out = []
    for r in rows:
        v = table.numeric(r, column)
        if v is not None:
            out.append(v)
    return out


def _aggregate(values: list[float], method: str) -> float:
    if method == "count":
        return float(len(values))
    if method == "sum":
        return float(sum(values))
    if not values:
        raise EmptyInputError(f"{method} over an empty value set")
    if method == "max":
        return float(max(values))
    if method == "min":
        return float(min(values))
    if method == "avg":
        return sum(values) / len(values)
    if method == "median":
        ordered = sorted(values)
        mid = len(ordered) // 2
        if len(ordered) % 2 == 1:
            return float(ordered[mid])
        return (ordered[mid - 1] + ordered[mid]) / 2.0
    raise ValueError(f"unknown aggregation method {method!r}")


def _ordered_union(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    seen = set(a)
    out = list(a)
    for r in b:
        if r not in seen:
            seen.add(r)
            out.append(r)
    return tuple(out)


def eval_op(op: QdmrOp, env: list[StepValue], table: Table) -> StepValue:
    """Evaluate one operator given the values of all earlier steps."""
    if isinstance(op, Select):
        rows = tuple(table.row_ids)
        if op.condition is not None:
            column = op.source_column
            if column is None:
                raise KindMismatchError("conditioned SELECT needs a table.column source")
            rows = _filter_rows(table, rows, column, op.condition)
        return RecordSet(rows)

    if isinstance(op, Project):
        rows = _records_arg(env, op.records, "PROJECT")
        values = tuple(table.cell(r, op.attribute) for r in rows)
        return ColumnView(rows, op.attribute, values)

    if isinstance(op, Comparative):
        rows = _records_arg(env, op.records, "COMPARATIVE")
        column = _attribute_of(env, op.attribute, "COMPARATIVE")
        return RecordSet(_filter_rows(table, rows, column, op.condition))

    if isinstance(op, Superlative):
        rows = _records_arg(env, op.records, "SUPERLATIVE")
        column = _attribute_of(env, op.attribute, "SUPERLATIVE")
        valued = [(r, _comparable(table, r, column)) for r in rows]
        if table.column(column).kind not in ("numerical", "temporal"):
            raise UnorderedComparisonError(
                f"SUPERLATIVE over unordered column {column!r}"
            )
        present = [(r, v) for r, v in valued if v is not None]
        if not present:
            raise EmptyInputError("SUPERLATIVE over an empty record set")
        best = max(v for _, v in present) if op.extremum == "max" else min(
            v for _, v in present
        )
        return RecordSet(tuple(r for r, v in present if v == best))

    if isinstance(op, Aggregate):
        value = env[op.records.index - 1]
        if isinstance(value, Scalar):
            raise VariantMismatchError("AGGREGATE cannot consume a scalar")
        if isinstance(value, Grouped):
            rows = row_ids_of(value)
            numbers = [g.agg_value for g in value.groups]
            if op.method == "count":
                return Scalar(float(len(value.groups)), "count", rows)
            return Scalar(_aggregate(numbers, op.method), op.method, rows)
        rows = row_ids_of(value)
        if op.method == "count":
            return Scalar(float(len(rows)), "count", rows)
        if not isinstance(value, ColumnView):
            raise NonNumericValueError(
                f"AGGREGATE({op.method}) needs projected values, got "
                f"{type(value).__name__}"
            )
        numbers = _numeric_values(table, rows, value.attribute)
        return Scalar(_aggregate(numbers, op.method), op.method, rows)

    if isinstance(op, Group):
        rows = _records_arg(env, op.records, "GROUP")
        # First-appearance order in the table: scan members by row_id.
        buckets: dict[str, list[int]] = {}
        for r in sorted(rows):
            raw = table.cell(r, op.attribute)
            if raw is None:
                continue  # null keys join no group
            key = normalize_text(raw)
            buckets.setdefault(key, []).append(r)
        groups = []
        for key, members in buckets.items():
            if op.method == "count":
                agg = float(len(members))
            else:
                agg = _aggregate(
                    _numeric_values(table, tuple(members), op.attribute), op.method
                )
            groups.append(GroupEntry(key, tuple(members), agg))
        return Grouped(op.attribute, tuple(groups), op.method)

    if isinstance(op, SetUnion):
        a = _records_arg(env, op.a, "UNION")
        b = _records_arg(env, op.b, "UNION")
        return RecordSet(_ordered_union(a, b))

    if isinstance(op, Discard):
        a = _records_arg(env, op.a, "DISCARD")
        b = set(_records_arg(env, op.b, "DISCARD"))
        return RecordSet(tuple(r for r in a if r not in b))

    if isinstance(op, Intersection):
        a = _records_arg(env, op.a, "INTERSECTION")
        b = set(_records_arg(env, op.b, "INTERSECTION"))
        return RecordSet(tuple(r for r in a if r in b))

    if isinstance(op, Sort):
        rows = _records_arg(env, op.records, "SORT")
        kind = table.column(op.attribute).kind

        def sort_value(r: int):
            if kind in ("numerical", "temporal"):
                return table.numeric(r, op.attribute)
            raw = table.cell(r, op.attribute)
            return None if raw is None else normalize_text(raw)

        non_null = [r for r in rows if sort_value(r) is not None]
        nulls = [r for r in rows if sort_value(r) is None]
        # sorted() keeps ties in input order even with reverse=True;
        # nulls always go last regardless of direction.
        ordered = sorted(non_null, key=sort_value, reverse=(op.order == "desc"))
        return Ordered(tuple(ordered) + tuple(nulls), op.attribute, op.order)

    raise TypeError(f"unknown operator {op!r}")


def execute_pipeline(p: Pipeline, table: Table) -> list[StepValue]:
    """Evaluate every step in order; errors carry the failing step index."""
    env: list[StepValue] = []
    for i, op in enumerate(p.steps, start=1):
        try:
            env.append(eval_op(op, env, table))
        except ExecutionError:
            raise
        except Exception as exc:
            raise ExecutionError(i, exc) from exc
    return env
