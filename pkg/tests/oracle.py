"""Independent naive reference executor for differential testing.

Deliberately written from scratch against the operator descriptions, with
no imports from datamator.executor: it works on plain row dictionaries,
re-deriving every value by full scans. Slow and simple on purpose.
"""

from __future__ import annotations

import datetime
import re

from datamator.qdmr import (
    Aggregate,
    Comparative,
    Discard,
    Group,
    Intersection,
    Pipeline,
    Project,
    Select,
    SetUnion,
    Sort,
    StepRef,
    Superlative,
)


def _norm(text: str) -> str:
    words = [re.sub(r"^[^\w.%-]+|[^\w.%-]+$", "", w.lower()) for w in text.split()]
    return " ".join(w for w in words if w)


def _as_number(raw: str, kind: str):
    if kind == "numerical":
        try:
            return float(raw)
        except ValueError:
            return None
    if kind == "temporal":
        if re.match(r"^\d{4}$", raw.strip()):
            return float(raw)
        try:
            return float(datetime.date.fromisoformat(raw.strip()).toordinal())
        except ValueError:
            return None
    return None


class OracleTable:
    """Rows as dicts plus a kind per column."""

    def __init__(self, name: str, kinds: dict[str, str], rows: list[dict]):
        self.name = name
        self.kinds = kinds
        self.rows = rows  # each dict carries "_id" plus column -> raw | None

    @classmethod
    def from_table(cls, table) -> "OracleTable":
        kinds = {c.name: c.kind for c in table.columns}
        rows = []
        for rid in table.row_ids:
            d = {"_id": rid}
            for c in table.columns:
                d[c.name] = table.cell(rid, c.name)
            rows.append(d)
        return cls(table.name, kinds, rows)

    def value(self, row: dict, column: str):
        raw = row[column]
        if raw is None:
            return None
        kind = self.kinds[column]
        if kind in ("numerical", "temporal"):
            return _as_number(raw, kind)
        return _norm(raw)


def _rows_by_ids(table: OracleTable, ids: list[int]) -> list[dict]:
    lookup = {r["_id"]: r for r in table.rows}
    return [lookup[i] for i in ids]


def _literal(table: OracleTable, column: str, text: str):
    kind = table.kinds[column]
    if kind in ("numerical", "temporal"):
        return _as_number(text, kind)
    return _norm(text)


def _passes(cell, comparator: str, literal) -> bool:
    if cell is None or literal is None:
        return False
    return {
        "=": cell == literal,
        "!=": cell != literal,
        ">": cell > literal,
        "<": cell < literal,
        ">=": cell >= literal,
        "<=": cell <= literal,
    }[comparator]


def _attr_column(op, results) -> str:
    if isinstance(op.attribute, StepRef):
        return results[op.attribute.index - 1]["attribute"]
    return op.attribute


def _agg(values: list[float], method: str) -> float:
    if method == "count":
        return float(len(values))
    if method == "sum":
        total = 0.0
        for v in values:
            total += v
        return total
    assert values, "empty aggregate input should have been rejected upstream"
    if method == "max":
        best = values[0]
        for v in values[1:]:
            if v > best:
                best = v
        return best
    if method == "min":
        best = values[0]
        for v in values[1:]:
            if v < best:
                best = v
        return best
    if method == "avg":
        return _agg(values, "sum") / len(values)
    if method == "median":
        ordered = sorted(values)
        half, odd = divmod(len(ordered), 2)
        if odd:
            return float(ordered[half])
        return (ordered[half - 1] + ordered[half]) / 2.0
    raise AssertionError(method)


def run_pipeline(p: Pipeline, table: OracleTable) -> list[dict]:
    """Each result is a dict: {"ids": [...]} for record-like outputs,
    {"scalar": x} for aggregates, {"groups": [(key, ids, value)]} for
    grouping; projections also carry "attribute"."""
    results: list[dict] = []
    for op in p.steps:
        if isinstance(op, Select):
            ids = [r["_id"] for r in table.rows]
            if op.condition is not None:
                col = op.source_column
                lit = _literal(table, col, op.condition.literal)
                ids = [
                    r["_id"]
                    for r in table.rows
                    if _passes(table.value(r, col), op.condition.comparator, lit)
                ]
            results.append({"ids": ids})

        elif isinstance(op, Project):
            ids = results[op.records.index - 1]["ids"]
            results.append({"ids": list(ids), "attribute": op.attribute})

        elif isinstance(op, Comparative):
            ids = results[op.records.index - 1]["ids"]
            col = _attr_column(op, results)
            lit = _literal(table, col, op.condition.literal)
            keep = [
                r["_id"]
                for r in _rows_by_ids(table, ids)
                if _passes(table.value(r, col), op.condition.comparator, lit)
            ]
            results.append({"ids": keep})

        elif isinstance(op, Superlative):
            ids = results[op.records.index - 1]["ids"]
            col = _attr_column(op, results)
            pairs = [
                (r["_id"], table.value(r, col))
                for r in _rows_by_ids(table, ids)
                if table.value(r, col) is not None
            ]
            values = [v for _, v in pairs]
            best = _agg(values, op.extremum)
            results.append({"ids": [i for i, v in pairs if v == best]})

        elif isinstance(op, Aggregate):
            prior = results[op.records.index - 1]
            if "groups" in prior:
                ids = [i for _, members, _ in prior["groups"] for i in members]
                values = [v for _, _, v in prior["groups"]]
                if op.method == "count":
                    results.append({"scalar": float(len(prior["groups"])), "ids": ids})
                else:
                    results.append({"scalar": _agg(values, op.method), "ids": ids})
            else:
                ids = prior["ids"]
                if op.method == "count":
                    results.append({"scalar": float(len(ids)), "ids": list(ids)})
                else:
                    col = prior["attribute"]
                    values = [
                        table.value(r, col)
                        for r in _rows_by_ids(table, ids)
                        if table.value(r, col) is not None
                    ]
                    results.append({"scalar": _agg(values, op.method), "ids": list(ids)})

        elif isinstance(op, Group):
            ids = sorted(results[op.records.index - 1]["ids"])
            keyed: dict[str, list[int]] = {}
            for r in _rows_by_ids(table, ids):
                raw = r[op.attribute]
                if raw is None:
                    continue
                keyed.setdefault(_norm(raw), []).append(r["_id"])
            groups = []
            for key, members in keyed.items():
                if op.method == "count":
                    value = float(len(members))
                else:
                    values = [
                        table.value(r, op.attribute)
                        for r in _rows_by_ids(table, members)
                        if table.value(r, op.attribute) is not None
                    ]
                    value = _agg(values, op.method)
                groups.append((key, members, value))
            results.append({"groups": groups})

        elif isinstance(op, SetUnion):
            a = results[op.a.index - 1]["ids"]
            b = results[op.b.index - 1]["ids"]
            merged = list(a)
            for i in b:
                if i not in merged:
                    merged.append(i)
            results.append({"ids": merged})

        elif isinstance(op, Discard):
            a = results[op.a.index - 1]["ids"]
            b = results[op.b.index - 1]["ids"]
            results.append({"ids": [i for i in a if i not in b]})

        elif isinstance(op, Intersection):
            a = results[op.a.index - 1]["ids"]
            b = results[op.b.index - 1]["ids"]
            results.append({"ids": [i for i in a if i in b]})

        elif isinstance(op, Sort):
            ids = results[op.records.index - 1]["ids"]
            rows = _rows_by_ids(table, ids)
            with_value = [
                r["_id"] for r in rows if table.value(r, op.attribute) is not None
            ]
            without = [r["_id"] for r in rows if table.value(r, op.attribute) is None]
            lookup = {r["_id"]: table.value(r, op.attribute) for r in rows}
            # insertion sort keeps equal keys in input order
            ordered: list[int] = []
            for rid in with_value:
                pos = len(ordered)
                for k, existing in enumerate(ordered):
                    if op.order == "asc" and lookup[existing] > lookup[rid]:
                        pos = k
                        break
                    if op.order == "desc" and lookup[existing] < lookup[rid]:
                        pos = k
                        break
                ordered.insert(pos, rid)
            results.append({"ids": ordered + without})

        else:
            raise AssertionError(f"oracle cannot run {op!r}")
    return results
