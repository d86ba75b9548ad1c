"""Deterministic query decomposition plus the feedback ledger.

Restricted natural-language queries are matched against a fixed pattern
grammar over the linearized query. Slots are filled from two sources: the
value block (table cells mentioned in the query become filter conditions)
and column-name mentions. When several patterns match, the one with the
longest anchor wins; ties break by registration order.

User corrections land in a ledger keyed by (normalized query, dataset).
A ledger hit bypasses the grammar entirely, so recording a correction
changes exactly one key and provably leaves every other decomposition
untouched.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .dataset import LinearizedQuery, Table, linearize_query, normalize_text
from .errors import InvalidCorrectionError, UnrecognizedQueryError
from .qdmr import (
    Aggregate,
    Comparative,
    Condition,
    Group,
    Intersection,
    Pipeline,
    Project,
    QdmrOp,
    Select,
    Sort,
    StepRef,
    parse_pipeline,
    print_pipeline,
    same_steps,
    validate_pipeline,
)

_LT = {("less", "than"), ("fewer", "than"), ("under",), ("below",)}
_GT = {("more", "than"), ("greater", "than"), ("over",), ("above",)}
_GE = {("at", "least"), ("no", "less", "than")}
_LE = {("at", "most"), ("no", "more", "than")}
_NE = {("not",), ("except",), ("not", "from"), ("not", "in"), ("not", "equal", "to")}

_MAX_WORDS = ("maximum", "max", "highest", "largest", "most", "biggest")
_MIN_WORDS = ("minimum", "min", "lowest", "smallest", "fewest", "least")
_AGG_WORDS = {"average": "avg", "mean": "avg", "total": "sum", "sum": "sum", "median": "median"}
_LIST_WORDS = ("which", "list", "show", "find")
_DESC_WORDS = ("descending", "desc", "decreasing")


@dataclass(frozen=True)
class QueryCondition:
    column: str
    comparator: str
    literal: str
    position: int  # token index of the matched value


def _comparator_before(words: tuple[str, ...], start: int, ordered: bool) -> str:
    for size in (3, 2, 1):
        if start - size < 0:
            continue
        window = tuple(words[start - size : start])
        if ordered:
            if window in _GE:
                return ">="
            if window in _LE:
                return "<="
            if window in _LT:
                return "<"
            if window in _GT:
                return ">"
        if window in _NE:
            return "!="
    return "="


def extract_conditions(lin: LinearizedQuery, table: Table) -> list[QueryCondition]:
    """One condition per matched value span, in query order. When the same
    span matches cells of several columns, the first column in schema
    order wins."""
    out: list[QueryCondition] = []
    taken_spans: set[tuple[int, int]] = set()
    for match in lin.values:
        span = (match.start, match.end)
        if span in taken_spans:
            continue
        taken_spans.add(span)
        kind = table.column(match.column).kind
        ordered = kind in ("numerical", "temporal")
        comparator = _comparator_before(lin.words, match.start, ordered)
        out.append(QueryCondition(match.column, comparator, match.value, match.start))
    return sorted(out, key=lambda c: c.position)


def _column_mentions(lin: LinearizedQuery, table: Table) -> list[tuple[int, str]]:
    """(position, column) pairs for every column name spoken in the query.
    Underscored names also match their space-separated form."""
    words = list(lin.words)
    found = []
    for col in table.columns:
        variants = {
            tuple(normalize_text(col.name).split()),
            tuple(normalize_text(col.name.replace("_", " ")).split()),
        }
        for needle in variants:
            if not needle:
                continue
            for i in range(len(words) - len(needle) + 1):
                if tuple(words[i : i + len(needle)]) == needle:
                    found.append((i, col.name))
                    break
            else:
                continue
            break
    return sorted(found)


def _mentioned_column(lin: LinearizedQuery, table: Table, kinds: tuple[str, ...]) -> str | None:
    for _, name in _column_mentions(lin, table):
        if table.column(name).kind in kinds:
            return name
    return None


def _has_bigram(words: tuple[str, ...], first: str, second: str) -> bool:
    return any(a == first and b == second for a, b in zip(words, words[1:]))


# --- pipeline builders ------------------------------------------------------


def _project_filter_chain(
    steps: list[QdmrOp], conditions: list[QueryCondition]
) -> int:
    """Append PROJECT + COMPARATIVE per condition; returns the index of the
    last record-set step (1-based)."""
    rec = len(steps)
    for cond in conditions:
        steps.append(Project(cond.column, StepRef(rec)))
        steps.append(
            Comparative(
                StepRef(rec),
                StepRef(len(steps)),
                Condition(cond.comparator, cond.literal),
            )
        )
        rec = len(steps)
    return rec


def _group_filter_chain(
    steps: list[QdmrOp], conditions: list[QueryCondition]
) -> int:
    """Append GROUP + COMPARATIVE per condition, then one INTERSECTION that
    narrows the view to the surviving records."""
    rec = len(steps)
    base = rec
    for cond in conditions:
        steps.append(Group(StepRef(rec), cond.column, "count"))
        steps.append(
            Comparative(
                StepRef(len(steps)),
                cond.column,
                Condition(cond.comparator, cond.literal),
            )
        )
        rec = len(steps)
    if conditions:
        steps.append(Intersection(StepRef(base), StepRef(rec)))
        rec = len(steps)
    return rec


@dataclass(frozen=True)
class QueryPattern:
    id: str
    anchor_len: int
    build: Callable[[LinearizedQuery, Table], Optional[Pipeline]]


def _build_count(lin: LinearizedQuery, table: Table) -> Pipeline | None:
    if not _has_bigram(lin.words, "how", "many"):
        return None
    steps: list[QdmrOp] = [Select(table.name)]
    rec = _project_filter_chain(steps, extract_conditions(lin, table))
    steps.append(Aggregate(StepRef(rec), "count"))
    return Pipeline(tuple(steps))


def _build_superlative(lin: LinearizedQuery, table: Table) -> Pipeline | None:
    extremum = None
    for w in lin.words:
        if w in _MAX_WORDS:
            extremum = "max"
            break
        if w in _MIN_WORDS:
            extremum = "min"
            break
    if extremum is None:
        return None
    target = _mentioned_column(lin, table, ("numerical",))
    if target is None:
        return None
    steps: list[QdmrOp] = [Select(table.name)]
    conditions = [c for c in extract_conditions(lin, table) if c.column != target]
    rec = _group_filter_chain(steps, conditions)
    steps.append(Project(target, StepRef(rec)))
    steps.append(Aggregate(StepRef(len(steps)), extremum))
    return Pipeline(tuple(steps))


def _build_aggregate(lin: LinearizedQuery, table: Table) -> Pipeline | None:
    method = next((_AGG_WORDS[w] for w in lin.words if w in _AGG_WORDS), None)
    if method is None:
        return None
    target = _mentioned_column(lin, table, ("numerical",))
    if target is None:
        return None
    steps: list[QdmrOp] = [Select(table.name)]
    conditions = [c for c in extract_conditions(lin, table) if c.column != target]
    rec = _project_filter_chain(steps, conditions)
    steps.append(Project(target, StepRef(rec)))
    steps.append(Aggregate(StepRef(len(steps)), method))
    return Pipeline(tuple(steps))


def _build_sort(lin: LinearizedQuery, table: Table) -> Pipeline | None:
    anchor = None
    for i, (a, b) in enumerate(zip(lin.words, lin.words[1:])):
        if a in ("sorted", "sort", "ordered", "order") and b == "by":
            anchor = i
            break
    if anchor is None:
        return None
    mentions = [(pos, col) for pos, col in _column_mentions(lin, table) if pos > anchor]
    if not mentions:
        return None
    order = "desc" if any(w in _DESC_WORDS for w in lin.words) else "asc"
    return Pipeline((Select(table.name), Sort(StepRef(1), mentions[0][1], order)))


def _build_group(lin: LinearizedQuery, table: Table) -> Pipeline | None:
    anchor = None
    for i, w in enumerate(lin.words):
        if w in ("by", "per"):
            anchor = i
            break
    if anchor is None:
        return None
    mentions = [(pos, col) for pos, col in _column_mentions(lin, table) if pos > anchor]
    if not mentions:
        return None
    return Pipeline((Select(table.name), Group(StepRef(1), mentions[0][1], "count")))


def _build_list(lin: LinearizedQuery, table: Table) -> Pipeline | None:
    if not any(w in _LIST_WORDS for w in lin.words):
        return None
    steps: list[QdmrOp] = [Select(table.name)]
    _group_filter_chain(steps, extract_conditions(lin, table))
    return Pipeline(tuple(steps))


PATTERNS: tuple[QueryPattern, ...] = (
    QueryPattern("count", 2, _build_count),
    QueryPattern("sort", 2, _build_sort),
    QueryPattern("superlative", 1, _build_superlative),
    QueryPattern("aggregate", 1, _build_aggregate),
    QueryPattern("group", 1, _build_group),
    QueryPattern("list", 1, _build_list),
)


# --- feedback ledger ---------------------------------------------------------


@dataclass(frozen=True)
class FeedbackRecord:
    query_key: str
    dataset: str
    original: str       # script text of the decomposition being corrected
    corrected: str      # script text that should be produced instead
    created_at: int     # epoch milliseconds

    def to_json(self) -> str:
        return json.dumps(
            {
                "query_key": self.query_key,
                "dataset": self.dataset,
                "original": self.original,
                "corrected": self.corrected,
                "created_at": self.created_at,
            },
            sort_keys=True,
        )


class FeedbackStore:
    """Corrections keyed by (query_key, dataset); newest wins.

    Persisted as a line-delimited append log. Writers serialize on a lock
    and the in-memory index swaps atomically, so readers see either the
    previous or the new ledger, never a partial update.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], FeedbackRecord] = {}
        if self._path is not None and self._path.exists():
            self._load()

    def _load(self) -> None:
        records: dict[tuple[str, str], FeedbackRecord] = {}
        for line in self._path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            rec = FeedbackRecord(
                raw["query_key"],
                raw["dataset"],
                raw.get("original", ""),
                raw["corrected"],
                int(raw["created_at"]),
            )
            records[(rec.query_key, rec.dataset)] = rec
        self._records = records

    def lookup(self, query_key: str, dataset: str) -> FeedbackRecord | None:
        return self._records.get((query_key, dataset))

    def add(self, record: FeedbackRecord) -> None:
        with self._lock:
            updated = dict(self._records)
            updated[(record.query_key, record.dataset)] = record
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")
                    fh.flush()
            self._records = updated

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[FeedbackRecord]:
        return list(self._records.values())


def record_feedback(
    store: FeedbackStore,
    query: str,
    table: Table,
    original: Pipeline | None,
    corrected: Pipeline,
    *,
    now_ms: Callable[[], int] | None = None,
) -> FeedbackRecord:
    """Validate and store a correction. After this call, decomposing any
    query normalizing to the same text on this dataset returns the
    correction; every other key is untouched."""
    errors = validate_pipeline(corrected, table)
    if errors:
        detail = "; ".join(f"{e.code}: {e.message}" for e in errors)
        raise InvalidCorrectionError(f"correction fails validation: {detail}")
    clock = now_ms or (lambda: int(time.time() * 1000))
    record = FeedbackRecord(
        query_key=normalize_text(query),
        dataset=table.name,
        original=print_pipeline(original) if original is not None else "",
        corrected=print_pipeline(corrected),
        created_at=clock(),
    )
    store.add(record)
    return record


# --- decomposition --------------------------------------------------------------


def decompose(lin: LinearizedQuery, table: Table, store: FeedbackStore | None = None) -> Pipeline:
    """Map a linearized query to a pipeline: ledger first, grammar second."""
    if store is not None:
        hit = store.lookup(lin.normalized, table.name)
        if hit is not None:
            return parse_pipeline(hit.corrected, provenance="user_edited")

    candidates: list[tuple[int, int, Pipeline]] = []
    for reg, pattern in enumerate(PATTERNS):
        built = pattern.build(lin, table)
        if built is None:
            continue
        if validate_pipeline(built, table):
            continue  # a slot resolved against the wrong schema; skip
        candidates.append((pattern.anchor_len, reg, built))
    if not candidates:
        raise UnrecognizedQueryError(
            f"no pattern matches {lin.raw!r}; provide a script instead"
        )
    candidates.sort(key=lambda c: (-c[0], c[1]))
    return candidates[0][2]


def decompose_text(query: str, table: Table, store: FeedbackStore | None = None) -> Pipeline:
    return decompose(linearize_query(query, table), table, store)


# --- metrics ---------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    exact_match_rate: float
    success_rate: float
    retain_rate: float
    total: int
    initially_correct: int
    initially_incorrect: int
    vacuous: bool  # True when the case list was empty (rates default to 1.0)


def eval_metrics(
    cases: list[tuple[str, Table, Pipeline]],
    store: FeedbackStore,
) -> MetricsReport:
    """Exact-match over the cases, then success and retention after
    recording a correction for every initially wrong decomposition.

    Corrections are written into the given store; pass a scratch store to
    keep the evaluation side-effect free.
    """
    if not cases:
        return MetricsReport(1.0, 1.0, 1.0, 0, 0, 0, True)

    def attempt(query: str, table: Table) -> Pipeline | None:
        try:
            return decompose_text(query, table, store)
        except UnrecognizedQueryError:
            return None

    first = [attempt(q, t) for q, t, _ in cases]
    correct = [
        got is not None and same_steps(got, gold)
        for got, (_, _, gold) in zip(first, cases)
    ]
    exact = sum(correct) / len(cases)

    for ok, got, (query, table, gold) in zip(correct, first, cases):
        if not ok:
            record_feedback(store, query, table, got, gold)

    wrong_cases = [case for ok, case in zip(correct, cases) if not ok]
    fixed = sum(
        1
        for query, table, gold in wrong_cases
        if (got := attempt(query, table)) is not None and same_steps(got, gold)
    )
    success = fixed / len(wrong_cases) if wrong_cases else 1.0

    right_cases = [case for ok, case in zip(correct, cases) if ok]
    kept = sum(
        1
        for query, table, gold in right_cases
        if (got := attempt(query, table)) is not None and same_steps(got, gold)
    )
    retain = kept / len(right_cases) if right_cases else 1.0

    return MetricsReport(
        exact_match_rate=exact,
        success_rate=success,
        retain_rate=retain,
        total=len(cases),
        initially_correct=len(right_cases),
        initially_incorrect=len(wrong_cases),
        vacuous=False,
    )
