"""Tabular data: CSV loading, column kind inference, query linearization.

A loaded table is immutable.  Each row gets a stable integer ``row_id``
(its position at load time) that the executor and the layout engine use as
the unit identity for the whole lifetime of a session.
"""

from __future__ import annotations

import csv
import datetime
import io
import re
from dataclasses import dataclass, field

from .errors import AllNullError, DuplicateColumnError, MalformedCsvError

Kind = str  # "numerical" | "categorical" | "temporal" | "text"

KINDS = ("numerical", "categorical", "temporal", "text")

NULL_TOKENS = {"", "na", "null"}

# Sentinels delimiting the schema blocks of a linearized query.
T_OPEN, T_CLOSE = "<T>", "</T>"
C_OPEN, C_CLOSE = "<C>", "</C>"
V_OPEN, V_CLOSE = "<V>", "</V>"

_PUNCT_EDGE = re.compile(r"^[^\w.%-]+|[^\w.%-]+$")
_YEAR = re.compile(r"^\d{4}$")


def normalize_token(tok: str) -> str:
    """Lowercase and strip edge punctuation; '2000?' -> '2000'."""
    return _PUNCT_EDGE.sub("", tok.lower().strip())


def tokenize(text: str) -> list[str]:
    return [t for t in (normalize_token(w) for w in text.split()) if t]


def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(tokenize(text))


def is_null(cell: str) -> bool:
    return cell.strip().lower() in NULL_TOKENS


def parse_number(cell: str) -> float | None:
    try:
        return float(cell.strip())
    except ValueError:
        return None


def parse_temporal(cell: str) -> int | None:
    """A 4-digit year parses to the year, an ISO date to its ordinal day."""
    s = cell.strip()
    if _YEAR.match(s):
        return int(s)
    try:
        return datetime.date.fromisoformat(s).toordinal()
    except ValueError:
        return None


@dataclass(frozen=True)
class Column:
    name: str
    kind: Kind


@dataclass(frozen=True)
class Table:
    """A named rectangular dataset. Cells are raw strings, None when null."""

    name: str
    columns: tuple[Column, ...]
    rows: tuple[tuple[str | None, ...], ...]

    def __post_init__(self):
        seen = set()
        for col in self.columns:
            key = col.name.lower()
            if key in seen:
                raise DuplicateColumnError(f"duplicate column {col.name!r}")
            seen.add(key)
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise MalformedCsvError(
                    f"row {i} has {len(row)} cells, expected {len(self.columns)}"
                )

    @property
    def row_ids(self) -> range:
        return range(len(self.rows))

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(name)

    def cell(self, row_id: int, column: str) -> str | None:
        return self.rows[row_id][self.column_index(column)]

    def numeric(self, row_id: int, column: str) -> float | None:
        """The comparable value of a cell: float for numerical columns,
        year/ordinal for temporal ones, None for nulls and other kinds."""
        raw = self.cell(row_id, column)
        if raw is None:
            return None
        kind = self.column(column).kind
        if kind == "numerical":
            return parse_number(raw)
        if kind == "temporal":
            t = parse_temporal(raw)
            return float(t) if t is not None else None
        return None


def infer_column_kind(cells: list[str | None]) -> Kind:
    """Pick a kind from raw cells. Precedence: temporal > numerical >
    categorical > text. Raises AllNullError when nothing is non-null."""
    present = [c for c in cells if c is not None and not is_null(c)]
    if not present:
        raise AllNullError("column has no non-null cells")
    n = len(present)
    temporal = sum(1 for c in present if parse_temporal(c) is not None)
    if temporal / n >= 0.95:
        return "temporal"
    numeric = sum(1 for c in present if parse_number(c) is not None)
    if numeric / n >= 0.95:
        return "numerical"
    distinct = len({normalize_text(c) for c in present})
    if distinct <= max(20, 0.2 * len(cells)):
        return "categorical"
    return "text"


def load_table(
    data: bytes | str,
    name: str,
    *,
    delimiter: str = ",",
    has_header: bool = True,
) -> Table:
    """Parse CSV content into a Table with inferred column kinds.

    Nulls: empty cells and the tokens NA/null (any case) load as None.
    All-null columns are assigned the text kind.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedCsvError(f"undecodable bytes: {exc}") from exc
    else:
        text = data
    try:
        records = list(csv.reader(io.StringIO(text), delimiter=delimiter))
    except csv.Error as exc:
        raise MalformedCsvError(str(exc)) from exc
    records = [r for r in records if r]  # skip fully blank lines
    if not records:
        raise MalformedCsvError("input has no rows at all")

    if has_header:
        header, body = records[0], records[1:]
    else:
        header = [f"column_{i + 1}" for i in range(len(records[0]))]
        body = records
    header = [h.strip() for h in header]

    width = len(header)
    rows: list[tuple[str | None, ...]] = []
    for i, rec in enumerate(body):
        if len(rec) != width:
            raise MalformedCsvError(f"row {i} has {len(rec)} cells, expected {width}")
        rows.append(tuple(None if is_null(c) else c.strip() for c in rec))

    columns = []
    for j, col_name in enumerate(header):
        cells = [row[j] for row in rows]
        try:
            kind = infer_column_kind(cells)
        except AllNullError:
            kind = "text"
        columns.append(Column(col_name, kind))
    return Table(name=name, columns=tuple(columns), rows=tuple(rows))


def to_csv(table: Table, *, delimiter: str = ",") -> str:
    """Serialize back to CSV; nulls become empty cells."""
    out = io.StringIO()
    writer = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    writer.writerow(table.column_names)
    for row in table.rows:
        writer.writerow(["" if c is None else c for c in row])
    return out.getvalue()


@dataclass(frozen=True)
class ValueMatch:
    """A table cell whose normalized form occurs in the query."""

    value: str          # normalized cell text
    column: str
    start: int          # token span within the query words
    end: int            # exclusive


@dataclass(frozen=True)
class LinearizedQuery:
    """The flat token form of (query, schema): words, then a table block,
    a column block, and a block of query-mentioned cell values."""

    raw: str
    words: tuple[str, ...]
    table: str
    columns: tuple[str, ...]
    values: tuple[ValueMatch, ...] = field(default_factory=tuple)

    @property
    def tokens(self) -> list[str]:
        toks = list(self.words)
        toks += [T_OPEN, self.table, T_CLOSE]
        toks += [C_OPEN, *self.columns, C_CLOSE]
        toks += [V_OPEN, *[v.value for v in self.values], V_CLOSE]
        return toks

    @property
    def normalized(self) -> str:
        return " ".join(self.words)


def _span_match(haystack: list[str], needle: list[str]) -> int | None:
    if not needle or len(needle) > len(haystack):
        return None
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i : i + len(needle)] == needle:
            return i
    return None


def linearize_query(query: str, table: Table) -> LinearizedQuery:
    """Build the token sequence for a query against one table.

    The value block holds every distinct cell value whose normalized form
    appears as a contiguous token span in the query, paired with its
    column. Matching is exact after normalization; no fuzzy matching.
    """
    if not query.strip():
        raise ValueError("query must be non-empty")
    words = tokenize(query)

    matches: list[ValueMatch] = []
    seen: set[tuple[str, str]] = set()
    for col in table.columns:
        j = table.column_index(col.name)
        for row in table.rows:
            cell = row[j]
            if cell is None:
                continue
            norm = normalize_text(cell)
            if not norm or (norm, col.name) in seen:
                continue
            start = _span_match(words, norm.split())
            if start is not None:
                seen.add((norm, col.name))
                matches.append(
                    ValueMatch(norm, col.name, start, start + len(norm.split()))
                )
    # Stable order: position in the query first, then schema order.
    order = {c.name: i for i, c in enumerate(table.columns)}
    matches.sort(key=lambda m: (m.start, order[m.column]))
    return LinearizedQuery(
        raw=query,
        words=tuple(words),
        table=table.name,
        columns=tuple(table.column_names),
        values=tuple(matches),
    )
