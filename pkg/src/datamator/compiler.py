"""Compile an executed pipeline into keyframes and transition plans.

Stages of compilation:

1. ``reorder`` arranges the steps so each one consumes the output of its
   predecessor (the property that makes the animation followable).
2. ``translate_op`` maps every operator to its low-level actions, ordered
   data then visual then annotation.
3. ``caption_op`` fills the per-operator caption template.
4. Frame assembly resolves unit positions, sizes, and colors per step and
   plans the animated transitions between consecutive frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

from . import layout as lay
from .dataset import Table, normalize_text, parse_number, parse_temporal
from .errors import NoContinuousOrderError
from .executor import (
    ColumnView,
    Grouped,
    Scalar,
    StepValue,
    execute_pipeline,
    row_ids_of,
)
from .qdmr import (
    Aggregate,
    Comparative,
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
    dependency_graph,
    op_refs,
)

DATA_ACTIONS = ("select", "filter", "union", "intersect", "aggregate", "sort")
VISUAL_ACTIONS = ("x_axis", "y_axis", "size", "color", "layout")
ANNOTATION_ACTIONS = ("highlight", "hide", "annotate")

# Categorical group keys go on the x axis up to this many groups; larger
# cardinalities fall back to the y axis.
MAX_X_GROUPS = 8


@dataclass(frozen=True)
class Action:
    family: str  # "data" | "visual" | "annotation"
    kind: str
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        families = {
            "data": DATA_ACTIONS,
            "visual": VISUAL_ACTIONS,
            "annotation": ANNOTATION_ACTIONS,
        }
        if self.kind not in families.get(self.family, ()):
            raise ValueError(f"{self.kind!r} is not a {self.family} action")


def data(kind: str, **params) -> Action:
    return Action("data", kind, params)


def visual(kind: str, **params) -> Action:
    return Action("visual", kind, params)


def annotation(kind: str, **params) -> Action:
    return Action("annotation", kind, params)


@dataclass
class CompiledStep:
    index: int
    op: QdmrOp
    value: StepValue
    actions: list[Action]
    caption: str
    keyframe: lay.Keyframe


@dataclass
class Compilation:
    pipeline: Pipeline
    steps: list[CompiledStep]
    transitions: list[lay.TransitionPlan]
    warnings: list[str] = field(default_factory=list)


# --- reordering ----------------------------------------------------------------


def _is_chain(p: Pipeline) -> bool:
    for i, op in enumerate(p.steps, start=1):
        refs = op_refs(op)
        if any(r >= i for r in refs):
            return False
        if i > 1 and (i - 1) not in refs:
            return False
    return True


def _renumber(op: QdmrOp, mapping: dict[int, int]) -> QdmrOp:
    updates = {}
    for name, value in vars(op).items():
        if isinstance(value, StepRef):
            updates[name] = StepRef(mapping[value.index])
    return replace(op, **updates) if updates else op


def reorder(p: Pipeline) -> Pipeline:
    """Arrange steps so each consumes its predecessor's output.

    The input arrangement may hold forward references (editor drags keep
    the semantic links while moving steps). Returns the input unchanged
    when it already forms a chain; raises NoContinuousOrderError with the
    dependency structure when no arrangement works.
    """
    if _is_chain(p):
        return p
    n = len(p.steps)
    deps = {i: set(op_refs(p.steps[i - 1])) for i in range(1, n + 1)}

    order: list[int] = []
    used: set[int] = set()

    def admissible(cand: int, placed: set[int], prev: int | None) -> bool:
        if not deps[cand] <= placed:
            return False
        return prev is None or prev in deps[cand]

    def extend() -> bool:
        if len(order) == n:
            return True
        placed = set(order)
        prev = order[-1] if order else None
        for cand in range(1, n + 1):
            if cand in used or not admissible(cand, placed, prev):
                continue
            order.append(cand)
            used.add(cand)
            if extend():
                return True
            order.pop()
            used.remove(cand)
        return False

    if not extend():
        raise NoContinuousOrderError(
            "no arrangement lets every step consume its predecessor's output",
            dependency_graph(p),
        )
    mapping = {old: new for new, old in enumerate(order, start=1)}
    steps = tuple(_renumber(p.steps[old - 1], mapping) for old in order)
    return Pipeline(steps, provenance=p.provenance)


# --- channel state --------------------------------------------------------------


@dataclass
class Channels:
    x: str | None = None
    y: str | None = None
    size: str | None = None
    color: str | None = None

    def claim(self, channel: str, attribute: str) -> str | None:
        """Assign a channel; returns a warning when an earlier claim was
        displaced (later claims win)."""
        current = getattr(self, channel)
        warning = None
        if current is not None and current != attribute:
            warning = (
                f"channel conflict: {channel} moves from {current!r} "
                f"to {attribute!r} (later claim wins)"
            )
        setattr(self, channel, attribute)
        return warning


# --- translation -----------------------------------------------------------------


def _project_channel(kind: str) -> str | None:
    return {"numerical": "size", "categorical": "color", "temporal": "x_axis"}.get(kind)


def group_channel(kind: str, group_count: int, *, table1b_channels: bool = False) -> str:
    """Axis channel for a GROUP key. Temporal and numerical keys band on
    the x axis. Categorical keys default to x while the cardinality stays
    small; `table1b_channels` forces them onto y."""
    if kind == "categorical":
        if table1b_channels or group_count > MAX_X_GROUPS:
            return "y_axis"
        return "x_axis"
    return "x_axis"


def translate_op(
    op: QdmrOp,
    value: StepValue,
    env: list[StepValue],
    table: Table,
    channels: Channels,
    *,
    table1b_channels: bool = False,
) -> tuple[list[Action], list[str]]:
    """Actions for one executed operator, ordered data/visual/annotation."""
    warnings: list[str] = []
    out = tuple(row_ids_of(value))

    if isinstance(op, Select):
        return (
            [
                data("select", source=op.source, count=len(out)),
                visual("layout", form="grid"),
            ],
            warnings,
        )

    if isinstance(op, Project):
        kind = table.column(op.attribute).kind
        channel = _project_channel(kind)
        if channel is None:
            warnings.append(
                f"PROJECT({op.attribute!r}): text attributes map to no "
                f"visual channel"
            )
            return [], warnings
        w = channels.claim(channel.removesuffix("_axis"), op.attribute)
        if w:
            warnings.append(w)
        return [visual(channel, attribute=op.attribute)], warnings

    if isinstance(op, (Comparative, Superlative)):
        inputs = row_ids_of(env[op.records.index - 1])
        dropped = tuple(r for r in inputs if r not in set(out))
        label = (
            str(op.condition)
            if isinstance(op, Comparative)
            else f"{op.extremum} of {_attr_name(op, env)}"
        )
        return (
            [
                data("filter", condition=label, targets=out),
                annotation("highlight", targets=out),
                annotation("hide", targets=dropped),
            ],
            warnings,
        )

    if isinstance(op, Aggregate):
        assert isinstance(value, Scalar)
        text = _aggregate_annotation(value, env[op.records.index - 1], table)
        targets = _aggregate_targets(op, value, env, table)
        return (
            [
                data("aggregate", method=op.method, value=value.value),
                annotation("annotate", targets=targets, text=text),
            ],
            warnings,
        )

    if isinstance(op, Group):
        assert isinstance(value, Grouped)
        kind = table.column(op.attribute).kind
        channel = group_channel(kind, len(value.groups), table1b_channels=table1b_channels)
        w = channels.claim(channel.removesuffix("_axis"), op.attribute)
        if w:
            warnings.append(w)
        per_group = [
            {"group": g.key, "targets": g.row_ids, "text": _group_text(op, g)}
            for g in value.groups
        ]
        return (
            [
                visual(channel, attribute=op.attribute),
                annotation(
                    "annotate",
                    targets=tuple(out),
                    text=f"{op.method} per {op.attribute}",
                    per_group=per_group,
                ),
            ],
            warnings,
        )

    if isinstance(op, SetUnion):
        return [data("union", targets=out)], warnings

    if isinstance(op, Discard):
        inputs = row_ids_of(env[op.a.index - 1])
        dropped = tuple(r for r in inputs if r not in set(out))
        return (
            [
                data("filter", condition="discard", targets=out),
                annotation("hide", targets=dropped),
            ],
            warnings,
        )

    if isinstance(op, Intersection):
        inputs = row_ids_of(env[op.a.index - 1])
        dropped = tuple(r for r in inputs if r not in set(out))
        return (
            [
                data("intersect", targets=out),
                annotation("hide", targets=dropped),
            ],
            warnings,
        )

    if isinstance(op, Sort):
        return [data("sort", attribute=op.attribute, order=op.order)], warnings

    raise TypeError(f"unknown operator {op!r}")


def _attr_name(op: Union[Comparative, Superlative], env: list[StepValue]) -> str:
    if isinstance(op.attribute, str):
        return op.attribute
    target = env[op.attribute.index - 1]
    return target.attribute if isinstance(target, ColumnView) else str(op.attribute)


_AGG_WORD = {
    "max": "maximum",
    "min": "minimum",
    "avg": "average",
    "sum": "total",
    "median": "median",
}


def _format_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else format(v, "g")


def _aggregate_annotation(value: Scalar, source: StepValue, table: Table) -> str:
    if value.method == "count":
        return f"The total count of the following units is {_format_value(value.value)}"
    word = _AGG_WORD[value.method]
    if isinstance(source, Grouped):
        noun = f"the {len(source.groups)} groups"
        return f"The {word} value across {noun} is {_format_value(value.value)}"
    attr = source.attribute if isinstance(source, ColumnView) else "the values"
    return (
        f"The {word} value of {attr} of the following units is "
        f"{_format_value(value.value)}"
    )


def _aggregate_targets(
    op: Aggregate, value: Scalar, env: list[StepValue], table: Table
) -> tuple[int, ...]:
    """Tooltip anchors: extremum rows for max/min, all source rows else."""
    source = env[op.records.index - 1]
    if op.method in ("max", "min") and isinstance(source, ColumnView):
        rows = [
            (r, table.numeric(r, source.attribute))
            for r in source.row_ids
            if table.numeric(r, source.attribute) is not None
        ]
        if rows:
            return tuple(r for r, v in rows if v == value.value)
    return value.source_row_ids


def _group_text(op: Group, g) -> str:
    if op.method == "count":
        return f"{g.key}: {_format_value(g.agg_value)}"
    return f"{g.key}: {op.method} {op.attribute} = {_format_value(g.agg_value)}"


# --- captions --------------------------------------------------------------------

_CHANNEL_WORD = {"size": "size", "color": "color", "x_axis": "x-axis", "y_axis": "y-axis"}


def caption_op(op: QdmrOp, value: StepValue, env: list[StepValue], table: Table) -> str:
    """A deterministic caption of at most 140 characters per operator."""
    if isinstance(op, Select):
        n = len(row_ids_of(value))
        text = f"Select {n} records from {op.table_name}"
        if op.condition is not None and op.source_column:
            text += f" where {op.source_column} {op.condition}"
    elif isinstance(op, Project):
        channel = _project_channel(table.column(op.attribute).kind)
        if channel is None:
            text = f"Retrieve {op.attribute} from the records"
        else:
            text = f"Use {_CHANNEL_WORD[channel]} to encode {op.attribute}"
    elif isinstance(op, Comparative):
        text = f"Filter the units whose {_attr_name(op, env)} {op.condition}"
    elif isinstance(op, Superlative):
        word = "maximum" if op.extremum == "max" else "minimum"
        text = f"Find the unit with the {word} {_attr_name(op, env)}"
    elif isinstance(op, Aggregate):
        assert isinstance(value, Scalar)
        text = _aggregate_annotation(value, env[op.records.index - 1], table)
    elif isinstance(op, Group):
        if op.method == "count":
            text = f"Group the units by {op.attribute} and count each group"
        else:
            text = f"Group the units by {op.attribute} and compute the {op.method} per group"
    elif isinstance(op, SetUnion):
        a = len(row_ids_of(env[op.a.index - 1]))
        b = len(row_ids_of(env[op.b.index - 1]))
        text = f"Combine two record sets ({a} and {b} units)"
    elif isinstance(op, Discard):
        text = f"Keep the units not in the second set ({len(row_ids_of(value))} remain)"
    elif isinstance(op, Intersection):
        text = f"Keep only the units in both sets ({len(row_ids_of(value))} remain)"
    elif isinstance(op, Sort):
        word = "ascending" if op.order == "asc" else "descending"
        text = f"Sort the units by {op.attribute} in {word} order"
    else:
        raise TypeError(f"unknown operator {op!r}")
    return text[:140]


# --- frame assembly ---------------------------------------------------------------


def _input_rows(op: QdmrOp, value: StepValue, env: list[StepValue]) -> tuple[int, ...]:
    """The rows a step consumes; they populate its frame, with the ones
    the step drops faded out in place."""
    if isinstance(op, Select):
        return tuple(row_ids_of(value))
    if isinstance(op, (Comparative, Superlative, Group, Sort)):
        return tuple(row_ids_of(env[op.records.index - 1]))
    if isinstance(op, Project):
        return tuple(row_ids_of(value))
    if isinstance(op, Aggregate):
        return tuple(row_ids_of(value))
    if isinstance(op, (Discard, Intersection)):
        return tuple(row_ids_of(env[op.a.index - 1]))
    if isinstance(op, SetUnion):
        return tuple(row_ids_of(value))
    raise TypeError(f"unknown operator {op!r}")


def _band_keys(
    table: Table, attribute: str, rows: tuple[int, ...]
) -> tuple[dict[int, str | None], list[str]]:
    """Band key per row plus band order: first appearance for categorical
    and text, ascending value for temporal and numerical keys."""
    kind = table.column(attribute).kind
    keys: dict[int, str | None] = {}
    order: list[str] = []
    seen = set()
    for r in sorted(rows):
        raw = table.cell(r, attribute)
        key = None if raw is None else normalize_text(raw)
        keys[r] = key
        if key is not None and key not in seen:
            seen.add(key)
            order.append(key)
    if kind in ("temporal", "numerical"):
        parser = parse_temporal if kind == "temporal" else parse_number
        order.sort(key=lambda k: (parser(k) is None, parser(k), k))
    return keys, order


def _category_order(table: Table, attribute: str) -> list[str]:
    """Distinct normalized values in table row order, for stable colors."""
    j = table.column_index(attribute)
    out: list[str] = []
    seen = set()
    for row in table.rows:
        cell = row[j]
        if cell is None:
            continue
        key = normalize_text(cell)
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


def _build_keyframe(
    index: int,
    table: Table,
    channels: Channels,
    display: tuple[int, ...],
    visible: set[int],
    highlights: set[int],
    caption: str,
    annotations: list[lay.Annotation],
) -> tuple[lay.Keyframe, list[str]]:
    warnings: list[str] = []
    ids = list(display)

    size_values = None
    if channels.size is not None:
        size_values = {r: table.numeric(r, channels.size) for r in ids}
    color_keys = None
    color_order = None
    if channels.color is not None:
        color_keys = {
            r: (
                None
                if table.cell(r, channels.color) is None
                else normalize_text(table.cell(r, channels.color))
            )
            for r in ids
        }
        color_order = _category_order(table, channels.color)

    radii, fills, vis_warnings = lay.assign_visuals(
        ids,
        size_values=size_values,
        size_kind="numerical" if channels.size else None,
        color_keys=color_keys,
        color_kind="categorical" if channels.color else None,
        color_order=color_order,
    )
    warnings.extend(vis_warnings)

    axis = None
    group_keys: dict[int, str | None] = {}
    if channels.x is not None or channels.y is not None:
        channel = "x" if channels.x is not None else "y"
        attribute = channels.x if channels.x is not None else channels.y
        keys, order = _band_keys(table, attribute, display)
        group_keys = keys
        packed_radii = radii if channels.size is not None else None
        result = lay.axis_layout(
            ids, keys, order, channel, attribute, radii=packed_radii
        )
        positions = result.positions
        axis = result.axis
        warnings.extend(result.warnings)
        if result.radii is not None:
            radii = result.radii
    elif channels.size is not None:
        local, enclosure_r = lay.pack_with_enclosure([radii[r] for r in ids])
        room = min(lay.CANVAS_W, lay.CANVAS_H) / 2.0 - lay.MARGIN
        if enclosure_r > room > 0.0:
            factor = room / enclosure_r
            local = [(x * factor, y * factor) for x, y in local]
            radii = {u: r * factor for u, r in radii.items()}
        positions = {
            r: (lay.CANVAS_W / 2.0 + x, lay.CANVAS_H / 2.0 + y)
            for r, (x, y) in zip(ids, local)
        }
    else:
        pts = lay.centered_grid(len(ids), lay.CELL)
        positions = {
            r: (lay.CANVAS_W / 2.0 + x, lay.CANVAS_H / 2.0 + y)
            for r, (x, y) in zip(ids, pts)
        }

    units = []
    for r in ids:
        x, y = positions[r]
        highlighted = r in highlights
        units.append(
            lay.UnitState(
                unit_id=r,
                x=x,
                y=y,
                radius=radii[r],
                fill=lay.HIGHLIGHT_FILL if highlighted else fills[r],
                opacity=1.0 if r in visible else 0.0,
                stroke_width=2.0 if highlighted else 0.0,
                group_key=group_keys.get(r),
            )
        )
    frame = lay.Keyframe(
        index=index,
        units=units,
        caption=caption,
        axis=axis,
        annotations=annotations,
    )
    return frame, warnings


def compile_pipeline(
    p: Pipeline, table: Table, *, table1b_channels: bool = False
) -> Compilation:
    """Reorder, execute, translate, caption, and lay out a pipeline."""
    ordered = reorder(p)
    values = execute_pipeline(ordered, table)

    channels = Channels()
    steps: list[CompiledStep] = []
    warnings: list[str] = []
    for i, (op, value) in enumerate(zip(ordered.steps, values), start=1):
        actions, w = translate_op(
            op, value, values, table, channels, table1b_channels=table1b_channels
        )
        warnings.extend(w)
        caption = caption_op(op, value, values, table)

        display = _input_rows(op, value, values)
        visible = set(row_ids_of(value))
        highlights = set()
        annotations: list[lay.Annotation] = []
        for action in actions:
            if action.kind == "highlight":
                highlights.update(action.params.get("targets", ()))
            elif action.kind == "annotate":
                per_group = action.params.get("per_group")
                if per_group:
                    for entry in per_group:
                        annotations.append(
                            lay.Annotation(
                                targets=tuple(entry["targets"]),
                                text=entry["text"],
                                group_key=entry["group"],
                            )
                        )
                else:
                    annotations.append(
                        lay.Annotation(
                            targets=tuple(action.params.get("targets", ())),
                            text=action.params.get("text", ""),
                        )
                    )

        frame, frame_warnings = _build_keyframe(
            i, table, channels, display, visible, highlights, caption, annotations
        )
        warnings.extend(frame_warnings)
        steps.append(CompiledStep(i, op, value, actions, caption, frame))

    transitions = [
        lay.plan_transition(steps[k].keyframe, steps[k + 1].keyframe, steps[k + 1].actions)
        for k in range(len(steps) - 1)
    ]
    return Compilation(ordered, steps, transitions, warnings)
