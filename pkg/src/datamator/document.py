"""The serializable datamation document and its canonical JSON form.

Documents are self-contained: keyframes carry resolved positions, sizes,
colors, captions, and annotations, so a renderer needs no access to the
source CSV. Canonical serialization sorts keys and fixes float formatting
to six decimal places, which makes documents byte-stable and diffable.
"""

from __future__ import annotations

import json
import time
from typing import Callable

from . import layout as lay
from .compiler import Compilation, compile_pipeline
from .dataset import Table
from .qdmr import Pipeline, op_kind, print_op, print_pipeline

DOC_VERSION = "1"


def canonical_json(value) -> str:
    """Deterministic JSON: sorted keys, floats with six decimals."""
    out: list[str] = []
    _write(value, out)
    return "".join(out)


def _write(value, out: list[str]) -> None:
    if value is None or isinstance(value, (str, bool, int)):
        out.append(json.dumps(value, ensure_ascii=True))
    elif isinstance(value, float):
        out.append(f"{value:.6f}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if i:
                out.append(",")
            out.append(json.dumps(str(key), ensure_ascii=True))
            out.append(":")
            _write(value[key], out)
        out.append("}")
    else:
        raise TypeError(f"cannot canonicalize {type(value).__name__}")


def _unit_dict(u: lay.UnitState) -> dict:
    return {
        "unit_id": u.unit_id,
        "x": float(u.x),
        "y": float(u.y),
        "radius": float(u.radius),
        "fill": u.fill,
        "opacity": float(u.opacity),
        "stroke_width": float(u.stroke_width),
        "group_key": u.group_key,
    }


def _keyframe_dict(f: lay.Keyframe) -> dict:
    return {
        "index": f.index,
        "caption": f.caption,
        "units": [_unit_dict(u) for u in f.units],
        "axis": (
            None
            if f.axis is None
            else {
                "channel": f.axis.channel,
                "attribute": f.axis.attribute,
                "ticks": list(f.axis.ticks),
            }
        ),
        "annotations": [
            {
                "targets": list(a.targets),
                "text": a.text,
                "group_key": a.group_key,
            }
            for a in f.annotations
        ],
    }


def _plain(value):
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def _action_dict(a) -> dict:
    return {"family": a.family, "kind": a.kind, "params": _plain(a.params)}


def _transition_dict(t: lay.TransitionPlan) -> dict:
    return {
        "from_index": t.from_index,
        "to_index": t.to_index,
        "stages": [
            {
                "action": s.action,
                "effect": s.effect,
                "unit_ids": list(s.unit_ids),
                "duration_ms": float(s.duration_ms),
                "stagger_ms": float(s.stagger_ms),
            }
            for s in t.stages
        ],
    }


def build_document(
    compilation: Compilation,
    table: Table,
    *,
    query: str | None = None,
    now_ms: Callable[[], int] | None = None,
) -> dict:
    """Assemble the wire form of a compiled pipeline."""
    clock = now_ms or (lambda: int(time.time() * 1000))
    pipeline = compilation.pipeline
    return {
        "version": DOC_VERSION,
        "dataset": {
            "name": table.name,
            "columns": [{"name": c.name, "kind": c.kind} for c in table.columns],
            "row_count": len(table.rows),
        },
        "pipeline": print_pipeline(pipeline),
        "provenance": {
            "query": query,
            "source": pipeline.provenance,
            "created_ms": clock(),
        },
        "steps": [
            {
                "index": s.index,
                "kind": op_kind(s.op),
                "script": f"#{s.index} = {print_op(s.op)}",
                "caption": s.caption,
                "actions": [_action_dict(a) for a in s.actions],
                "keyframe": _keyframe_dict(s.keyframe),
            }
            for s in compilation.steps
        ],
        "transitions": [_transition_dict(t) for t in compilation.transitions],
        "warnings": list(compilation.warnings),
    }


def compile_datamation(
    pipeline: Pipeline,
    table: Table,
    *,
    query: str | None = None,
    table1b_channels: bool = False,
    now_ms: Callable[[], int] | None = None,
) -> dict:
    """Reorder, execute, translate, lay out, and serialize in one call."""
    compilation = compile_pipeline(pipeline, table, table1b_channels=table1b_channels)
    return build_document(compilation, table, query=query, now_ms=now_ms)
