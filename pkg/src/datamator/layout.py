"""Deterministic geometry for unit visualizations.

Coordinates are abstract canvas units with the origin at the top left;
renderers scale to their viewport. All functions are pure and free of
randomness so identical inputs give bit-identical frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import KindMismatchError

CELL = 24.0
CANVAS_W = 960.0
CANVAS_H = 540.0
MARGIN = 48.0

R_MIN_FACTOR = 0.3
R_MAX_FACTOR = 1.2
DEFAULT_RADIUS_FACTOR = 0.4

PACK_TOLERANCE = 1e-6

PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)
DEFAULT_FILL = "#86b6d9"
HIGHLIGHT_FILL = "#fdd835"

DURATION_MS = 800.0
STAGGER_MS = 15.0
STAGGER_CAP_MS = 600.0


@dataclass
class UnitState:
    unit_id: int
    x: float
    y: float
    radius: float
    fill: str = DEFAULT_FILL
    opacity: float = 1.0
    stroke_width: float = 0.0
    group_key: str | None = None


@dataclass
class Annotation:
    targets: tuple[int, ...]
    text: str
    group_key: str | None = None


@dataclass
class Axis:
    channel: str      # "x" | "y"
    attribute: str
    ticks: tuple[str, ...]


@dataclass
class Keyframe:
    index: int
    units: list[UnitState]
    caption: str = ""
    axis: Axis | None = None
    annotations: list[Annotation] = field(default_factory=list)

    def unit(self, unit_id: int) -> UnitState:
        for u in self.units:
            if u.unit_id == unit_id:
                return u
        raise KeyError(unit_id)

    def visible_ids(self) -> set[int]:
        return {u.unit_id for u in self.units if u.opacity > 0.0}


@dataclass
class Stage:
    action: str               # the action kind that produced this stage
    effect: str               # move | fade_in | fade_out | resize | recolor
    unit_ids: tuple[int, ...]
    duration_ms: float = DURATION_MS
    stagger_ms: float = 0.0


@dataclass
class TransitionPlan:
    from_index: int
    to_index: int
    stages: list[Stage] = field(default_factory=list)


# --- square packing -------------------------------------------------------


def grid_layout(n: int, cell: float = CELL) -> list[tuple[float, float]]:
    """Near-square grid: cols = ceil(sqrt(n)), filled row-major."""
    if n <= 0:
        return []
    cols = math.ceil(math.sqrt(n))
    return [((k % cols) * cell, (k // cols) * cell) for k in range(n)]


def grid_shape(n: int) -> tuple[int, int]:
    if n <= 0:
        return 0, 0
    cols = math.ceil(math.sqrt(n))
    return cols, math.ceil(n / cols)


# --- circle packing (front chain) ------------------------------------------


@dataclass
class _Circle:
    x: float
    y: float
    r: float


class _Node:
    __slots__ = ("circle", "next", "previous")

    def __init__(self, circle: _Circle):
        self.circle = circle
        self.next: "_Node" = self
        self.previous: "_Node" = self


def _place(b: _Circle, a: _Circle, c: _Circle) -> None:
    """Position c tangent to both b and a, on the outside of the chain."""
    dx = b.x - a.x
    dy = b.y - a.y
    d2 = dx * dx + dy * dy
    if d2:
        a2 = (a.r + c.r) ** 2
        b2 = (b.r + c.r) ** 2
        if a2 > b2:
            x = (d2 + b2 - a2) / (2.0 * d2)
            y = math.sqrt(max(0.0, b2 / d2 - x * x))
            c.x = b.x - x * dx - y * dy
            c.y = b.y - x * dy + y * dx
        else:
            x = (d2 + a2 - b2) / (2.0 * d2)
            y = math.sqrt(max(0.0, a2 / d2 - x * x))
            c.x = a.x + x * dx - y * dy
            c.y = a.y + x * dy + y * dx
    else:
        c.x = a.x + a.r + c.r
        c.y = a.y


def _intersects(a: _Circle, b: _Circle) -> bool:
    dr = a.r + b.r - PACK_TOLERANCE
    dx = b.x - a.x
    dy = b.y - a.y
    return dr > 0 and dr * dr > dx * dx + dy * dy


def _pack_chain(circles: list[_Circle]) -> None:
    """Front-chain sibling packing in input order (no randomness)."""
    n = len(circles)
    if n == 0:
        return
    a = circles[0]
    a.x, a.y = 0.0, 0.0
    if n == 1:
        return
    b = circles[1]
    a.x = -b.r
    b.x = a.r
    b.y = 0.0
    if n == 2:
        return

    c = circles[2]
    _place(b, a, c)
    na, nb, nc = _Node(a), _Node(b), _Node(c)
    na.next = nc.previous = nb
    nb.next = na.previous = nc
    nc.next = nb.previous = na

    i = 3
    while i < n:
        c = circles[i]
        _place(na.circle, nb.circle, c)

        # Walk the chain outward from the insertion point looking for a
        # collision; when one is found, shrink the chain and retry.
        j = nb.next
        k = na.previous
        sj = nb.circle.r
        sk = na.circle.r
        retry = False
        while True:
            if sj <= sk:
                if _intersects(j.circle, c):
                    nb = j
                    na.next = nb
                    nb.previous = na
                    retry = True
                    break
                sj += j.circle.r
                j = j.next
            else:
                if _intersects(k.circle, c):
                    na = k
                    na.next = nb
                    nb.previous = na
                    retry = True
                    break
                sk += k.circle.r
                k = k.previous
            if j is k.next:
                break
        if retry:
            continue

        nc = _Node(c)
        nc.previous = na
        nc.next = nb
        na.next = nb.previous = nc
        nb = nc

        # Move the insertion point to the chain pair whose weighted
        # midpoint is closest to the origin, so the pack stays round.
        best = na
        best_score = _pair_score(na)
        node = nb.next
        while node is not nb:
            score = _pair_score(node)
            if score < best_score:
                best_score = score
                best = node
            node = node.next
        na = best
        nb = na.next
        i += 1


def _pair_score(node: _Node) -> float:
    a = node.circle
    b = node.next.circle
    ab = a.r + b.r
    dx = (a.x * b.r + b.x * a.r) / ab
    dy = (a.y * b.r + b.y * a.r) / ab
    return dx * dx + dy * dy


def _enclose_basis(basis: list[_Circle]) -> _Circle:
    if len(basis) == 1:
        c = basis[0]
        return _Circle(c.x, c.y, c.r)
    if len(basis) == 2:
        return _enclose2(basis[0], basis[1])
    return _enclose3(basis[0], basis[1], basis[2])


def _enclose2(a: _Circle, b: _Circle) -> _Circle:
    dx = b.x - a.x
    dy = b.y - a.y
    d = math.hypot(dx, dy)
    if d + b.r <= a.r:
        return _Circle(a.x, a.y, a.r)
    if d + a.r <= b.r:
        return _Circle(b.x, b.y, b.r)
    r = (d + a.r + b.r) / 2.0
    if d > 0:
        t = (r - a.r) / d
        return _Circle(a.x + dx * t, a.y + dy * t, r)
    return _Circle(a.x, a.y, r)


def _enclose3(a: _Circle, b: _Circle, c: _Circle) -> _Circle:
    # Solve |p - pi| = R - ri for the three basis circles: subtracting the
    # equations pairwise linearizes x and y in R, leaving one quadratic.
    x1, y1, r1 = a.x, a.y, a.r
    x2, y2, r2 = b.x, b.y, b.r
    x3, y3, r3 = c.x, c.y, c.r
    a2 = 2.0 * (x1 - x2)
    b2 = 2.0 * (y1 - y2)
    c2 = 2.0 * (r2 - r1)
    d2 = x1 * x1 + y1 * y1 - r1 * r1 - x2 * x2 - y2 * y2 + r2 * r2
    a3 = 2.0 * (x1 - x3)
    b3 = 2.0 * (y1 - y3)
    c3 = 2.0 * (r3 - r1)
    d3 = x1 * x1 + y1 * y1 - r1 * r1 - x3 * x3 - y3 * y3 + r3 * r3
    ab = a3 * b2 - a2 * b3
    if abs(ab) < 1e-12:
        # Degenerate (collinear centers): fall back to the widest pair.
        best = _enclose2(a, b)
        for other in (_enclose2(a, c), _enclose2(b, c)):
            if other.r > best.r:
                best = other
        return best
    xa = (b2 * d3 - b3 * d2) / ab
    xb = (b3 * c2 - b2 * c3) / ab
    ya = (a3 * d2 - a2 * d3) / ab
    yb = (a2 * c3 - a3 * c2) / ab
    # x = xa + xb R, y = ya + yb R; substitute into circle 1.
    A = xb * xb + yb * yb - 1.0
    B = 2.0 * (xb * (xa - x1) + yb * (ya - y1) + r1)
    C = (xa - x1) ** 2 + (ya - y1) ** 2 - r1 * r1
    if abs(A) > 1e-12:
        disc = B * B - 4.0 * A * C
        r = (-B - math.sqrt(max(0.0, disc))) / (2.0 * A)
    else:
        r = -C / B if B else 0.0
    return _Circle(xa + xb * r, ya + yb * r, abs(r))


def _encloses_not(a: _Circle, b: _Circle) -> bool:
    dr = a.r - b.r
    dx = b.x - a.x
    dy = b.y - a.y
    return dr < 0 or dr * dr < dx * dx + dy * dy


def _encloses_weak(a: _Circle, b: _Circle) -> bool:
    dr = a.r - b.r + max(a.r, b.r, 1.0) * 1e-9
    dx = b.x - a.x
    dy = b.y - a.y
    return dr > 0 and dr * dr > dx * dx + dy * dy


def _encloses_weak_all(a: _Circle, basis: list[_Circle]) -> bool:
    return all(_encloses_weak(a, b) for b in basis)


def _extend_basis(basis: list[_Circle], p: _Circle) -> list[_Circle]:
    if _encloses_weak_all(p, basis):
        return [p]
    for b in basis:
        if _encloses_not(p, b) and _encloses_weak_all(_enclose2(b, p), basis):
            return [b, p]
    for i in range(len(basis) - 1):
        for j in range(i + 1, len(basis)):
            bi, bj = basis[i], basis[j]
            if (
                _encloses_not(_enclose2(bi, bj), p)
                and _encloses_not(_enclose2(bi, p), bj)
                and _encloses_not(_enclose2(bj, p), bi)
                and _encloses_weak_all(_enclose3(bi, bj, p), basis)
            ):
                return [bi, bj, p]
    raise AssertionError("basis extension failed; degenerate circle set")


def enclose(circles: list[_Circle]) -> _Circle | None:
    """Smallest circle enclosing all given circles: move-to-front over a
    basis of at most three, in deterministic input order."""
    if not circles:
        return None
    items = list(circles)
    basis: list[_Circle] = []
    e: _Circle | None = None
    i = 0
    while i < len(items):
        p = items[i]
        if e is not None and _encloses_weak(e, p):
            i += 1
        else:
            basis = _extend_basis(basis, p)
            e = _enclose_basis(basis)
            i = 0
    return e


def circle_pack(radii: list[float]) -> list[tuple[float, float]]:
    """Pack circles of the given radii without overlap; centers are
    returned relative to the enclosing circle's center."""
    if any(r <= 0 for r in radii):
        raise ValueError("all radii must be positive")
    circles = [_Circle(0.0, 0.0, r) for r in radii]
    _pack_chain(circles)
    e = enclose(circles)
    if e is None:
        return []
    return [(c.x - e.x, c.y - e.y) for c in circles]


# --- banded and scatter layouts ---------------------------------------------


@dataclass
class AxisLayout:
    positions: dict[int, tuple[float, float]]
    axis: Axis
    warnings: list[str] = field(default_factory=list)
    radii: dict[int, float] | None = None  # set when packs had to shrink


def centered_grid(n: int, cell: float) -> list[tuple[float, float]]:
    pts = grid_layout(n, cell)
    if not pts:
        return []
    cols, rows = grid_shape(n)
    ox = (cols - 1) * cell / 2.0
    oy = (rows - 1) * cell / 2.0
    return [(x - ox, y - oy) for x, y in pts]


def pack_with_enclosure(
    radii: list[float],
) -> tuple[list[tuple[float, float]], float]:
    """Centered pack positions plus the enclosing radius."""
    if not radii:
        return [], 0.0
    circles = [_Circle(0.0, 0.0, r) for r in radii]
    _pack_chain(circles)
    e = enclose(circles)
    return [(c.x - e.x, c.y - e.y) for c in circles], e.r


def axis_layout(
    unit_ids: list[int],
    keys: dict[int, str | None],
    key_order: list[str],
    channel: str,
    attribute: str,
    *,
    radii: dict[int, float] | None = None,
    cell: float = CELL,
    width: float = CANVAS_W,
    height: float = CANVAS_H,
) -> AxisLayout:
    """Banded layout: distinct keys become evenly spaced bands along the
    channel; members sub-pack (grid, or circle pack when sized).

    Units with a null key take one trailing slot of their own. Packed
    bands shrink by a shared factor when the largest pack would spill
    into a neighboring band, keeping the size encoding comparable across
    bands while guaranteeing zero overlap frame-wide.
    """
    bands = [k for k in key_order if any(keys[u] == k for u in unit_ids)]
    if not bands:
        bands = key_order or [""]
    stray = [u for u in unit_ids if keys[u] is None or keys[u] not in bands]
    slots: list[list[int]] = [
        [u for u in unit_ids if keys[u] == band] for band in bands
    ]
    if stray:
        slots.append(stray)

    extent = (width if channel == "x" else height) - 2 * MARGIN
    count = len(slots)
    pitch = extent / count

    locals_per_slot: list[list[tuple[float, float]]] = []
    scaled_radii: dict[int, float] | None = None
    if radii is None:
        locals_per_slot = [centered_grid(len(members), cell) for members in slots]
    else:
        enclosures: list[float] = []
        for members in slots:
            local, enclosure_r = pack_with_enclosure([radii[m] for m in members])
            locals_per_slot.append(local)
            enclosures.append(enclosure_r)
        cross = (height if channel == "x" else width) / 2.0 - MARGIN
        room = min(pitch / 2.0, cross)
        largest = max(enclosures, default=0.0)
        if largest > room and largest > 0.0:
            factor = room / largest
            locals_per_slot = [
                [(x * factor, y * factor) for x, y in local]
                for local in locals_per_slot
            ]
            scaled_radii = {u: r * factor for u, r in radii.items()}

    positions: dict[int, tuple[float, float]] = {}
    for i, (members, local) in enumerate(zip(slots, locals_per_slot)):
        centre = MARGIN + (i + 0.5) * pitch
        for u, (lx, ly) in zip(members, local):
            if channel == "x":
                positions[u] = (centre + lx, height / 2.0 + ly)
            else:
                positions[u] = (width / 2.0 + lx, centre + ly)
    return AxisLayout(
        positions, Axis(channel, attribute, tuple(bands)), radii=scaled_radii
    )


def scatter_layout(
    unit_ids: list[int],
    values: dict[int, float | None],
    channel: str,
    attribute: str,
    *,
    cell: float = CELL,
    width: float = CANVAS_W,
    height: float = CANVAS_H,
) -> AxisLayout:
    """Linear scale along the channel; the orthogonal direction stacks
    units that share a value."""
    warnings: list[str] = []
    present = [v for v in values.values() if v is not None]
    lo = min(present) if present else 0.0
    hi = max(present) if present else 0.0
    extent = (width if channel == "x" else height) - 2 * MARGIN
    degenerate = hi == lo
    if degenerate:
        warnings.append(f"degenerate scale for {attribute!r}: min equals max")

    def scaled(v: float) -> float:
        if degenerate:
            return MARGIN + extent / 2.0
        return MARGIN + (v - lo) / (hi - lo) * extent

    groups: dict[float, list[int]] = {}
    for u in unit_ids:
        v = values[u]
        key = scaled(v) if v is not None else MARGIN + extent / 2.0
        groups.setdefault(key, []).append(u)
    positions: dict[int, tuple[float, float]] = {}
    for key, members in groups.items():
        for slot, u in enumerate(members):
            offset = (slot - (len(members) - 1) / 2.0) * cell
            if channel == "x":
                positions[u] = (key, height / 2.0 + offset)
            else:
                positions[u] = (width / 2.0 + offset, key)
    ticks = ("" if degenerate else f"{lo:g}", f"{hi:g}")
    return AxisLayout(positions, Axis(channel, attribute, ticks), warnings)


# --- visual encodings --------------------------------------------------------


def size_scale(
    values: dict[int, float | None], cell: float = CELL
) -> dict[int, float]:
    """Radius per unit: linear from value range to [0.3, 1.2] cells."""
    r_min = R_MIN_FACTOR * cell
    r_max = R_MAX_FACTOR * cell
    present = [v for v in values.values() if v is not None]
    if not present:
        return {u: r_min for u in values}
    lo, hi = min(present), max(present)
    if hi == lo:
        mid = (r_min + r_max) / 2.0
        return {u: (mid if v is not None else r_min) for u, v in values.items()}
    out = {}
    for u, v in values.items():
        if v is None:
            out[u] = r_min
        else:
            out[u] = r_min + (v - lo) / (hi - lo) * (r_max - r_min)
    return out


def color_scale(categories: list[str]) -> tuple[dict[str, str], list[str]]:
    """Palette color per category in first-appearance order, cycling with
    a warning past the palette size."""
    warnings = []
    if len(categories) > len(PALETTE):
        warnings.append(
            f"{len(categories)} categories exceed the {len(PALETTE)}-color "
            f"palette; colors repeat"
        )
    return (
        {cat: PALETTE[i % len(PALETTE)] for i, cat in enumerate(categories)},
        warnings,
    )


def default_radius(cell: float = CELL) -> float:
    return DEFAULT_RADIUS_FACTOR * cell


def assign_visuals(
    unit_ids: list[int],
    *,
    size_values: dict[int, float | None] | None = None,
    size_kind: str | None = None,
    color_keys: dict[int, str | None] | None = None,
    color_kind: str | None = None,
    color_order: list[str] | None = None,
    cell: float = CELL,
) -> tuple[dict[int, float], dict[int, str], list[str]]:
    """Radii and fills for the given units under optional size and color
    mappings. Size needs a numerical attribute, color a categorical one."""
    warnings: list[str] = []
    if size_values is not None and size_kind not in ("numerical", None):
        raise KindMismatchError(f"size channel needs a numerical attribute, got {size_kind}")
    if color_keys is not None and color_kind not in ("categorical", None):
        raise KindMismatchError(
            f"color channel needs a categorical attribute, got {color_kind}"
        )
    if size_values is not None:
        radii = size_scale({u: size_values.get(u) for u in unit_ids}, cell)
    else:
        radii = {u: default_radius(cell) for u in unit_ids}
    fills = {u: DEFAULT_FILL for u in unit_ids}
    if color_keys is not None:
        order = color_order or []
        mapping, cw = color_scale(order)
        warnings.extend(cw)
        for u in unit_ids:
            key = color_keys.get(u)
            if key is not None and key in mapping:
                fills[u] = mapping[key]
    return radii, fills, warnings


# --- transition planning ------------------------------------------------------

_DATA_EFFECTS = {
    "select": "fade_in",
    "union": "fade_in",
    "filter": "move",
    "intersect": "move",
    "aggregate": "move",
    "sort": "move",
}
_VISUAL_EFFECTS = {
    "layout": "move",
    "x_axis": "move",
    "y_axis": "move",
    "size": "resize",
    "color": "recolor",
}
_ANNOTATION_EFFECTS = {
    "highlight": "fade_in",
    "hide": "fade_out",
    "annotate": "fade_in",
}


def _stagger(n: int) -> float:
    if n <= 1:
        return 0.0
    total = min(STAGGER_MS * (n - 1), STAGGER_CAP_MS)
    return total / (n - 1)


def plan_transition(prev: Keyframe, nxt: Keyframe, actions) -> TransitionPlan:
    """One stage per action, in action order. Data stages move or fade
    units, visual stages re-encode them, annotation stages fade."""
    plan = TransitionPlan(prev.index, nxt.index)
    prev_visible = prev.visible_ids()
    next_visible = nxt.visible_ids()
    for action in actions:
        kind = action.kind
        if kind in _DATA_EFFECTS:
            effect = _DATA_EFFECTS[kind]
            if kind in ("select", "union"):
                affected = tuple(sorted(next_visible - prev_visible))
            else:
                affected = tuple(sorted(next_visible))
        elif kind in _VISUAL_EFFECTS:
            effect = _VISUAL_EFFECTS[kind]
            affected = tuple(sorted(next_visible))
        elif kind in _ANNOTATION_EFFECTS:
            effect = _ANNOTATION_EFFECTS[kind]
            affected = tuple(action.params.get("targets", ()))
        else:
            raise ValueError(f"unknown action kind {kind!r}")
        plan.stages.append(
            Stage(
                action=kind,
                effect=effect,
                unit_ids=affected,
                duration_ms=DURATION_MS,
                stagger_ms=_stagger(len(affected)),
            )
        )
    return plan
