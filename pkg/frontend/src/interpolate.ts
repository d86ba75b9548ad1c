/** Pure scene computation for playback.
 *
 * A scene is the fully resolved set of drawable units (plus caption and
 * tooltip annotations) at one playback position. Keyframes map to scenes
 * directly; inside a transition every unit property interpolates linearly
 * within the window of the last stage that governs it, and properties no
 * stage governs drift linearly across the whole transition. Stage
 * boundaries therefore reproduce the keyframes exactly.
 */

import type {
  DatamationDoc,
  Keyframe,
  Stage,
  StageEffect,
  UnitState,
} from "./types.js";

export interface SceneUnit {
  id: number;
  x: number;
  y: number;
  radius: number;
  fill: string;
  opacity: number;
  strokeWidth: number;
}

export interface SceneAnnotation {
  text: string;
  targets: number[];
  opacity: number;
}

export interface Scene {
  units: SceneUnit[];
  caption: string;
  annotations: SceneAnnotation[];
  axis: { channel: "x" | "y"; attribute: string; ticks: string[] } | null;
}

const NUMERIC_PROPS = ["x", "y", "radius", "opacity"] as const;
type NumericProp = (typeof NUMERIC_PROPS)[number];

const EFFECT_PROPS: Record<StageEffect, ReadonlyArray<NumericProp | "fill">> = {
  move: ["x", "y"],
  resize: ["radius"],
  recolor: ["fill"],
  fade_in: ["opacity"],
  fade_out: ["opacity"],
};

export function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

export function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

export function lerpColor(a: string, b: string, t: number): string {
  if (t <= 0) return a;
  if (t >= 1) return b;
  const pa = parseHex(a);
  const pb = parseHex(b);
  if (!pa || !pb) return t < 0.5 ? a : b;
  const mix = pa.map((v, i) => Math.round(lerp(v, pb[i], t)));
  return `#${mix.map((v) => v.toString(16).padStart(2, "0")).join("")}`;
}

function parseHex(color: string): number[] | null {
  const m = /^#([0-9a-fA-F]{6})$/.exec(color);
  if (!m) return null;
  return [0, 2, 4].map((i) => parseInt(m[1].slice(i, i + 2), 16));
}

function toSceneUnit(u: UnitState): SceneUnit {
  return {
    id: u.unit_id,
    x: u.x,
    y: u.y,
    radius: u.radius,
    fill: u.fill,
    opacity: u.opacity,
    strokeWidth: u.stroke_width,
  };
}

export function frameScene(doc: DatamationDoc, frame: number): Scene {
  const kf = doc.steps[frame].keyframe;
  return {
    units: kf.units.map(toSceneUnit),
    caption: kf.caption,
    annotations: kf.annotations.map((a) => ({
      text: a.text,
      targets: a.targets,
      opacity: 1,
    })),
    axis: kf.axis,
  };
}

interface Endpoint {
  x: number;
  y: number;
  radius: number;
  fill: string;
  opacity: number;
  strokeWidth: number;
}

function endpointOf(u: UnitState): Endpoint {
  return {
    x: u.x,
    y: u.y,
    radius: u.radius,
    fill: u.fill,
    opacity: u.opacity,
    strokeWidth: u.stroke_width,
  };
}

/** The window [start, end] (in global transition progress) of the last
 * stage that governs `prop` for this unit, or null when none does. */
function governingWindow(
  stages: Stage[],
  unitId: number,
  prop: NumericProp | "fill",
): [number, number] | null {
  let found: number | null = null;
  stages.forEach((stage, i) => {
    const props = EFFECT_PROPS[stage.effect];
    if (props.includes(prop) && stage.unit_ids.includes(unitId)) {
      found = i;
    }
  });
  if (found === null) return null;
  const n = stages.length;
  return [found / n, (found + 1) / n];
}

function localProgress(window: [number, number] | null, g: number): number {
  if (window === null) return g;
  const [start, end] = window;
  if (end === start) return g >= end ? 1 : 0;
  return clamp((g - start) / (end - start), 0, 1);
}

/** Scene inside transition `index` (connecting keyframe index to index+1)
 * at `stage` with progress `t` in [0, 1]. */
export function transitionScene(
  doc: DatamationDoc,
  index: number,
  stage: number,
  t: number,
): Scene {
  const prev: Keyframe = doc.steps[index].keyframe;
  const next: Keyframe = doc.steps[index + 1].keyframe;
  const stages = doc.transitions[index].stages;
  const n = stages.length;
  const g =
    n === 0 ? 1 : clamp((clamp(stage, 0, n - 1) + clamp(t, 0, 1)) / n, 0, 1);

  const prevById = new Map(prev.units.map((u) => [u.unit_id, u]));
  const nextById = new Map(next.units.map((u) => [u.unit_id, u]));
  const ids: number[] = [];
  for (const u of prev.units) ids.push(u.unit_id);
  for (const u of next.units) if (!prevById.has(u.unit_id)) ids.push(u.unit_id);

  const units: SceneUnit[] = ids.map((id) => {
    const pu = prevById.get(id);
    const nu = nextById.get(id);
    // entering units appear in place; leaving units fade out in place
    const a: Endpoint = pu
      ? endpointOf(pu)
      : { ...endpointOf(nu as UnitState), opacity: 0 };
    const b: Endpoint = nu
      ? endpointOf(nu)
      : { ...endpointOf(pu as UnitState), opacity: 0 };

    const value = (prop: NumericProp): number => {
      const local = localProgress(governingWindow(stages, id, prop), g);
      return lerp(a[prop], b[prop], local);
    };
    const fillLocal = localProgress(governingWindow(stages, id, "fill"), g);
    return {
      id,
      x: value("x"),
      y: value("y"),
      radius: value("radius"),
      opacity: value("opacity"),
      fill: lerpColor(a.fill, b.fill, fillLocal),
      strokeWidth: lerp(a.strokeWidth, b.strokeWidth, g),
    };
  });

  // tooltips belong to the target frame; they fade with their annotate
  // stage when one exists, otherwise with overall progress
  const annotateWindow = (() => {
    let found: [number, number] | null = null;
    stages.forEach((s, i) => {
      if (s.action === "annotate") found = [i / n, (i + 1) / n];
    });
    return found;
  })();
  const annOpacity = localProgress(annotateWindow, g);
  const annotations: SceneAnnotation[] = next.annotations.map((aNote) => ({
    text: aNote.text,
    targets: aNote.targets,
    opacity: annOpacity,
  }));

  return {
    units,
    caption: g < 0.5 ? prev.caption : next.caption,
    annotations,
    axis: g < 0.5 ? prev.axis : next.axis,
  };
}

/** Drawable units only: what a renderer actually paints. */
export function visibleUnits(scene: Scene): SceneUnit[] {
  return scene.units.filter((u) => u.opacity > 0);
}

export function scenesMatch(a: Scene, b: Scene, tolerance = 1e-9): boolean {
  const va = visibleUnits(a).sort((u, v) => u.id - v.id);
  const vb = visibleUnits(b).sort((u, v) => u.id - v.id);
  if (va.length !== vb.length) return false;
  for (let i = 0; i < va.length; i++) {
    const u = va[i];
    const v = vb[i];
    if (u.id !== v.id || u.fill !== v.fill) return false;
    for (const prop of NUMERIC_PROPS) {
      if (Math.abs(u[prop] - v[prop]) > tolerance) return false;
    }
    if (Math.abs(u.strokeWidth - v.strokeWidth) > tolerance) return false;
  }
  return true;
}
