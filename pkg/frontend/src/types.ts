/** Wire types of the datamation document (version "1") and the API. */

export interface ColumnInfo {
  name: string;
  kind: "numerical" | "categorical" | "temporal" | "text";
}

export interface DatasetInfo {
  name: string;
  columns: ColumnInfo[];
  row_count: number;
}

export interface UnitState {
  unit_id: number;
  x: number;
  y: number;
  radius: number;
  fill: string;
  opacity: number;
  stroke_width: number;
  group_key: string | null;
}

export interface AxisInfo {
  channel: "x" | "y";
  attribute: string;
  ticks: string[];
}

export interface AnnotationInfo {
  targets: number[];
  text: string;
  group_key: string | null;
}

export interface Keyframe {
  index: number;
  caption: string;
  units: UnitState[];
  axis: AxisInfo | null;
  annotations: AnnotationInfo[];
}

export interface ActionInfo {
  family: "data" | "visual" | "annotation";
  kind: string;
  params: Record<string, unknown>;
}

export interface StepInfo {
  index: number;
  kind: string;
  script: string;
  caption: string;
  actions: ActionInfo[];
  keyframe: Keyframe;
}

export type StageEffect = "move" | "fade_in" | "fade_out" | "resize" | "recolor";

export interface Stage {
  action: string;
  effect: StageEffect;
  unit_ids: number[];
  duration_ms: number;
  stagger_ms: number;
}

export interface TransitionPlan {
  from_index: number;
  to_index: number;
  stages: Stage[];
}

export interface DatamationDoc {
  version: string;
  dataset: DatasetInfo;
  pipeline: string;
  provenance: { query: string | null; source: string; created_ms: number };
  steps: StepInfo[];
  transitions: TransitionPlan[];
  warnings: string[];
}

export interface SessionInfo {
  session_id: string;
  dataset_id: string;
  version: number;
  query: string | null;
  script: string | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  [key: string]: unknown;
}

/** Playback position: a frame, or a stage of the following transition. */
export interface Playhead {
  frame: number; // 0-based keyframe index
  stage: number; // -1 while holding on the frame, else stage index
  t: number; // progress within the stage, clamped to [0, 1]
}
