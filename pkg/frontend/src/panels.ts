/** DOM panels: data table, query box, keyframe strip with drag reorder,
 * step configuration, and playback controls. All mutations go through
 * the store; panels re-render from store state. */

import { frameScene, transitionScene, type Scene } from "./interpolate.js";
import { drawScene } from "./render.js";
import type { EditorState, EditorStore } from "./store.js";
import { Timeline } from "./timeline.js";
import type { DatamationDoc, Playhead } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderDataPanel(root: HTMLElement, state: EditorState): void {
  root.replaceChildren();
  if (!state.schema) {
    root.append(el("p", "hint", "Upload a CSV to begin."));
    return;
  }
  root.append(el("h3", undefined, state.schema.name));
  const table = el("table", "data-grid");
  const head = el("tr");
  for (const column of state.schema.columns) {
    head.append(el("th", undefined, `${column.name} (${column.kind})`));
  }
  table.append(head);
  for (const row of state.rows.slice(0, 50)) {
    const tr = el("tr");
    for (const cell of row) tr.append(el("td", undefined, cell ?? ""));
    table.append(tr);
  }
  root.append(table);
}

export function renderStrip(
  root: HTMLElement,
  state: EditorState,
  store: EditorStore,
  onSeek: (frame: number) => void,
): void {
  root.replaceChildren();
  const doc = state.doc;
  if (!doc) return;
  const byIndex = new Map(doc.steps.map((s) => [s.index, s]));
  state.stripOrder.forEach((stepIndex, slot) => {
    const step = byIndex.get(stepIndex);
    if (!step) return;
    const card = el("div", "frame-card");
    card.draggable = true;
    card.dataset.slot = String(slot);
    if (state.selection === stepIndex) card.classList.add("selected");
    if (state.stepError && state.stepError.step === stepIndex) {
      card.classList.add("error");
      card.title = state.stepError.message;
    }
    card.append(el("div", "frame-kind", `${stepIndex}. ${step.kind}`));
    card.append(el("div", "frame-caption", step.caption));
    card.addEventListener("click", () => {
      store.select(stepIndex);
      onSeek(stepIndex - 1);
    });
    card.addEventListener("dragstart", (event) => {
      event.dataTransfer?.setData("text/plain", String(slot));
    });
    card.addEventListener("dragover", (event) => event.preventDefault());
    card.addEventListener("drop", (event) => {
      event.preventDefault();
      const from = Number(event.dataTransfer?.getData("text/plain"));
      if (!Number.isNaN(from) && from !== slot) {
        void store.dragReorder(from, slot);
      }
    });
    root.append(card);
  });
}

export function renderConfigPanel(
  root: HTMLElement,
  state: EditorState,
  store: EditorStore,
): void {
  root.replaceChildren();
  const doc = state.doc;
  if (!doc) return;
  root.append(el("h3", undefined, "Operations"));
  for (const step of doc.steps) {
    const row = el("div", "op-row");
    const input = el("input") as HTMLInputElement;
    input.value = step.script;
    input.addEventListener("change", () => {
      store.stageEdit({
        kind: "modify_op",
        payload: { index: step.index, op: input.value },
      });
    });
    const remove = el("button", "small", "delete");
    remove.addEventListener("click", () => {
      store.stageEdit({ kind: "delete_op", payload: { index: step.index } });
    });
    row.append(input, remove);
    root.append(row);
  }
  const addRow = el("div", "op-row");
  const addInput = el("input") as HTMLInputElement;
  addInput.placeholder = `#${doc.steps.length + 1} = SORT(#${doc.steps.length}, "column", asc)`;
  const addButton = el("button", "small", "add step");
  addButton.addEventListener("click", () => {
    if (addInput.value.trim()) {
      store.stageEdit({
        kind: "insert_op",
        payload: { index: doc.steps.length + 1, op: addInput.value },
      });
      addInput.value = "";
    }
  });
  addRow.append(addInput, addButton);
  root.append(addRow);

  const actions = el("div", "op-actions");
  const apply = el("button", undefined, `update (${state.dirtyEdits.length})`);
  apply.disabled = state.dirtyEdits.length === 0;
  apply.addEventListener("click", () => void store.applyEdits());
  const feedback = el(
    "button",
    undefined,
    state.feedbackAccepted ? "correction saved" : "save as correction",
  );
  feedback.disabled = !state.lastDecomposedScript || state.feedbackAccepted;
  feedback.addEventListener("click", () => void store.submitFeedback());
  actions.append(apply, feedback);
  root.append(actions);
  if (state.notice) root.append(el("p", "notice", state.notice));
}

export interface PlaybackView {
  timeline: Timeline | null;
  seek(frame: number): void;
}

export function setupPlayback(
  canvas: HTMLCanvasElement,
  captionNode: HTMLElement,
  controls: HTMLElement,
  getDoc: () => DatamationDoc | null,
): PlaybackView {
  const ctx = canvas.getContext("2d");
  const view: PlaybackView = {
    timeline: null,
    seek(frame: number) {
      view.timeline?.seekFrame(frame);
    },
  };

  const playButton = el("button", undefined, "play");
  playButton.addEventListener("click", () => {
    if (!view.timeline) return;
    if (view.timeline.atEnd) view.timeline.restart();
    view.timeline.playing = !view.timeline.playing;
    playButton.textContent = view.timeline.playing ? "pause" : "play";
  });
  const back = el("button", undefined, "<");
  const forward = el("button", undefined, ">");
  back.addEventListener("click", () => stepBy(-1));
  forward.addEventListener("click", () => stepBy(1));
  const speed = el("select") as HTMLSelectElement;
  for (const value of ["0.5", "1", "2"]) {
    const option = el("option", undefined, `x${value}`) as HTMLOptionElement;
    option.value = value;
    if (value === "1") option.selected = true;
    speed.append(option);
  }
  speed.addEventListener("change", () => {
    if (view.timeline) view.timeline.speed = Number(speed.value);
  });
  controls.replaceChildren(back, playButton, forward, speed);

  function stepBy(delta: number): void {
    const doc = getDoc();
    if (doc && view.timeline) {
      view.timeline.playing = false;
      playButton.textContent = "play";
      view.timeline.stepFrame(delta, doc.steps.length);
    }
  }

  let lastTick = performance.now();
  function tick(now: number): void {
    const doc = getDoc();
    if (doc && ctx) {
      if (!view.timeline) view.timeline = new Timeline(doc);
      const playhead = view.timeline.advance(now - lastTick);
      const scene = sceneAt(doc, playhead);
      drawScene(ctx, scene);
      captionNode.textContent = scene.caption;
      if (!view.timeline.playing) {
        playButton.textContent = view.timeline.atEnd ? "replay" : "play";
      }
    }
    lastTick = now;
    requestAnimationFrame(tick);
  }
  requestAnimationFrame(tick);
  return view;
}

export function sceneAt(doc: DatamationDoc, playhead: Playhead): Scene {
  if (playhead.stage < 0 || playhead.frame >= doc.transitions.length) {
    return frameScene(doc, playhead.frame);
  }
  return transitionScene(doc, playhead.frame, playhead.stage, playhead.t);
}
