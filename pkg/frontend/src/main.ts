/** Editor bootstrap: wires the five panels to the store and the engine. */

import { ApiClient } from "./api.js";
import {
  renderConfigPanel,
  renderDataPanel,
  renderStrip,
  setupPlayback,
} from "./panels.js";
import { EditorStore } from "./store.js";

const ENGINE_URL =
  new URLSearchParams(location.search).get("engine") ?? "http://127.0.0.1:8077";

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

const store = new EditorStore(new ApiClient(ENGINE_URL));

const canvas = byId("canvas") as HTMLCanvasElement;
const playback = setupPlayback(
  canvas,
  byId("caption"),
  byId("controls"),
  () => store.state.doc,
);

const fileInput = byId("csv-file") as HTMLInputElement;
fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  const text = await file.text();
  const name = file.name.replace(/\.csv$/i, "") || "dataset";
  await store.loadCsv(name, text);
});

const queryInput = byId("query") as HTMLInputElement;
const askButton = byId("ask") as HTMLButtonElement;
askButton.addEventListener("click", () => {
  if (queryInput.value.trim()) void store.ask(queryInput.value.trim());
});
queryInput.addEventListener("keydown", (event) => {
  if (event.key === "Enter") askButton.click();
});

let lastDoc = store.state.doc;
store.subscribe((state) => {
  renderDataPanel(byId("data-panel"), state);
  renderStrip(byId("strip"), state, store, (frame) => playback.seek(frame));
  renderConfigPanel(byId("config-panel"), state, store);
  if (state.doc !== lastDoc) {
    lastDoc = state.doc;
    playback.timeline = null; // rebuilt from the new document on next tick
  }
});
