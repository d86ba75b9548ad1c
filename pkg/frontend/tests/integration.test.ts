/** End-to-end checks against a live engine (start one with
 * `datamator serve --port 8077`); skipped when it is not reachable. */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { EditorStore } from "../src/store.js";

const ENGINE = process.env.DATAMATOR_URL ?? "http://127.0.0.1:8077";
const QUERY = "how many students were born in 2000?";

const alive = await fetch(`${ENGINE}/datamations/probe`).then(
  () => true,
  () => false,
);

function studentsCsv(): string {
  const url = new URL("../../tests/fixtures/students.csv", import.meta.url);
  return readFileSync(url, "utf-8");
}

describe.skipIf(!alive)("against a live engine", () => {
  it("uploads, decomposes, compiles, and plays a document", async () => {
    const store = new EditorStore(new ApiClient(ENGINE));
    await store.loadCsv("students", studentsCsv());
    await store.ask(QUERY);
    const doc = store.state.doc!;
    expect(doc.steps.map((s) => s.kind)).toEqual([
      "SELECT", "PROJECT", "COMPARATIVE", "AGGREGATE",
    ]);
    expect(doc.steps[3].caption.endsWith("is 3")).toBe(true);
    expect(doc.transitions.length).toBe(3);
  });

  it("drag reorder round-trips to the server's canonical order", async () => {
    const store = new EditorStore(new ApiClient(ENGINE));
    await store.loadCsv("students", studentsCsv());
    await store.ask(QUERY);
    await store.dragReorder(1, 2); // propose swapping PROJECT/COMPARATIVE
    // server truth: the only continuous order comes back
    expect(store.state.doc!.steps.map((s) => s.kind)).toEqual([
      "SELECT", "PROJECT", "COMPARATIVE", "AGGREGATE",
    ]);
    expect(store.state.stripOrder).toEqual([1, 2, 3, 4]);
  });

  it("a submitted correction changes the next decomposition in a fresh session", async () => {
    const marker = Date.now() % 100000;
    const query = `how many students were born in 2000? (case ${marker})`;
    const store = new EditorStore(new ApiClient(ENGINE));
    await store.loadCsv("students", studentsCsv());
    await store.ask(query);
    // rebuild the tail so the script stays a continuous chain: sort the
    // filtered records before counting them
    const lines = store.state.lastDecomposedScript!.split("\n").slice(0, 3);
    const corrected = [
      ...lines,
      '#4 = SORT(#3, "birth_year", asc)',
      "#5 = AGGREGATE(count, #4)",
    ].join("\n");
    await store.compileScript(corrected);
    await store.submitFeedback();
    expect(store.state.feedbackAccepted).toBe(true);

    const fresh = new EditorStore(new ApiClient(ENGINE));
    await fresh.loadCsv("students", studentsCsv());
    await fresh.ask(query);
    expect(fresh.state.doc!.pipeline).toBe(corrected);
    expect(fresh.state.doc!.steps.length).toBe(5);
  });
});
