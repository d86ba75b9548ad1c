import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { EditorStore } from "../src/store.js";
import { FakeEngine } from "./fakeengine.js";

const QUERY = "how many rows have kind a";

function makeStore(engine: FakeEngine): EditorStore {
  return new EditorStore(new ApiClient("http://fake", engine.fetch));
}

describe("editor store", () => {
  let engine: FakeEngine;
  let store: EditorStore;

  beforeEach(async () => {
    engine = new FakeEngine();
    store = makeStore(engine);
    await store.loadCsv("demo", "kind\na\nb\na\n");
  });

  it("ask decomposes and compiles", async () => {
    await store.ask(QUERY);
    expect(store.state.doc).not.toBeNull();
    expect(store.state.doc!.steps.length).toBe(4);
    expect(store.state.lastDecomposedScript).toContain("AGGREGATE");
    expect(store.state.stripOrder).toEqual([1, 2, 3, 4]);
  });

  it("unrecognized queries surface a notice, not a crash", async () => {
    await store.ask("sing me a song");
    expect(store.state.doc).toBeNull();
    expect(store.state.notice).toContain("not recognized");
  });

  describe("drag reorder", () => {
    beforeEach(async () => {
      await store.ask(QUERY);
    });

    it("round-trips through PATCH and adopts the server's order", async () => {
      const before = store.state.doc;
      await store.dragReorder(1, 2); // swap two middle steps
      // the engine restored the canonical order: strip follows the server
      expect(store.state.stripOrder).toEqual([1, 2, 3, 4]);
      expect(store.state.doc).not.toBe(before); // adopted from the response
      expect(engine.patchCalls.length).toBe(1);
      const call = engine.patchCalls[0] as { payload: { order: number[] } };
      expect(call.payload.order).toEqual([1, 3, 2, 4]);
    });

    it("reverts and marks the step when the server answers 422", async () => {
      const before = store.state.doc;
      await store.dragReorder(0, 3); // drags SELECT off the front
      expect(store.state.stripOrder).toEqual([1, 2, 3, 4]); // reverted
      expect(store.state.doc).toBe(before); // never replaced locally
      expect(store.state.stepError).not.toBeNull();
      expect(store.state.stepError!.step).toBe(1);
    });

    it("reloads server state on a stale version token", async () => {
      // move the session forward behind the store's back
      const session = [...engine.sessions.values()][0];
      session.version += 5;
      await store.dragReorder(1, 2);
      expect(store.state.version).toBe(session.version);
      expect(store.state.doc).not.toBeNull();
    });

    it("same-slot drags send no request", async () => {
      await store.dragReorder(2, 2);
      expect(engine.patchCalls.length).toBe(0);
    });
  });

  describe("config edits", () => {
    it("buffers edits until applied, then drains on success", async () => {
      await store.ask(QUERY);
      store.stageEdit({
        kind: "modify_op",
        payload: { index: 3, op: '#3 = COMPARATIVE(#1, #2, "= b")' },
      });
      expect(store.state.dirtyEdits.length).toBe(1);
      await store.applyEdits();
      expect(store.state.dirtyEdits.length).toBe(0);
      expect(store.state.doc!.pipeline).toContain("= b");
    });

    it("keeps the buffer and marks the step on a rejected edit", async () => {
      await store.ask(QUERY);
      store.stageEdit({
        kind: "modify_op",
        payload: { index: 3, op: "garbage" },
      });
      await store.applyEdits();
      expect(store.state.stepError).not.toBeNull();
      expect(store.state.dirtyEdits.length).toBe(1);
    });
  });

  describe("feedback", () => {
    it("a submitted correction changes the next decomposition in a fresh session", async () => {
      await store.ask(QUERY);
      const lines = store.state.lastDecomposedScript!.split("\n").slice(0, 3);
      const corrected = [
        ...lines,
        '#4 = SORT(#3, "kind", asc)',
        "#5 = AGGREGATE(count, #4)",
      ].join("\n");
      await store.compileScript(corrected);
      await store.submitFeedback();
      expect(store.state.feedbackAccepted).toBe(true);

      // a brand new editor against the same engine
      const fresh = makeStore(engine);
      await fresh.loadCsv("demo", "kind\na\nb\na\n");
      await fresh.ask(QUERY);
      expect(fresh.state.doc!.pipeline).toBe(corrected);
      expect(fresh.state.doc!.steps.length).toBe(5);
    });

    it("invalid corrections surface inline", async () => {
      await store.ask(QUERY);
      await store.compileScript('#1 = SORT_ONLY_NOPE');
      // the fake engine rejects scripts without a SELECT
      await store.submitFeedback();
      expect(store.state.feedbackAccepted).toBe(false);
      expect(store.state.notice).toContain("rejected");
    });
  });
});
