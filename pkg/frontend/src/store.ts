/** Editor state. The server is the single source of truth: the store
 * never fabricates or mutates a document locally; it only adopts
 * documents returned by the API. Drag reordering is optimistic at the
 * keyframe-strip level and reconciles with whatever the server answers
 * (the normalized order, or an error plus a revert). */

import { ApiClient, ApiError } from "./api.js";
import type { DatamationDoc, DatasetInfo } from "./types.js";

export interface PendingEdit {
  kind: "modify_op" | "insert_op" | "delete_op";
  payload: Record<string, unknown>;
}

export interface EditorState {
  datasetId: string | null;
  schema: DatasetInfo | null;
  rows: (string | null)[][];
  sessionId: string | null;
  version: number;
  query: string;
  lastDecomposedScript: string | null;
  docId: string | null;
  doc: DatamationDoc | null;
  stripOrder: number[]; // displayed order of step indices (1-based)
  selection: number | null;
  dirtyEdits: PendingEdit[];
  stepError: { step: number; message: string } | null;
  notice: string | null;
  feedbackAccepted: boolean;
}

type Listener = (state: EditorState) => void;

function initialState(): EditorState {
  return {
    datasetId: null,
    schema: null,
    rows: [],
    sessionId: null,
    version: 0,
    query: "",
    lastDecomposedScript: null,
    docId: null,
    doc: null,
    stripOrder: [],
    selection: null,
    dirtyEdits: [],
    stepError: null,
    notice: null,
    feedbackAccepted: false,
  };
}

export class EditorStore {
  state: EditorState = initialState();
  private listeners: Listener[] = [];

  constructor(private api: ApiClient) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(patch: Partial<EditorState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  private adoptDocument(docId: string, doc: DatamationDoc, version: number): void {
    this.emit({
      docId,
      doc,
      version,
      stripOrder: doc.steps.map((s) => s.index),
      dirtyEdits: [],
      stepError: null,
    });
  }

  async loadCsv(name: string, csv: string): Promise<void> {
    const uploaded = await this.api.uploadDataset(name, csv);
    const preview = await this.api.previewDataset(uploaded.dataset_id);
    const session = await this.api.createSession(uploaded.dataset_id);
    this.emit({
      datasetId: uploaded.dataset_id,
      schema: uploaded.schema,
      rows: preview.rows,
      sessionId: session.session_id,
      version: session.version,
      doc: null,
      docId: null,
      stripOrder: [],
      lastDecomposedScript: null,
      feedbackAccepted: false,
      notice: null,
    });
  }

  /** Decompose a query and compile the resulting script. */
  async ask(query: string): Promise<void> {
    const sessionId = this.requireSession();
    this.emit({ query, notice: null, feedbackAccepted: false });
    try {
      const decomposed = await this.api.decompose(sessionId, query);
      this.emit({ lastDecomposedScript: decomposed.script });
      const compiled = await this.api.compile(sessionId, decomposed.script);
      this.adoptDocument(compiled.id, compiled.document, compiled.version);
    } catch (error) {
      if (error instanceof ApiError && error.body.code === "unrecognized_query") {
        this.emit({
          notice:
            "The query was not recognized; write the pipeline script directly.",
        });
        return;
      }
      throw error;
    }
  }

  async compileScript(script: string): Promise<void> {
    const sessionId = this.requireSession();
    const compiled = await this.api.compile(sessionId, script);
    this.adoptDocument(compiled.id, compiled.document, compiled.version);
  }

  /** Drag one keyframe to a new slot. Optimistically shows the new strip
   * order, asks the server, then adopts the server's truth. */
  async dragReorder(from: number, to: number): Promise<void> {
    const sessionId = this.requireSession();
    const doc = this.state.doc;
    if (!doc || from === to) return;
    const previousOrder = [...this.state.stripOrder];
    const order = [...previousOrder];
    const [moved] = order.splice(from, 1);
    order.splice(to, 0, moved);
    this.emit({ stripOrder: order }); // optimistic
    try {
      const result = await this.api.patchPipeline(
        sessionId,
        "reorder",
        { order },
        this.state.version,
      );
      this.adoptDocument(result.id, result.document, result.version);
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        this.emit({
          stripOrder: previousOrder,
          stepError: { step: moved, message: error.body.message },
        });
        return;
      }
      if (error instanceof ApiError && error.status === 409) {
        await this.reloadSession();
        return;
      }
      this.emit({ stripOrder: previousOrder });
      throw error;
    }
  }

  /** Queue a config-panel edit; nothing reaches the server until apply. */
  stageEdit(edit: PendingEdit): void {
    this.emit({ dirtyEdits: [...this.state.dirtyEdits, edit] });
  }

  /** Apply queued edits in order; the buffer drains only on success. */
  async applyEdits(): Promise<void> {
    const sessionId = this.requireSession();
    const edits = [...this.state.dirtyEdits];
    for (const edit of edits) {
      try {
        const result = await this.api.patchPipeline(
          sessionId,
          edit.kind,
          edit.payload,
          this.state.version,
        );
        this.adoptDocument(result.id, result.document, result.version);
      } catch (error) {
        if (error instanceof ApiError && error.status === 409) {
          await this.reloadSession();
        }
        if (error instanceof ApiError && error.status === 422) {
          const step = (edit.payload.index as number) ?? 1;
          this.emit({ stepError: { step, message: error.body.message } });
          return;
        }
        throw error;
      }
    }
  }

  /** Send the current pipeline as the correction for the session query. */
  async submitFeedback(): Promise<void> {
    const sessionId = this.requireSession();
    const doc = this.state.doc;
    if (!doc) throw new Error("nothing compiled yet");
    try {
      await this.api.submitFeedback(
        sessionId,
        this.state.lastDecomposedScript,
        doc.pipeline,
      );
      this.emit({
        feedbackAccepted: true,
        notice: "Correction saved: future decompositions of this query use it.",
      });
    } catch (error) {
      if (error instanceof ApiError) {
        this.emit({ notice: `Correction rejected: ${error.body.message}` });
        return;
      }
      throw error;
    }
  }

  async reloadSession(): Promise<void> {
    const sessionId = this.requireSession();
    const session = await this.api.getSession(sessionId);
    this.emit({ version: session.version, stepError: null });
    if (session.script) {
      const compiled = await this.api.compile(sessionId, session.script);
      this.adoptDocument(compiled.id, compiled.document, compiled.version);
    }
  }

  select(step: number | null): void {
    this.emit({ selection: step });
  }

  private requireSession(): string {
    if (!this.state.sessionId) throw new Error("no active session");
    return this.state.sessionId;
  }
}
