/** In-memory stand-in for the engine's HTTP API, faithful to its
 * contracts: version tokens, ledger-backed decomposition, canonical
 * server-side ordering, and step-attributed errors. */

import type { DatamationDoc, StepInfo, UnitState } from "../src/types.js";

interface FakeSession {
  id: string;
  datasetId: string;
  version: number;
  query: string | null;
  script: string | null;
}

const CANNED: Record<string, string> = {
  "how many rows have kind a": [
    '#1 = SELECT("demo")',
    '#2 = PROJECT("kind", #1)',
    '#3 = COMPARATIVE(#1, #2, "= a")',
    "#4 = AGGREGATE(count, #3)",
  ].join("\n"),
};

function normalize(query: string): string {
  return query.toLowerCase().replace(/[^\w\s]/g, "").replace(/\s+/g, " ").trim();
}

function unit(id: number, x: number): UnitState {
  return {
    unit_id: id,
    x,
    y: 270,
    radius: 9.6,
    fill: "#86b6d9",
    opacity: 1,
    stroke_width: 0,
    group_key: null,
  };
}

function compileDoc(script: string): DatamationDoc {
  const lines = script.split("\n").filter((l) => l.trim());
  const steps: StepInfo[] = lines.map((line, i) => ({
    index: i + 1,
    kind: /=\s*([A-Z]+)\(/.exec(line)?.[1] ?? "SELECT",
    script: line,
    caption: `step ${i + 1}`,
    actions: [],
    keyframe: {
      index: i + 1,
      caption: `step ${i + 1}`,
      units: [unit(0, 100 + i), unit(1, 200 + i), unit(2, 300 + i)],
      axis: null,
      annotations: [],
    },
  }));
  return {
    version: "1",
    dataset: { name: "demo", columns: [], row_count: 3 },
    pipeline: script,
    provenance: { query: null, source: "script", created_ms: 0 },
    steps,
    transitions: steps.slice(1).map((_, i) => ({
      from_index: i + 1,
      to_index: i + 2,
      stages: [
        {
          action: "sort",
          effect: "move" as const,
          unit_ids: [0, 1, 2],
          duration_ms: 800,
          stagger_ms: 0,
        },
      ],
    })),
    warnings: [],
  };
}

export class FakeEngine {
  sessions = new Map<string, FakeSession>();
  documents = new Map<string, DatamationDoc>();
  ledger = new Map<string, string>();
  patchCalls: unknown[] = [];
  private nextId = 1;

  /** A FetchLike for ApiClient. */
  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const headers = (init?.headers ?? {}) as Record<string, string>;
    const isJson = (headers["content-type"] ?? "").includes("json");
    const body = init?.body && isJson ? JSON.parse(String(init.body)) : {};
    return this.route(method, path, body, init);
  };

  private respond(status: number, payload?: unknown): Response {
    return new Response(payload === undefined ? null : JSON.stringify(payload), {
      status,
      headers: { "content-type": "application/json" },
    });
  }

  private error(status: number, code: string, message: string, extra = {}) {
    return this.respond(status, { error: { code, message, ...extra } });
  }

  private route(
    method: string,
    path: string,
    body: Record<string, unknown>,
    init?: RequestInit,
  ): Response {
    let m: RegExpExecArray | null;
    if (method === "POST" && path.startsWith("/datasets")) {
      return this.respond(200, {
        dataset_id: "ds-demo",
        schema: { name: "demo", columns: [], row_count: 3 },
      });
    }
    if (method === "GET" && (m = /^\/datasets\/(.+)$/.exec(path))) {
      return this.respond(200, {
        dataset_id: m[1],
        schema: { name: "demo", columns: [], row_count: 3 },
        rows: [["a"], ["b"], ["a"]],
      });
    }
    if (method === "POST" && path === "/sessions") {
      const session: FakeSession = {
        id: `s-${this.nextId++}`,
        datasetId: String(body.dataset_id),
        version: 1,
        query: null,
        script: null,
      };
      this.sessions.set(session.id, session);
      return this.respond(200, { session_id: session.id, version: 1 });
    }
    if ((m = /^\/sessions\/([^/]+)$/.exec(path)) && method === "GET") {
      const session = this.sessions.get(m[1]);
      if (!session) return this.error(404, "not_found", "no session");
      return this.respond(200, {
        session_id: session.id,
        dataset_id: session.datasetId,
        version: session.version,
        query: session.query,
        script: session.script,
      });
    }
    if ((m = /^\/sessions\/([^/]+)\/decompose$/.exec(path))) {
      const session = this.sessions.get(m[1]);
      if (!session) return this.error(404, "not_found", "no session");
      const query = String(body.query ?? "");
      const key = `${normalize(query)}|demo`;
      const script = this.ledger.get(key) ?? CANNED[normalize(query)];
      if (!script) {
        return this.error(422, "unrecognized_query", "no pattern matches");
      }
      session.version += 1;
      session.query = query;
      session.script = script;
      return this.respond(200, { script, version: session.version });
    }
    if ((m = /^\/sessions\/([^/]+)\/compile$/.exec(path))) {
      const session = this.sessions.get(m[1]);
      if (!session) return this.error(404, "not_found", "no session");
      const script = String(body.script ?? session.script ?? "");
      return this.finishCompile(session, script);
    }
    if ((m = /^\/sessions\/([^/]+)\/pipeline$/.exec(path)) && method === "PATCH") {
      const session = this.sessions.get(m[1]);
      if (!session) return this.error(404, "not_found", "no session");
      this.patchCalls.push(body);
      if (body.version !== session.version) {
        return this.error(409, "version_conflict", "stale token", {
          current_version: session.version,
        });
      }
      if (body.edit === "reorder") {
        const order = body.payload as { order: number[] };
        // a SELECT can only open the pipeline; anything else has no
        // continuous order (mirror of the engine's reorder result)
        if (order.order[0] !== 1) {
          return this.error(
            422,
            "no_continuous_order",
            "no arrangement lets every step consume its predecessor's output",
          );
        }
        // the engine restores the canonical order: same script comes back
        return this.finishCompile(session, session.script ?? "");
      }
      if (body.edit === "modify_op") {
        const payload = body.payload as { index: number; op: string };
        const lines = (session.script ?? "").split("\n");
        if (!payload.op.includes("=")) {
          return this.error(422, "invalid_edit", "not a statement");
        }
        lines[payload.index - 1] = payload.op;
        return this.finishCompile(session, lines.join("\n"));
      }
      return this.error(422, "invalid_edit", `unsupported ${body.edit}`);
    }
    if ((m = /^\/sessions\/([^/]+)\/feedback$/.exec(path))) {
      const session = this.sessions.get(m[1]);
      if (!session) return this.error(404, "not_found", "no session");
      if (!session.query) {
        return this.error(422, "invalid_correction", "no query to correct");
      }
      const corrected = String(body.corrected ?? "");
      if (!corrected.includes("SELECT")) {
        return this.error(422, "invalid_correction", "must start from a SELECT");
      }
      this.ledger.set(`${normalize(session.query)}|demo`, corrected);
      return this.respond(204);
    }
    if ((m = /^\/datamations\/(.+)$/.exec(path)) && method === "GET") {
      const doc = this.documents.get(m[1]);
      if (!doc) return this.error(404, "not_found", "no datamation");
      return this.respond(200, doc);
    }
    void init;
    return this.error(404, "not_found", `${method} ${path}`);
  }

  private finishCompile(session: FakeSession, script: string): Response {
    if (!script) return this.error(422, "no_pipeline", "nothing to compile");
    const doc = compileDoc(script);
    const id = `dm-${this.nextId++}`;
    this.documents.set(id, doc);
    session.version += 1;
    session.script = script;
    return this.respond(200, { id, version: session.version, document: doc });
  }
}
