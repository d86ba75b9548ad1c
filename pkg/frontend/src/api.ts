/** Thin typed client over the engine's HTTP API. The fetch function is
 * injectable so tests can run against an in-memory server. */

import type { ApiErrorBody, DatamationDoc, DatasetInfo, SessionInfo } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

export interface CompileResult {
  id: string;
  version: number;
  document: DatamationDoc;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: string | object,
    contentType = "application/json",
  ): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": contentType } };
    if (body !== undefined) {
      init.body = typeof body === "string" ? body : JSON.stringify(body);
    }
    const response = await this.fetchFn(this.base + path, init);
    if (response.status === 204) {
      return undefined as T;
    }
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : {};
    if (!response.ok) {
      const error: ApiErrorBody = parsed.error ?? {
        code: "http_error",
        message: `${response.status}`,
      };
      throw new ApiError(response.status, error);
    }
    return parsed as T;
  }

  uploadDataset(name: string, csv: string) {
    return this.request<{ dataset_id: string; schema: DatasetInfo }>(
      "POST",
      `/datasets?name=${encodeURIComponent(name)}`,
      csv,
      "text/csv",
    );
  }

  previewDataset(datasetId: string) {
    return this.request<{
      dataset_id: string;
      schema: DatasetInfo;
      rows: (string | null)[][];
    }>("GET", `/datasets/${datasetId}`);
  }

  createSession(datasetId: string) {
    return this.request<{ session_id: string; version: number }>(
      "POST",
      "/sessions",
      { dataset_id: datasetId },
    );
  }

  getSession(sessionId: string) {
    return this.request<SessionInfo>("GET", `/sessions/${sessionId}`);
  }

  decompose(sessionId: string, query: string) {
    return this.request<{ script: string; version: number }>(
      "POST",
      `/sessions/${sessionId}/decompose`,
      { query },
    );
  }

  compile(sessionId: string, script: string) {
    return this.request<CompileResult>(
      "POST",
      `/sessions/${sessionId}/compile`,
      { script },
    );
  }

  patchPipeline(
    sessionId: string,
    edit: "reorder" | "modify_op" | "insert_op" | "delete_op",
    payload: Record<string, unknown>,
    version: number,
  ) {
    return this.request<CompileResult>(
      "PATCH",
      `/sessions/${sessionId}/pipeline`,
      { edit, payload, version },
    );
  }

  submitFeedback(sessionId: string, original: string | null, corrected: string) {
    return this.request<void>("POST", `/sessions/${sessionId}/feedback`, {
      original,
      corrected,
    });
  }

  getDatamation(docId: string) {
    return this.request<DatamationDoc>("GET", `/datamations/${docId}`);
  }
}
