/** Typed client for the labeling service; all access goes through this API. */

import type { Run } from "./raster.js";

export interface SessionInfo {
  id: string;
  config: { name: string; classes: number[] };
}

export interface FeaturizeState {
  state: "idle" | "running" | "done" | "error";
  done: number;
  total: number;
  error: string | null;
}

export interface SessionStatus {
  id: string;
  images: string[];
  labeled: string[];
  classifiers: number[];
  featurize: FeaturizeState;
  config: { classes: number[] };
}

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function expectJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class Client {
  readonly base: string;

  constructor(base: string) {
    this.base = base.replace(/\/$/, "");
  }

  createSession(name?: string): Promise<SessionInfo> {
    return this.postJson("/sessions", { name: name ?? null });
  }

  status(sessionId: string): Promise<SessionStatus> {
    return fetch(`${this.base}/sessions/${sessionId}/status`).then((r) =>
      expectJson<SessionStatus>(r),
    );
  }

  async uploadImage(sessionId: string, imageId: string, pngBlob: Blob): Promise<void> {
    const response = await fetch(
      `${this.base}/sessions/${sessionId}/images?image_id=${encodeURIComponent(imageId)}`,
      { method: "POST", headers: { "content-type": "image/png" }, body: pngBlob },
    );
    await expectJson(response);
  }

  featurize(sessionId: string): Promise<{ state: string; total: number }> {
    return this.postJson(`/sessions/${sessionId}/featurize`, {});
  }

  async putLabels(
    sessionId: string,
    imageId: string,
    payload: { width: number; height: number; classes: Record<number, Run[]> },
  ): Promise<{ labeled_pixels: number }> {
    const response = await fetch(`${this.base}/sessions/${sessionId}/labels/${imageId}`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    return expectJson(response);
  }

  train(sessionId: string, includeAttention = false): Promise<{ version: number }> {
    return this.postJson(`/sessions/${sessionId}/train`, {
      kind: "logistic",
      include_attention: includeAttention,
    });
  }

  apply(sessionId: string, version?: number): Promise<{ predicted: string[] }> {
    const query = version ? `?version=${version}` : "";
    return this.postJson(`/sessions/${sessionId}/apply${query}`, {});
  }

  /** URL of the prediction overlay PNG; cache-busted per classifier version. */
  predictionUrl(sessionId: string, imageId: string, version?: number): string {
    const query = version ? `?version=${version}` : "";
    return `${this.base}/sessions/${sessionId}/predictions/${imageId}${query}`;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return expectJson<T>(response);
  }
}
