/**
 * HTTP client for the recommendation service.
 *
 * At most one recommendation request is in flight; issuing a new one aborts
 * the previous so a fast typist never sees stale suggestions land on top of
 * fresh ones.
 */

import type { MetamodelDoc } from "./canonical.js";

export interface TargetRef {
  kind: "class" | "attribute" | "association";
  class_index: number;
  member_index?: number;
}

export type PendingSlot =
  | { kind: "class" }
  | { kind: "attribute"; owner: string; type?: string }
  | { kind: "association"; owner: string; target: string };

export interface RecommendRequest {
  metamodel: MetamodelDoc;
  target?: TargetRef;
  pending?: PendingSlot;
  k?: number;
  strategy?: "global" | "local";
}

export interface SuggestionItem {
  text: string;
  score: number;
}

export interface RecommendResponse {
  candidates: SuggestionItem[];
  context_size: number;
  model_info: { checkpoint: string; preset: string };
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

export class RecommendClient {
  private inflight: AbortController | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  /** POST /v1/recommend; aborts any still-running previous request. */
  async recommend(request: RecommendRequest): Promise<RecommendResponse> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/v1/recommend`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(request),
        signal: controller.signal,
      });
      const body = await resp.json();
      if (!resp.ok) {
        throw new ServiceError(resp.status, body.error ?? "error", body.detail ?? "");
      }
      return body as RecommendResponse;
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
      }
    }
  }

  async health(): Promise<{ status: string }> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/health`);
    return (await resp.json()) as { status: string };
  }

  async modelInfo(): Promise<Record<string, unknown>> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/model/info`);
    if (!resp.ok) {
      throw new ServiceError(resp.status, "model-not-loaded", "service still loading");
    }
    return (await resp.json()) as Record<string, unknown>;
  }
}
