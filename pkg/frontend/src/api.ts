/** Thin typed client for the documented endpoints; nothing else. */

import type { EvalMetrics, LabelValue, QuerySummary, RerankResponse, UiImage } from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function toApiError(response: Response): Promise<ApiError> {
  let code = "unknown";
  let message = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as { error?: string; code?: string };
    if (body.code) code = body.code;
    if (body.error) message = body.error;
  } catch {
    /* non-JSON error body; keep defaults */
  }
  return new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: typeof fetch = (...args) => globalThis.fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      throw await toApiError(response);
    }
    return response;
  }

  async queries(): Promise<QuerySummary[]> {
    const response = await this.request("/api/queries");
    return (await response.json()) as QuerySummary[];
  }

  async images(
    queryId: string,
    order: "text" | "reranked",
    offset = 0,
    limit = 100,
  ): Promise<UiImage[]> {
    const query = `order=${order}&offset=${offset}&limit=${limit}`;
    const response = await this.request(
      `/api/queries/${encodeURIComponent(queryId)}/images?${query}`,
    );
    return (await response.json()) as UiImage[];
  }

  /** Every page of a listing, following offset pagination to the end. */
  async allImages(queryId: string, order: "text" | "reranked", pageSize = 100): Promise<UiImage[]> {
    const all: UiImage[] = [];
    for (let offset = 0; ; offset += pageSize) {
      const page = await this.images(queryId, order, offset, pageSize);
      all.push(...page);
      if (page.length < pageSize) return all;
    }
  }

  async postLabel(imageId: string, queryId: string, label: LabelValue): Promise<void> {
    await this.request("/api/labels", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_id: imageId, query_id: queryId, label }),
    });
  }

  async rerank(queryId: string): Promise<RerankResponse> {
    const response = await this.request(
      `/api/queries/${encodeURIComponent(queryId)}/rerank`,
      { method: "POST" },
    );
    return (await response.json()) as RerankResponse;
  }

  async evalQuery(queryId: string): Promise<EvalMetrics> {
    const response = await this.request(`/api/queries/${encodeURIComponent(queryId)}/eval`);
    return (await response.json()) as EvalMetrics;
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}/content`;
  }
}
