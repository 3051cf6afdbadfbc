import type {
  DatasetInfo,
  HeatmapResponse,
  QueriesPage,
  RetrieveBody,
  RetrieveResponse,
} from "./types.js";

/** Server-reported failure, carrying the envelope's machine-readable code. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

/** A retrieve that lost to a newer one. Callers drop it silently. */
export class RequestSuperseded extends Error {
  constructor() {
    super("superseded by a newer request");
    this.name = "RequestSuperseded";
  }
}

type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

async function toError(response: Response): Promise<ServiceError> {
  let code = "http_error";
  let message = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as { error?: { code?: string; message?: string } };
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ServiceError(response.status, code, message);
}

export class Api {
  private inflight: AbortController | null = null;

  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: FetchFn = (input, init) => globalThis.fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) throw await toError(response);
    return (await response.json()) as T;
  }

  async datasets(): Promise<DatasetInfo[]> {
    const body = await this.getJson<{ datasets: DatasetInfo[] }>("/v1/datasets");
    return body.datasets;
  }

  async queries(dataset: string, offset: number, limit: number): Promise<QueriesPage> {
    const params = new URLSearchParams({
      dataset,
      offset: String(offset),
      limit: String(limit),
    });
    return this.getJson<QueriesPage>(`/v1/queries?${params}`);
  }

  async heatmap(
    dataset: string,
    metric: string,
    options: {
      alphas?: number[];
      betas?: number[];
      captionSubset?: number[] | null;
      excludeReference?: boolean;
    } = {},
  ): Promise<HeatmapResponse> {
    const params = new URLSearchParams({ dataset, metric });
    if (options.alphas) params.set("alphas", options.alphas.join(","));
    if (options.betas) params.set("betas", options.betas.join(","));
    if (options.captionSubset && options.captionSubset.length > 0) {
      params.set("caption_subset", options.captionSubset.join(","));
    }
    if (options.excludeReference) params.set("exclude_reference", "true");
    return this.getJson<HeatmapResponse>(`/v1/heatmap?${params}`);
  }

  /**
   * Latest-wins: issuing a new retrieve aborts the one in flight, which
   * rejects with RequestSuperseded. At most one request is ever pending.
   */
  async retrieve(body: RetrieveBody): Promise<RetrieveResponse> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + "/v1/retrieve", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
        signal: controller.signal,
      });
    } catch (err) {
      if (controller.signal.aborted) throw new RequestSuperseded();
      throw err;
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
    if (controller.signal.aborted) throw new RequestSuperseded();
    if (!response.ok) throw await toError(response);
    return (await response.json()) as RetrieveResponse;
  }
}
