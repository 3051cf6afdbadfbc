/** In-memory fake of the retrieval service, faithful to the JSON contracts:
 * same paths, same field names, same error envelope. Scores are synthetic
 * but deterministic, and the ordering responds to alpha/beta so interaction
 * tests can observe updates. */
import type {
  HeatmapResponse,
  QueryInfo,
  ResultEntry,
  RetrieveBody,
  RetrieveResponse,
} from "../src/types.js";

export interface LoggedRequest {
  method: string;
  path: string;
  search: string;
  body: RetrieveBody | null;
}

const NUM_ITEMS = 24;
const CAPTIONS_PER_ITEM = 3;

function itemId(index: number): string {
  return `item_${String(index).padStart(3, "0")}`;
}

export class MockServer {
  log: LoggedRequest[] = [];
  queries: QueryInfo[];
  failNextRetrieve: { status: number; code: string; message: string } | null = null;
  /** Pending resolvers when holdRetrieves is on, oldest first. */
  private held: Array<() => void> = [];
  holdRetrieves = false;

  constructor(readonly numQueries = 12) {
    this.queries = Array.from({ length: numQueries }, (_, qi) => ({
      query_id: `q${String(qi).padStart(3, "0")}`,
      reference_id: itemId(qi),
      target_id: itemId((qi + 5) % NUM_ITEMS),
      modifier_text: `modifier phrase ${qi}`,
      category: ["dress", "shirt", "toptee"][qi % 3] ?? null,
      subset_ids: null,
      reference_image_url: qi % 2 === 0 ? `http://img/${itemId(qi)}.jpg` : null,
    }));
  }

  releaseHeld(): void {
    const held = this.held;
    this.held = [];
    for (const release of held) release();
  }

  private imageScore(qi: number, item: number): number {
    // deterministic pseudo-affinities in (0, 1)
    return ((item * 13 + qi * 7) % 97) / 97;
  }

  private captionScore(qi: number, item: number): number {
    return ((item * 29 + qi * 11) % 89) / 89;
  }

  private retrieveResponse(body: RetrieveBody): RetrieveResponse {
    const query = this.queries.find((q) => q.query_id === body.query_id);
    if (!query) throw new HttpError(404, "unknown_query", `no query ${body.query_id}`);
    const qi = this.queries.indexOf(query);
    const scored = Array.from({ length: NUM_ITEMS }, (_, item) => {
      const img = this.imageScore(qi, item);
      const cap = this.captionScore(qi, item);
      const blended =
        (1 - body.beta) * ((1 - body.alpha) * img + body.alpha * cap) +
        body.beta * cap;
      return { item, img, cap, blended };
    }).filter(
      (row) => !(body.exclude_reference && itemId(row.item) === query.reference_id),
    );
    scored.sort((a, b) => b.blended - a.blended || a.item - b.item);
    const entries: ResultEntry[] = scored.slice(0, body.k).map((row) => ({
      item_id: itemId(row.item),
      score: row.blended,
      image_score: row.img,
      caption_score: row.cap,
      is_target: itemId(row.item) === query.target_id,
      image_url: row.item % 3 === 0 ? `http://img/${itemId(row.item)}.jpg` : null,
      captions: null,
    }));
    return {
      dataset: body.dataset,
      query_id: query.query_id,
      reference_id: query.reference_id,
      modifier_text: query.modifier_text,
      target_item_id: query.target_id,
      params: {
        alpha: body.alpha,
        beta: body.beta,
        k: body.k,
        caption_subset: body.caption_subset,
        exclude_ids: [],
        exclude_reference: body.exclude_reference,
      },
      entries,
      timing_ms: 1.25,
    };
  }

  private heatmapResponse(params: URLSearchParams): HeatmapResponse {
    const metric = params.get("metric") ?? "R@10";
    const alphas = [0.2, 0.5, 0.8];
    const betas = [0.1, 0.5, 0.9];
    const shift = metric === "R@50" ? 0.3 : 0;
    const values = betas.map((beta) =>
      alphas.map((alpha) =>
        Math.round(100 * (shift + alpha * (1 - beta) * 0.9)) / 100,
      ),
    );
    return { dataset: params.get("dataset") ?? "", metric, alphas, betas, values, cached: false };
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://mock");
    const method = init?.method ?? "GET";
    const rawBody = typeof init?.body === "string" ? init.body : null;
    const body = rawBody ? (JSON.parse(rawBody) as RetrieveBody) : null;
    this.log.push({ method, path: url.pathname, search: url.search, body });

    if (this.holdRetrieves && url.pathname === "/v1/retrieve") {
      await new Promise<void>((resolve) => this.held.push(resolve));
    }
    if (init?.signal?.aborted) {
      throw new DOMException("aborted", "AbortError");
    }

    try {
      if (url.pathname === "/v1/datasets") {
        return json(200, {
          datasets: [
            {
              dataset: "mockset",
              split: "val",
              embedder_id: "mock-16d",
              num_items: NUM_ITEMS,
              captions_per_item: CAPTIONS_PER_ITEM,
              dim: 16,
              num_queries: this.queries.length,
            },
          ],
        });
      }
      if (url.pathname === "/v1/queries") {
        const dataset = url.searchParams.get("dataset");
        if (dataset !== "mockset") {
          throw new HttpError(404, "unknown_dataset", `no dataset '${dataset}'`);
        }
        const offset = Number(url.searchParams.get("offset") ?? "0");
        const limit = Number(url.searchParams.get("limit") ?? "50");
        return json(200, {
          dataset,
          total: this.queries.length,
          offset,
          limit,
          queries: this.queries.slice(offset, offset + limit),
        });
      }
      if (url.pathname === "/v1/retrieve" && method === "POST") {
        if (this.failNextRetrieve) {
          const failure = this.failNextRetrieve;
          this.failNextRetrieve = null;
          throw new HttpError(failure.status, failure.code, failure.message);
        }
        if (!body) throw new HttpError(422, "invalid_request", "no body");
        if (body.alpha < 0 || body.alpha > 1 || body.beta < 0 || body.beta > 1) {
          throw new HttpError(400, "invalid_parameter", "alpha/beta outside [0, 1]");
        }
        return json(200, this.retrieveResponse(body));
      }
      if (url.pathname === "/v1/heatmap") {
        return json(200, this.heatmapResponse(url.searchParams));
      }
      throw new HttpError(404, "not_found", `no route ${url.pathname}`);
    } catch (err) {
      if (err instanceof HttpError) {
        return json(err.status, { error: { code: err.code, message: err.message } });
      }
      throw err;
    }
  };
}

class HttpError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

function json(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
