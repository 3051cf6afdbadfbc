/** JSON shapes of the retrieval service. Mirrors the server; never recomputed here. */

export interface DatasetInfo {
  dataset: string;
  split: string;
  embedder_id: string;
  num_items: number;
  captions_per_item: number;
  dim: number;
  num_queries: number;
}

export interface QueryInfo {
  query_id: string;
  reference_id: string;
  target_id: string | null;
  modifier_text: string;
  category: string | null;
  subset_ids: string[] | null;
  reference_image_url: string | null;
}

export interface QueriesPage {
  dataset: string;
  total: number;
  offset: number;
  limit: number;
  queries: QueryInfo[];
}

export interface RetrieveBody {
  dataset: string;
  query_id: string;
  alpha: number;
  beta: number;
  k: number;
  caption_subset: number[] | null;
  exclude_reference: boolean;
}

export interface ResultEntry {
  item_id: string;
  score: number;
  image_score: number;
  caption_score: number;
  is_target: boolean | null;
  image_url: string | null;
  captions: string[] | null;
}

export interface RetrieveResponse {
  dataset: string;
  query_id: string | null;
  reference_id: string;
  modifier_text: string | null;
  target_item_id: string | null;
  params: {
    alpha: number;
    beta: number;
    k: number;
    caption_subset: number[] | null;
    exclude_ids: string[];
    exclude_reference: boolean;
  };
  entries: ResultEntry[];
  timing_ms: number;
}

export interface HeatmapResponse {
  dataset: string;
  metric: string;
  alphas: number[];
  betas: number[];
  values: number[][];
  cached: boolean;
}

export interface ErrorEnvelope {
  error: { code: string; message: string };
}
