import type { QueryInfo, RetrieveResponse } from "./types.js";

/** Everything the explorer remembers between interactions. Client-side only;
 * the server is never mutated. */
export interface SessionState {
  dataset: string | null;
  captionsPerItem: number;
  query: QueryInfo | null;
  alpha: number;
  beta: number;
  k: number;
  /** 1-based caption positions; null means all captions. */
  captionSubset: number[] | null;
  excludeReference: boolean;
  lastResponse: RetrieveResponse | null;
  heatmapMetric: string;
  heatmapCursor: { alpha: number; beta: number } | null;
  queryOffset: number;
}

export const QUERY_PAGE_SIZE = 8;

export function initialState(): SessionState {
  return {
    dataset: null,
    captionsPerItem: 0,
    query: null,
    alpha: 0.8,
    beta: 0.1,
    k: 10,
    captionSubset: null,
    excludeReference: false,
    lastResponse: null,
    heatmapMetric: "R@10",
    heatmapCursor: null,
    queryOffset: 0,
  };
}

export function clamp01(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(1, Math.max(0, value));
}

export function clampK(value: number): number {
  if (!Number.isFinite(value)) return 1;
  return Math.max(1, Math.round(value));
}

/** Checkbox states (1-based positions) -> subset for the request body.
 * All boxes checked means the default full set, sent as null. */
export function subsetFromChecks(checked: boolean[]): number[] | null {
  const positions = checked
    .map((on, index) => (on ? index + 1 : 0))
    .filter((p) => p > 0);
  if (positions.length === checked.length) return null;
  return positions;
}

type Listener = (state: SessionState) => void;

export class Store {
  private listeners = new Set<Listener>();

  constructor(public state: SessionState = initialState()) {}

  update(partial: Partial<SessionState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }
}
