import type { QueriesPage, QueryInfo, ResultEntry, RetrieveResponse } from "./types.js";

/** Stable hue so an item's placeholder looks the same on every render. */
export function placeholderHue(itemId: string): number {
  let hash = 0;
  for (let i = 0; i < itemId.length; i++) {
    hash = (hash * 31 + itemId.charCodeAt(i)) | 0;
  }
  return ((hash % 360) + 360) % 360;
}

function thumbnail(
  doc: Document,
  itemId: string,
  imageUrl: string | null,
  className: string,
): HTMLElement {
  if (imageUrl) {
    const img = doc.createElement("img");
    img.className = className;
    img.src = imageUrl;
    img.alt = itemId;
    return img;
  }
  const box = doc.createElement("div");
  box.className = `${className} placeholder`;
  box.style.background = `hsl(${placeholderHue(itemId)} 45% 78%)`;
  box.textContent = itemId;
  return box;
}

/** Scores are printed with String(): the number parsed from the response
 * body round-trips exactly, so the page shows what the server sent. */
export function resultCard(doc: Document, entry: ResultEntry, rank: number): HTMLElement {
  const card = doc.createElement("div");
  card.className = entry.is_target ? "result-card is-target" : "result-card";
  card.dataset.itemId = entry.item_id;

  card.appendChild(thumbnail(doc, entry.item_id, entry.image_url, "result-thumb"));

  const title = doc.createElement("div");
  title.className = "result-title";
  title.textContent = `#${rank} ${entry.item_id}`;
  card.appendChild(title);

  const scores = doc.createElement("dl");
  scores.className = "result-scores";
  const rows: Array<[string, string, number]> = [
    ["score", "score", entry.score],
    ["img", "image-score", entry.image_score],
    ["cap", "caption-score", entry.caption_score],
  ];
  for (const [label, role, value] of rows) {
    const dt = doc.createElement("dt");
    dt.textContent = label;
    const dd = doc.createElement("dd");
    dd.dataset.role = role;
    dd.textContent = String(value);
    scores.appendChild(dt);
    scores.appendChild(dd);
  }
  card.appendChild(scores);
  return card;
}

export function renderResults(container: HTMLElement, response: RetrieveResponse): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  response.entries.forEach((entry, index) => {
    container.appendChild(resultCard(doc, entry, index + 1));
  });
}

export function describeParams(response: RetrieveResponse): string {
  const p = response.params;
  const subset = p.caption_subset ? `{${p.caption_subset.join(",")}}` : "all";
  const parts = [
    `query=${response.query_id ?? response.reference_id}`,
    `alpha=${String(p.alpha)}`,
    `beta=${String(p.beta)}`,
    `k=${String(p.k)}`,
    `captions=${subset}`,
  ];
  if (p.exclude_reference) parts.push("reference excluded");
  return parts.join("  ");
}

export function renderQueryList(
  container: HTMLElement,
  page: QueriesPage,
  selectedId: string | null,
  onSelect: (query: QueryInfo) => void,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  for (const query of page.queries) {
    const row = doc.createElement("button");
    row.type = "button";
    row.className = query.query_id === selectedId ? "query-row selected" : "query-row";
    row.dataset.queryId = query.query_id;

    row.appendChild(thumbnail(doc, query.reference_id, query.reference_image_url, "query-thumb"));

    const text = doc.createElement("div");
    text.className = "query-text";
    const idLine = doc.createElement("div");
    idLine.className = "query-id";
    idLine.textContent = query.category ? `${query.query_id} (${query.category})` : query.query_id;
    const modifier = doc.createElement("div");
    modifier.className = "query-modifier";
    modifier.textContent = query.modifier_text;
    text.appendChild(idLine);
    text.appendChild(modifier);
    row.appendChild(text);

    row.addEventListener("click", () => onSelect(query));
    container.appendChild(row);
  }
}
