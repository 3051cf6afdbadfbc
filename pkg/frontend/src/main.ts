import { Api, RequestSuperseded, ServiceError } from "./api.js";
import { debounce } from "./debounce.js";
import {
  cellColor,
  cellTextColor,
  formatCell,
  heatmapCells,
  valueRange,
} from "./heatmap.js";
import { describeParams, renderQueryList, renderResults } from "./render.js";
import {
  QUERY_PAGE_SIZE,
  Store,
  clamp01,
  clampK,
  subsetFromChecks,
} from "./state.js";
import type { HeatmapResponse, QueryInfo, RetrieveResponse } from "./types.js";

export const METRICS = ["R@1", "R@5", "R@10", "R@50"] as const;
export const SLIDER_DEBOUNCE_MS = 150;

const TEMPLATE = `
<header class="topbar">
  <h1>cirfuse explorer</h1>
  <label>dataset <select id="dataset-select"></select></label>
  <span id="pending" hidden>working…</span>
</header>
<div id="error-banner" class="error-banner" hidden></div>
<div class="columns">
  <aside class="query-pane">
    <h2>Queries</h2>
    <div id="query-list"></div>
    <div class="pager">
      <button id="query-prev" type="button">&laquo; prev</button>
      <span id="query-page"></span>
      <button id="query-next" type="button">next &raquo;</button>
    </div>
  </aside>
  <main class="result-pane">
    <section class="controls">
      <label class="slider-row">&alpha;
        <input id="alpha-slider" type="range" min="0" max="1" step="0.01" value="0.8">
        <output id="alpha-value">0.8</output>
      </label>
      <label class="slider-row">&beta;
        <input id="beta-slider" type="range" min="0" max="1" step="0.01" value="0.1">
        <output id="beta-value">0.1</output>
      </label>
      <label>k <input id="k-input" type="number" min="1" step="1" value="10"></label>
      <span class="subset-box">captions <span id="caption-subset"></span></span>
      <label><input id="exclude-reference" type="checkbox"> exclude reference</label>
    </section>
    <div id="results-meta" class="results-meta"></div>
    <div id="results-grid" class="results-grid"></div>
  </main>
  <aside class="heatmap-pane">
    <h2>Grid search</h2>
    <label>metric <select id="metric-select"></select></label>
    <span id="heatmap-status"></span>
    <div id="heatmap"></div>
  </aside>
</div>
`;

export interface App {
  store: Store;
  api: Api;
  root: HTMLElement;
  retrieveNow(): Promise<void>;
  /** Resolves once no retrieve is pending or debounced. */
  idle(): Promise<void>;
}

export async function initApp(root: HTMLElement, api: Api): Promise<App> {
  root.innerHTML = TEMPLATE;
  const doc = root.ownerDocument;
  const pick = <T extends HTMLElement>(selector: string): T => {
    const el = root.querySelector<T>(selector);
    if (!el) throw new Error(`missing element ${selector}`);
    return el;
  };

  const datasetSelect = pick<HTMLSelectElement>("#dataset-select");
  const errorBanner = pick<HTMLDivElement>("#error-banner");
  const pending = pick<HTMLSpanElement>("#pending");
  const queryList = pick<HTMLDivElement>("#query-list");
  const queryPrev = pick<HTMLButtonElement>("#query-prev");
  const queryNext = pick<HTMLButtonElement>("#query-next");
  const queryPage = pick<HTMLSpanElement>("#query-page");
  const alphaSlider = pick<HTMLInputElement>("#alpha-slider");
  const alphaValue = pick<HTMLOutputElement>("#alpha-value");
  const betaSlider = pick<HTMLInputElement>("#beta-slider");
  const betaValue = pick<HTMLOutputElement>("#beta-value");
  const kInput = pick<HTMLInputElement>("#k-input");
  const subsetBox = pick<HTMLSpanElement>("#caption-subset");
  const excludeRef = pick<HTMLInputElement>("#exclude-reference");
  const resultsMeta = pick<HTMLDivElement>("#results-meta");
  const resultsGrid = pick<HTMLDivElement>("#results-grid");
  const metricSelect = pick<HTMLSelectElement>("#metric-select");
  const heatmapStatus = pick<HTMLSpanElement>("#heatmap-status");
  const heatmapBox = pick<HTMLDivElement>("#heatmap");

  const store = new Store();
  let busy = 0;
  let debouncePending = false;
  let currentPage: Parameters<typeof renderQueryList>[1] | null = null;

  const showError = (message: string) => {
    errorBanner.textContent = message;
    errorBanner.hidden = false;
  };
  const clearError = () => {
    errorBanner.hidden = true;
    errorBanner.textContent = "";
  };

  function renderResponse(response: RetrieveResponse): void {
    store.update({ lastResponse: response });
    resultsMeta.textContent = describeParams(response);
    renderResults(resultsGrid, response);
  }

  async function retrieveNow(): Promise<void> {
    const { dataset, query } = store.state;
    if (!dataset || !query) return;
    clearError();
    busy += 1;
    pending.hidden = false;
    try {
      const response = await api.retrieve({
        dataset,
        query_id: query.query_id,
        alpha: store.state.alpha,
        beta: store.state.beta,
        k: store.state.k,
        caption_subset: store.state.captionSubset,
        exclude_reference: store.state.excludeReference,
      });
      renderResponse(response);
    } catch (err) {
      if (err instanceof RequestSuperseded) return;
      showError(err instanceof ServiceError ? `${err.code}: ${err.message}` : String(err));
    } finally {
      busy -= 1;
      if (busy === 0) pending.hidden = true;
    }
  }

  const debouncedRetrieve = debounce(() => {
    debouncePending = false;
    void retrieveNow();
  }, SLIDER_DEBOUNCE_MS);
  function queueRetrieve(): void {
    debouncePending = true;
    debouncedRetrieve();
  }

  function renderHeatmap(data: HeatmapResponse): void {
    const { min, max } = valueRange(data);
    const table = doc.createElement("table");
    table.id = "heatmap-table";
    const head = doc.createElement("tr");
    const corner = doc.createElement("th");
    corner.textContent = "β\\α";
    head.appendChild(corner);
    for (const alpha of data.alphas) {
      const th = doc.createElement("th");
      th.textContent = String(alpha);
      head.appendChild(th);
    }
    table.appendChild(head);

    const byRow = new Map<number, HTMLTableRowElement>();
    data.betas.forEach((beta, rowIndex) => {
      const tr = doc.createElement("tr");
      const th = doc.createElement("th");
      th.textContent = String(beta);
      tr.appendChild(th);
      byRow.set(rowIndex, tr);
      table.appendChild(tr);
    });
    for (const cell of heatmapCells(data)) {
      const td = doc.createElement("td");
      td.className = "heatmap-cell";
      td.dataset.alpha = String(cell.alpha);
      td.dataset.beta = String(cell.beta);
      td.dataset.value = formatCell(cell.value);
      td.title = formatCell(cell.value);
      td.textContent = formatCell(cell.value);
      td.style.background = cellColor(cell.value, min, max);
      td.style.color = cellTextColor(cell.value, min, max);
      const cursor = store.state.heatmapCursor;
      if (cursor && cursor.alpha === cell.alpha && cursor.beta === cell.beta) {
        td.classList.add("cursor");
      }
      td.addEventListener("click", () => applyPoint(cell.alpha, cell.beta));
      byRow.get(cell.row)?.appendChild(td);
    }
    heatmapBox.textContent = "";
    heatmapBox.appendChild(table);
    heatmapStatus.textContent = `${data.metric} (${data.cached ? "cached" : "computed"})`;
  }

  async function loadHeatmap(): Promise<void> {
    const { dataset } = store.state;
    if (!dataset) return;
    heatmapStatus.textContent = "computing…";
    try {
      const data = await api.heatmap(dataset, store.state.heatmapMetric, {
        captionSubset: store.state.captionSubset,
        excludeReference: store.state.excludeReference,
      });
      renderHeatmap(data);
    } catch (err) {
      heatmapStatus.textContent = "unavailable";
      showError(err instanceof ServiceError ? `${err.code}: ${err.message}` : String(err));
    }
  }

  function setPoint(alpha: number, beta: number): void {
    alphaSlider.value = String(alpha);
    alphaValue.textContent = String(alpha);
    betaSlider.value = String(beta);
    betaValue.textContent = String(beta);
    store.update({ alpha, beta });
  }

  function applyPoint(alpha: number, beta: number): void {
    setPoint(alpha, beta);
    store.update({ heatmapCursor: { alpha, beta } });
    for (const td of heatmapBox.querySelectorAll<HTMLTableCellElement>(".heatmap-cell")) {
      td.classList.toggle(
        "cursor",
        Number(td.dataset.alpha) === alpha && Number(td.dataset.beta) === beta,
      );
    }
    void retrieveNow();
  }

  function selectQuery(query: QueryInfo): void {
    store.update({ query });
    for (const row of queryList.querySelectorAll<HTMLButtonElement>(".query-row")) {
      row.classList.toggle("selected", row.dataset.queryId === query.query_id);
    }
    void retrieveNow();
  }

  async function loadQueries(offset: number): Promise<void> {
    const { dataset } = store.state;
    if (!dataset) return;
    const page = await api.queries(dataset, offset, QUERY_PAGE_SIZE);
    currentPage = page;
    store.update({ queryOffset: page.offset });
    renderQueryList(queryList, page, store.state.query?.query_id ?? null, selectQuery);
    const last = Math.min(page.offset + page.queries.length, page.total);
    queryPage.textContent = page.total ? `${page.offset + 1}–${last} of ${page.total}` : "none";
    queryPrev.disabled = page.offset === 0;
    queryNext.disabled = page.offset + page.queries.length >= page.total;
  }

  function buildSubsetChecks(captionsPerItem: number): void {
    subsetBox.textContent = "";
    for (let position = 1; position <= captionsPerItem; position++) {
      const label = doc.createElement("label");
      label.className = "subset-check";
      const box = doc.createElement("input");
      box.type = "checkbox";
      box.checked = true;
      box.dataset.position = String(position);
      box.addEventListener("change", () => {
        const boxes = [...subsetBox.querySelectorAll<HTMLInputElement>("input")];
        const subset = subsetFromChecks(boxes.map((b) => b.checked));
        if (subset !== null && subset.length === 0) {
          box.checked = true; // an empty subset is not a valid request
          return;
        }
        store.update({ captionSubset: subset });
        void retrieveNow();
        void loadHeatmap();
      });
      label.appendChild(box);
      label.appendChild(doc.createTextNode(String(position)));
      subsetBox.appendChild(label);
    }
  }

  async function selectDataset(name: string): Promise<void> {
    const info = datasets.find((d) => d.dataset === name);
    if (!info) return;
    store.update({
      dataset: name,
      captionsPerItem: info.captions_per_item,
      query: null,
      captionSubset: null,
      lastResponse: null,
      heatmapCursor: null,
    });
    buildSubsetChecks(info.captions_per_item);
    await loadQueries(0);
    if (currentPage && currentPage.queries.length > 0) {
      selectQuery(currentPage.queries[0] as QueryInfo);
    }
    void loadHeatmap();
  }

  // controls
  alphaSlider.addEventListener("input", () => {
    const alpha = clamp01(Number(alphaSlider.value));
    alphaValue.textContent = String(alpha);
    store.update({ alpha });
    queueRetrieve();
  });
  betaSlider.addEventListener("input", () => {
    const beta = clamp01(Number(betaSlider.value));
    betaValue.textContent = String(beta);
    store.update({ beta });
    queueRetrieve();
  });
  kInput.addEventListener("change", () => {
    const k = clampK(Number(kInput.value));
    kInput.value = String(k);
    store.update({ k });
    void retrieveNow();
  });
  excludeRef.addEventListener("change", () => {
    store.update({ excludeReference: excludeRef.checked });
    void retrieveNow();
    void loadHeatmap();
  });
  metricSelect.addEventListener("change", () => {
    store.update({ heatmapMetric: metricSelect.value });
    void loadHeatmap();
  });
  queryPrev.addEventListener("click", () => {
    void loadQueries(Math.max(0, store.state.queryOffset - QUERY_PAGE_SIZE));
  });
  queryNext.addEventListener("click", () => {
    void loadQueries(store.state.queryOffset + QUERY_PAGE_SIZE);
  });

  for (const metric of METRICS) {
    const option = doc.createElement("option");
    option.value = metric;
    option.textContent = metric;
    metricSelect.appendChild(option);
  }
  metricSelect.value = store.state.heatmapMetric;

  // boot: datasets, first dataset, first query
  let datasets: Awaited<ReturnType<Api["datasets"]>> = [];
  try {
    datasets = await api.datasets();
  } catch (err) {
    showError(
      err instanceof ServiceError
        ? `${err.code}: ${err.message}`
        : `service unreachable: ${String(err)}`,
    );
  }
  for (const info of datasets) {
    const option = doc.createElement("option");
    option.value = info.dataset;
    option.textContent = `${info.dataset} (${info.split}, ${info.num_items} items)`;
    datasetSelect.appendChild(option);
  }
  datasetSelect.addEventListener("change", () => {
    void selectDataset(datasetSelect.value);
  });
  if (datasets.length > 0) {
    const first = datasets[0];
    if (first) {
      datasetSelect.value = first.dataset;
      await selectDataset(first.dataset);
    }
  }

  async function idle(): Promise<void> {
    for (;;) {
      if (!debouncePending && busy === 0) return;
      await new Promise((resolve) => setTimeout(resolve, 10));
    }
  }

  return { store, api, root, retrieveNow, idle };
}

declare global {
  interface Window {
    cirfuseApp?: App;
  }
}

if (typeof document !== "undefined") {
  const bootRoot = document.getElementById("app");
  if (bootRoot?.hasAttribute("data-autoboot")) {
    void initApp(bootRoot, new Api("")).then((app) => {
      window.cirfuseApp = app;
    });
  }
}
