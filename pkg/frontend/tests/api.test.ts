import { describe, expect, it } from "vitest";

import { Api, RequestSuperseded, ServiceError } from "../src/api.js";
import type { RetrieveBody } from "../src/types.js";
import { MockServer } from "./mockServer.js";

const BODY: RetrieveBody = {
  dataset: "mockset",
  query_id: "q000",
  alpha: 0.8,
  beta: 0.1,
  k: 5,
  caption_subset: null,
  exclude_reference: false,
};

describe("Api", () => {
  it("parses dataset and query listings", async () => {
    const server = new MockServer();
    const api = new Api("", server.fetch);
    const datasets = await api.datasets();
    expect(datasets).toHaveLength(1);
    expect(datasets[0]?.captions_per_item).toBe(3);
    const page = await api.queries("mockset", 4, 4);
    expect(page.queries.map((q) => q.query_id)).toEqual(["q004", "q005", "q006", "q007"]);
    expect(page.total).toBe(12);
  });

  it("turns error envelopes into ServiceError with the server's code", async () => {
    const server = new MockServer();
    const api = new Api("", server.fetch);
    const failure = await api.queries("nope", 0, 10).catch((err) => err);
    expect(failure).toBeInstanceOf(ServiceError);
    expect(failure.status).toBe(404);
    expect(failure.code).toBe("unknown_dataset");
    expect(failure.message).toContain("nope");
  });

  it("retrieve returns entries sorted by score", async () => {
    const server = new MockServer();
    const api = new Api("", server.fetch);
    const response = await api.retrieve(BODY);
    expect(response.entries).toHaveLength(5);
    const scores = response.entries.map((e) => e.score);
    expect([...scores].sort((a, b) => b - a)).toEqual(scores);
    expect(response.params.alpha).toBe(0.8);
  });

  it("latest-wins: an overlapping retrieve supersedes the first", async () => {
    const server = new MockServer();
    server.holdRetrieves = true;
    const api = new Api("", server.fetch);

    const first = api.retrieve(BODY);
    const second = api.retrieve({ ...BODY, alpha: 0 });
    server.holdRetrieves = false;
    server.releaseHeld();

    await expect(first).rejects.toBeInstanceOf(RequestSuperseded);
    const response = await second;
    expect(response.params.alpha).toBe(0);
    const retrieves = server.log.filter((r) => r.path === "/v1/retrieve");
    expect(retrieves).toHaveLength(2);
  });

  it("retrieve propagates server validation errors", async () => {
    const server = new MockServer();
    const api = new Api("", server.fetch);
    const failure = await api.retrieve({ ...BODY, alpha: 1.5 }).catch((err) => err);
    expect(failure).toBeInstanceOf(ServiceError);
    expect(failure.code).toBe("invalid_parameter");
  });

  it("heatmap request carries subset and exclusion options", async () => {
    const server = new MockServer();
    let seen = "";
    const api = new Api("", async (input, init) => {
      seen = String(input);
      return server.fetch(input, init);
    });
    const data = await api.heatmap("mockset", "R@10", {
      captionSubset: [1, 3],
      excludeReference: true,
    });
    expect(data.metric).toBe("R@10");
    expect(seen).toContain("caption_subset=1%2C3");
    expect(seen).toContain("exclude_reference=true");
  });
});
