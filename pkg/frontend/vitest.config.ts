import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    // page origin = the acceptance server, mirroring --ui-dir serving;
    // mock-server tests never touch the network so the origin is inert there
    environmentOptions: { happyDOM: { url: "http://127.0.0.1:8917" } },
    include: ["tests/**/*.test.ts"],
    testTimeout: 30000,
    hookTimeout: 60000,
    // the acceptance suite drives one live server; keep files sequential
    fileParallelism: false,
  },
});
