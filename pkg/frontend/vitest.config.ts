import { defineConfig } from "vitest/config";

// Unit tests run under happy-dom; the round-trip suite opts into jsdom
// per-file so it can use node's own fetch against the live service.
export default defineConfig({
  test: {
    environment: "happy-dom",
    globalSetup: ["tests/setup/server.ts"],
    testTimeout: 30_000,
    hookTimeout: 180_000,
  },
});
