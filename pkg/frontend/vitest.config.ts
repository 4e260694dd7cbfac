import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // The integration test trains a real model over HTTP.
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
