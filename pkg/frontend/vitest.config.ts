import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // The integration test boots the Python service and generates a dataset.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
