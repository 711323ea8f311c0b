import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    // The integration suite trains a toy checkpoint and boots real
    // service processes, so the hooks need generous budgets.
    testTimeout: 60_000,
    hookTimeout: 180_000,
  },
});
