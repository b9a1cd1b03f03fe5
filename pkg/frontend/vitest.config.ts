import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    include: ["test/**/*.test.ts"],
    testTimeout: 30000,
    hookTimeout: 120000,
    // the live-service suite owns a single server process
    fileParallelism: false,
  },
});
