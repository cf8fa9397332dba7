import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 60000,
    hookTimeout: 180000,
    // e2e drives one shared live service; keep files sequential
    fileParallelism: false,
  },
});
