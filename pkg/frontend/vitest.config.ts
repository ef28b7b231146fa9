import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    testTimeout: 60000,
    hookTimeout: 30000,
    include: ["test/**/*.test.ts"],
  },
});
