import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["test/**/*.test.ts"],
    // The suite boots the real annotation service as a subprocess.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
