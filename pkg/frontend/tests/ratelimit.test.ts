import { describe, expect, it } from "vitest";

import { RateLimiter } from "../src/ratelimit.js";

describe("RateLimiter", () => {
    it("allows at most the configured rate", () => {
        let clock = 0;
        const limiter = new RateLimiter(10, () => clock);
        let allowed = 0;
        for (let i = 0; i < 600; i++) {  // one simulated second, 600 events
            clock = i * (1000 / 600);
            if (limiter.allow()) allowed++;
        }
        expect(allowed).toBeLessThanOrEqual(10);
        expect(allowed).toBeGreaterThanOrEqual(9);
    });

    it("allows again after the interval", () => {
        let clock = 0;
        const limiter = new RateLimiter(10, () => clock);
        expect(limiter.allow()).toBe(true);
        clock = 50;
        expect(limiter.allow()).toBe(false);
        clock = 100;
        expect(limiter.allow()).toBe(true);
    });

    it("rejects a non-positive rate", () => {
        expect(() => new RateLimiter(0)).toThrow();
    });
});
