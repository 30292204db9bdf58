// Min-interval rate limiter for the live slider mode.

export class RateLimiter {
    private lastMs = -Infinity;
    private readonly intervalMs: number;

    constructor(maxPerSecond: number,
                private readonly now: () => number = () => Date.now()) {
        if (maxPerSecond <= 0) throw new Error("maxPerSecond must be > 0");
        this.intervalMs = 1000 / maxPerSecond;
    }

    allow(): boolean {
        const t = this.now();
        if (t - this.lastMs >= this.intervalMs) {
            this.lastMs = t;
            return true;
        }
        return false;
    }
}
