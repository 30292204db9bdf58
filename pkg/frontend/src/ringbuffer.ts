// Time-series buffers for the scrolling charts: a fixed sliding window
// of (time, value) samples per series.

export interface Sample {
    timeS: number;
    value: number;
}

export class SeriesBuffer {
    private samples: Sample[] = [];

    constructor(readonly windowS: number = 60, readonly maxPoints: number = 6000) {}

    push(timeS: number, value: number): void {
        this.samples.push({ timeS, value });
        const cutoff = timeS - this.windowS;
        let drop = 0;
        while (drop < this.samples.length && this.samples[drop].timeS < cutoff) {
            drop++;
        }
        const excess = this.samples.length - drop - this.maxPoints;
        if (excess > 0) drop += excess;
        if (drop > 0) this.samples.splice(0, drop);
    }

    get length(): number {
        return this.samples.length;
    }

    points(): readonly Sample[] {
        return this.samples;
    }

    latest(): Sample | null {
        return this.samples.length ? this.samples[this.samples.length - 1] : null;
    }

    range(): [number, number] | null {
        if (!this.samples.length) return null;
        let lo = this.samples[0].value;
        let hi = lo;
        for (const s of this.samples) {
            if (s.value < lo) lo = s.value;
            if (s.value > hi) hi = s.value;
        }
        return [lo, hi];
    }

    clear(): void {
        this.samples = [];
    }
}

/** Pressure, flow and target series for every channel. */
export class ChartData {
    pressure: SeriesBuffer[] = [];
    flow: SeriesBuffer[] = [];
    target: SeriesBuffer[] = [];

    constructor(channelCount: number, windowS = 60) {
        for (let i = 0; i < channelCount; i++) {
            this.pressure.push(new SeriesBuffer(windowS));
            this.flow.push(new SeriesBuffer(windowS));
            this.target.push(new SeriesBuffer(windowS));
        }
    }

    record(channel: number, timeS: number, pressure: number, flow: number,
           target: number): void {
        this.pressure[channel].push(timeS, pressure);
        this.flow[channel].push(timeS, flow);
        this.target[channel].push(timeS, target);
    }
}
