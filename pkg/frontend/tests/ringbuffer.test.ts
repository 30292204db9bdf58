import { describe, expect, it } from "vitest";

import { ChartData, SeriesBuffer } from "../src/ringbuffer.js";

describe("SeriesBuffer", () => {
    it("keeps only the time window", () => {
        const buffer = new SeriesBuffer(60);
        for (let t = 0; t <= 120; t += 0.5) buffer.push(t, Math.sin(t));
        const pts = buffer.points();
        expect(pts[0].timeS).toBeGreaterThanOrEqual(60);
        expect(pts.at(-1)!.timeS).toBe(120);
    });

    it("bounds the point count", () => {
        const buffer = new SeriesBuffer(60, 100);
        for (let i = 0; i < 1000; i++) buffer.push(100 + i * 0.001, i);
        expect(buffer.length).toBeLessThanOrEqual(100);
    });

    it("tracks the value range of the window", () => {
        const buffer = new SeriesBuffer(10);
        buffer.push(0, -3);
        buffer.push(1, 7);
        buffer.push(2, 1);
        expect(buffer.range()).toEqual([-3, 7]);
        buffer.push(12.5, 0);  // pushes t=0..2 out of the window
        expect(buffer.range()).toEqual([0, 0]);
    });

    it("holds a full 60 s of 25 Hz telemetry", () => {
        const buffer = new SeriesBuffer(60);
        for (let i = 0; i < 25 * 70; i++) buffer.push(i / 25, i);
        expect(buffer.length).toBeGreaterThanOrEqual(60 * 25);
    });
});

describe("ChartData", () => {
    it("records per-channel pressure, flow and target", () => {
        const data = new ChartData(2);
        data.record(0, 1.0, 30, 0.5, 31);
        data.record(1, 1.0, -10, -0.2, -9);
        expect(data.pressure[0].latest()!.value).toBe(30);
        expect(data.flow[1].latest()!.value).toBe(-0.2);
        expect(data.target[0].latest()!.value).toBe(31);
    });
});
