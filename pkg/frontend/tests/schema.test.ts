import { describe, expect, it } from "vitest";

import { clampToEnvelope, parseServerMessage } from "../src/schema.js";

const telemetry = {
    type: "telemetry",
    tick: 42,
    channels: [{ p: 29.98, t: 30, q: 0.125, di: 0.5, dd: 0, v: 0, en: true }],
};

describe("parseServerMessage", () => {
    it("accepts well-formed telemetry", () => {
        const msg = parseServerMessage(JSON.stringify(telemetry));
        expect(msg).not.toBeNull();
        if (msg?.type === "telemetry") {
            expect(msg.tick).toBe(42);
            expect(msg.channels[0].p).toBeCloseTo(29.98);
        } else {
            throw new Error("wrong type");
        }
    });

    it("accepts hello with envelope", () => {
        const msg = parseServerMessage(JSON.stringify({
            type: "hello", channels: 10, envelope: [-50, 80], dt: 0.02,
            protocol_version: 1,
        }));
        expect(msg?.type).toBe("hello");
        if (msg?.type === "hello") expect(msg.envelope).toEqual([-50, 80]);
    });

    it("rejects malformed channel entries", () => {
        const bad = { ...telemetry, channels: [{ p: "x" }] };
        expect(parseServerMessage(JSON.stringify(bad))).toBeNull();
    });

    it("rejects non-JSON and unknown types", () => {
        expect(parseServerMessage("{nope")).toBeNull();
        expect(parseServerMessage(JSON.stringify({ type: "mystery" }))).toBeNull();
    });

    it("keeps error messages readable", () => {
        const msg = parseServerMessage(JSON.stringify({
            type: "error", req: "set_target", message: "TARGET_OUT_OF_RANGE",
        }));
        expect(msg).toEqual({
            type: "error", req: "set_target", message: "TARGET_OUT_OF_RANGE",
        });
    });
});

describe("clampToEnvelope", () => {
    it("clamps to both ends", () => {
        expect(clampToEnvelope(95, [-50, 80])).toBe(80);
        expect(clampToEnvelope(-60, [-50, 80])).toBe(-50);
        expect(clampToEnvelope(12.5, [-50, 80])).toBe(12.5);
    });
});
