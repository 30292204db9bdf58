// Console state: one model per channel, fed exclusively from received
// snapshots (the UI never extrapolates).

import { clampToEnvelope } from "./schema.js";
import type { HelloMessage, TelemetryMessage } from "./schema.js";

export interface UiChannel {
    id: number;
    pressure: number;
    target: number;
    flow: number;
    inflateDuty: number;
    deflateDuty: number;
    valve: 0 | 1;
    enabled: boolean;
    selected: boolean;            // included in the charts
    pendingSetpoint: number | null; // slider value not yet committed
}

function emptyChannel(id: number): UiChannel {
    return {
        id,
        pressure: 0, target: 0, flow: 0,
        inflateDuty: 0, deflateDuty: 0,
        valve: 0, enabled: true,
        selected: id < 2,
        pendingSetpoint: null,
    };
}

export class ConsoleStore {
    channels: UiChannel[] = [];
    envelope: [number, number] = [-50, 80];
    dt = 0.02;
    tick = 0;
    lastError: string | null = null;
    snapshotCount = 0;

    configure(hello: HelloMessage): void {
        this.envelope = hello.envelope;
        this.dt = hello.dt;
        if (this.channels.length !== hello.channels) {
            this.channels = Array.from({ length: hello.channels },
                (_, i) => emptyChannel(i));
        }
    }

    applySnapshot(msg: TelemetryMessage): void {
        if (msg.tick <= this.tick && this.snapshotCount > 0) return;
        this.tick = msg.tick;
        this.snapshotCount += 1;
        const n = Math.min(this.channels.length, msg.channels.length);
        for (let i = 0; i < n; i++) {
            const model = this.channels[i];
            const entry = msg.channels[i];
            model.pressure = entry.p;
            model.target = entry.t;
            model.flow = entry.q;
            model.inflateDuty = entry.di;
            model.deflateDuty = entry.dd;
            model.valve = entry.v;
            model.enabled = entry.en;
        }
    }

    timeS(): number {
        return this.tick * this.dt;
    }

    /** Stage a slider value; clamped to the device envelope. */
    setPending(id: number, kpa: number): number {
        const clamped = clampToEnvelope(kpa, this.envelope);
        this.channels[id].pendingSetpoint = clamped;
        return clamped;
    }

    takePending(id: number): number | null {
        const value = this.channels[id].pendingSetpoint;
        this.channels[id].pendingSetpoint = null;
        return value;
    }

    toggleSelected(id: number): boolean {
        const model = this.channels[id];
        model.selected = !model.selected;
        return model.selected;
    }

    reportError(message: string): void {
        this.lastError = message;
    }

    clearError(): void {
        this.lastError = null;
    }
}
