// Message schema for the device bridge WebSocket (see docs/protocol.md in
// the host repo). Field names are a compatibility contract.

export interface ChannelTelemetry {
    p: number;   // pressure, kPa
    t: number;   // target, kPa
    q: number;   // net flow, L/min
    di: number;  // inflate duty fraction
    dd: number;  // deflate duty fraction
    v: 0 | 1;    // valve: 0 inflate path, 1 deflate path
    en: boolean; // channel enabled
}

export interface HelloMessage {
    type: "hello";
    channels: number;
    envelope: [number, number];
    dt: number;
    protocol_version: number;
}

export interface TelemetryMessage {
    type: "telemetry";
    tick: number;
    channels: ChannelTelemetry[];
}

export interface AckMessage {
    type: "ack";
    req: string;
}

export interface ErrorMessage {
    type: "error";
    req?: string;
    message: string;
}

export type ServerMessage = HelloMessage | TelemetryMessage | AckMessage | ErrorMessage;

export type CommandMessage =
    | { type: "set_target"; channel: number; kpa: number }
    | { type: "set_all"; targets: number[] }
    | { type: "enable"; channel: number }
    | { type: "disable"; channel: number }
    | { type: "inject_disturbance"; channel: number; flow_lpm: number; duration_s: number }
    | { type: "set_leak"; channel: number; coefficient: number; duration_s?: number };

function isFiniteNumber(x: unknown): x is number {
    return typeof x === "number" && Number.isFinite(x);
}

function isChannelEntry(x: unknown): x is ChannelTelemetry {
    if (typeof x !== "object" || x === null) return false;
    const c = x as Record<string, unknown>;
    return isFiniteNumber(c.p) && isFiniteNumber(c.t) && isFiniteNumber(c.q)
        && isFiniteNumber(c.di) && isFiniteNumber(c.dd)
        && (c.v === 0 || c.v === 1) && typeof c.en === "boolean";
}

/** Parse and validate one server message; null for anything malformed. */
export function parseServerMessage(raw: string): ServerMessage | null {
    let data: unknown;
    try {
        data = JSON.parse(raw);
    } catch {
        return null;
    }
    if (typeof data !== "object" || data === null) return null;
    const msg = data as Record<string, unknown>;
    switch (msg.type) {
        case "hello": {
            const env = msg.envelope;
            if (!isFiniteNumber(msg.channels) || !Array.isArray(env)
                || env.length !== 2 || !env.every(isFiniteNumber)
                || !isFiniteNumber(msg.dt)) return null;
            return {
                type: "hello",
                channels: msg.channels,
                envelope: [env[0], env[1]],
                dt: msg.dt,
                protocol_version: isFiniteNumber(msg.protocol_version)
                    ? msg.protocol_version : 0,
            };
        }
        case "telemetry": {
            if (!isFiniteNumber(msg.tick) || !Array.isArray(msg.channels)
                || !msg.channels.every(isChannelEntry)) return null;
            return {
                type: "telemetry",
                tick: msg.tick,
                channels: msg.channels as ChannelTelemetry[],
            };
        }
        case "ack":
            return { type: "ack", req: String(msg.req ?? "") };
        case "error":
            return {
                type: "error",
                req: msg.req === undefined ? undefined : String(msg.req),
                message: String(msg.message ?? "unknown error"),
            };
        default:
            return null;
    }
}

export function clampToEnvelope(kpa: number, envelope: [number, number]): number {
    return Math.min(envelope[1], Math.max(envelope[0], kpa));
}
