// Bridge connection with automatic reconnect (exponential backoff) and a
// visible connection state. The WebSocket constructor is injectable so
// the logic is testable without a browser.

import { parseServerMessage } from "./schema.js";
import type { CommandMessage, ServerMessage } from "./schema.js";

export type ConnectionState = "connecting" | "connected" | "reconnecting" | "closed";

export interface WebSocketLike {
    onopen: (() => void) | null;
    onclose: (() => void) | null;
    onerror: (() => void) | null;
    onmessage: ((event: { data: string }) => void) | null;
    send(data: string): void;
    close(): void;
}

export type SocketFactory = (url: string) => WebSocketLike;
export type Scheduler = (fn: () => void, delayMs: number) => unknown;

export interface ConnectionHandlers {
    onState: (state: ConnectionState, detail?: string) => void;
    onMessage: (message: ServerMessage) => void;
}

const BASE_DELAY_MS = 500;
const MAX_DELAY_MS = 10_000;

export class BridgeConnection {
    private socket: WebSocketLike | null = null;
    private closed = false;
    attempts = 0;

    constructor(
        private readonly url: string,
        private readonly handlers: ConnectionHandlers,
        private readonly factory: SocketFactory =
            (u) => new WebSocket(u) as unknown as WebSocketLike,
        private readonly schedule: Scheduler = (fn, ms) => setTimeout(fn, ms),
    ) {}

    connect(): void {
        if (this.closed) return;
        this.handlers.onState(this.attempts === 0 ? "connecting" : "reconnecting",
            this.attempts ? `attempt ${this.attempts + 1}` : undefined);
        const socket = this.factory(this.url);
        this.socket = socket;
        socket.onopen = () => {
            this.attempts = 0;
            this.handlers.onState("connected");
        };
        socket.onmessage = (event) => {
            const message = parseServerMessage(event.data);
            if (message !== null) this.handlers.onMessage(message);
        };
        socket.onerror = () => { /* onclose follows */ };
        socket.onclose = () => {
            this.socket = null;
            if (this.closed) {
                this.handlers.onState("closed");
                return;
            }
            const delay = this.nextDelayMs();
            this.attempts += 1;
            this.handlers.onState("reconnecting",
                `retrying in ${(delay / 1000).toFixed(1)} s`);
            this.schedule(() => this.connect(), delay);
        };
    }

    nextDelayMs(): number {
        return Math.min(BASE_DELAY_MS * 2 ** this.attempts, MAX_DELAY_MS);
    }

    /** Send a command; false when the socket is not open. */
    send(command: CommandMessage): boolean {
        if (this.socket === null) return false;
        this.socket.send(JSON.stringify(command));
        return true;
    }

    close(): void {
        this.closed = true;
        this.socket?.close();
    }
}
