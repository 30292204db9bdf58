import { describe, expect, it } from "vitest";

import type { ServerMessage } from "../src/schema.js";
import { BridgeConnection } from "../src/socket.js";
import type { ConnectionState, WebSocketLike } from "../src/socket.js";

class FakeSocket implements WebSocketLike {
    onopen: (() => void) | null = null;
    onclose: (() => void) | null = null;
    onerror: (() => void) | null = null;
    onmessage: ((event: { data: string }) => void) | null = null;
    sent: string[] = [];
    send(data: string): void { this.sent.push(data); }
    close(): void { this.onclose?.(); }
}

function rig() {
    const sockets: FakeSocket[] = [];
    const states: ConnectionState[] = [];
    const messages: ServerMessage[] = [];
    const timers: Array<{ fn: () => void; delayMs: number }> = [];
    const connection = new BridgeConnection(
        "ws://test/ws",
        {
            onState: (s) => states.push(s),
            onMessage: (m) => messages.push(m),
        },
        () => {
            const s = new FakeSocket();
            sockets.push(s);
            return s;
        },
        (fn, delayMs) => { timers.push({ fn, delayMs }); return 0; },
    );
    return { connection, sockets, states, messages, timers };
}

describe("BridgeConnection", () => {
    it("reports connected after open", () => {
        const { connection, sockets, states } = rig();
        connection.connect();
        sockets[0].onopen!();
        expect(states).toEqual(["connecting", "connected"]);
    });

    it("dispatches parsed messages only", () => {
        const { connection, sockets, messages } = rig();
        connection.connect();
        sockets[0].onopen!();
        sockets[0].onmessage!({ data: JSON.stringify({ type: "ack", req: "set_target" }) });
        sockets[0].onmessage!({ data: "garbage" });
        expect(messages).toEqual([{ type: "ack", req: "set_target" }]);
    });

    it("reconnects with exponential backoff", () => {
        const { connection, sockets, states, timers } = rig();
        connection.connect();
        sockets[0].onclose!();          // drop before open
        expect(states.at(-1)).toBe("reconnecting");
        expect(timers[0].delayMs).toBe(500);
        timers[0].fn();                 // retry 1
        sockets[1].onclose!();
        expect(timers[1].delayMs).toBe(1000);
        timers[1].fn();
        sockets[2].onclose!();
        expect(timers[2].delayMs).toBe(2000);
        timers[2].fn();                 // retry 3 succeeds
        sockets[3].onopen!();
        expect(states.at(-1)).toBe("connected");
        // a later drop starts over at the base delay
        sockets[3].onclose!();
        expect(timers[3].delayMs).toBe(500);
    });

    it("caps the backoff delay", () => {
        const { connection, sockets, timers } = rig();
        connection.connect();
        for (let i = 0; i < 10; i++) {
            sockets[i].onclose!();
            timers[i].fn();
        }
        expect(timers.at(-1)!.delayMs).toBe(10_000);
    });

    it("sends only while a socket exists", () => {
        const { connection, sockets } = rig();
        expect(connection.send({ type: "enable", channel: 0 })).toBe(false);
        connection.connect();
        sockets[0].onopen!();
        expect(connection.send({ type: "set_target", channel: 1, kpa: 25 }))
            .toBe(true);
        expect(JSON.parse(sockets[0].sent[0])).toEqual({
            type: "set_target", channel: 1, kpa: 25,
        });
    });

    it("close() stops the retry loop", () => {
        const { connection, sockets, states, timers } = rig();
        connection.connect();
        sockets[0].onopen!();
        connection.close();
        expect(states.at(-1)).toBe("closed");
        expect(timers).toHaveLength(0);
    });
});
