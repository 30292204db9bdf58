// Operator console: channel grid, scenario buttons and live charts, all
// driven by the bridge WebSocket. Snapshots are coalesced to the render
// loop; every displayed number comes from a received snapshot.

import { renderChart } from "./chart.js";
import { RateLimiter } from "./ratelimit.js";
import { ChartData } from "./ringbuffer.js";
import { clampToEnvelope } from "./schema.js";
import type { ServerMessage } from "./schema.js";
import { BridgeConnection } from "./socket.js";
import type { ConnectionState } from "./socket.js";
import { ConsoleStore } from "./store.js";

const CHART_WINDOW_S = 60;
const MIN_REFRESH_HZ = 10;
const LIVE_SLIDER_MAX_HZ = 10;

const store = new ConsoleStore();
let chartData: ChartData | null = null;
let dirty = false;
let lastRenderMs = 0;

const banner = document.getElementById("banner") as HTMLDivElement;
const grid = document.getElementById("channels") as HTMLDivElement;
const errorBox = document.getElementById("error") as HTMLDivElement;
const pressureCanvas = document.getElementById("pressure-chart") as HTMLCanvasElement;
const flowCanvas = document.getElementById("flow-chart") as HTMLCanvasElement;
const liveToggle = document.getElementById("live-mode") as HTMLInputElement;

const liveLimiter = new RateLimiter(LIVE_SLIDER_MAX_HZ);

const wsUrl = (() => {
    const scheme = location.protocol === "https:" ? "wss" : "ws";
    return `${scheme}://${location.host}/ws`;
})();

const connection = new BridgeConnection(wsUrl, {
    onState: showConnectionState,
    onMessage: handleMessage,
});

function showConnectionState(state: ConnectionState, detail?: string): void {
    banner.dataset.state = state;
    banner.textContent = detail ? `${state} (${detail})` : state;
}

function handleMessage(message: ServerMessage): void {
    switch (message.type) {
        case "hello":
            store.configure(message);
            chartData = new ChartData(store.channels.length, CHART_WINDOW_S);
            buildGrid();
            break;
        case "telemetry": {
            store.applySnapshot(message);
            const timeS = store.timeS();
            if (chartData) {
                for (const ch of store.channels) {
                    chartData.record(ch.id, timeS, ch.pressure, ch.flow, ch.target);
                }
            }
            dirty = true;
            break;
        }
        case "ack":
            store.clearError();
            errorBox.textContent = "";
            break;
        case "error":
            store.reportError(message.message);
            errorBox.textContent = `device: ${message.message}`;
            break;
    }
}

function commitSetpoint(id: number): void {
    const value = store.takePending(id);
    if (value === null) return;
    connection.send({ type: "set_target", channel: id, kpa: value });
}

function commitAll(kpa: number): void {
    const value = clampToEnvelope(kpa, store.envelope);
    connection.send({
        type: "set_all",
        targets: store.channels.map(() => value),
    });
}

function wireMasterControls(): void {
    const entry = document.getElementById("master-entry") as HTMLInputElement;
    document.getElementById("master-commit")!
        .addEventListener("click", () => commitAll(Number(entry.value)));
    document.getElementById("master-vent")!
        .addEventListener("click", () => commitAll(0));
}

function buildGrid(): void {
    grid.replaceChildren();
    for (const ch of store.channels) {
        const card = document.createElement("div");
        card.className = "channel";
        card.innerHTML = `
          <div class="head">
            <label class="sel"><input type="checkbox" class="select"
              ${ch.selected ? "checked" : ""}> ch ${ch.id}</label>
            <label class="en"><input type="checkbox" class="enabled" checked> on</label>
          </div>
          <div class="readout">
            <span class="pressure">–</span> kPa
            <span class="flow">–</span> L/min
          </div>
          <input type="range" class="slider"
            min="${store.envelope[0]}" max="${store.envelope[1]}" step="0.5" value="0">
          <div class="setrow">
            <input type="number" class="entry"
              min="${store.envelope[0]}" max="${store.envelope[1]}" step="0.1" value="0">
            <button class="commit">set</button>
          </div>
          <div class="scenario">
            <button class="leak">leak</button>
            <button class="disturb">disturb</button>
          </div>
          <div class="target">target <span class="target-value">0.0</span> kPa</div>
        `;
        grid.append(card);

        const slider = card.querySelector<HTMLInputElement>(".slider")!;
        const entry = card.querySelector<HTMLInputElement>(".entry")!;
        slider.addEventListener("input", () => {
            const value = store.setPending(ch.id, Number(slider.value));
            entry.value = String(value);
            if (liveToggle.checked && liveLimiter.allow()) {
                connection.send({ type: "set_target", channel: ch.id, kpa: value });
            }
        });
        slider.addEventListener("change", () => commitSetpoint(ch.id));
        entry.addEventListener("change", () => {
            const value = store.setPending(ch.id, Number(entry.value));
            entry.value = String(value);
            slider.value = String(value);
        });
        card.querySelector<HTMLButtonElement>(".commit")!
            .addEventListener("click", () => {
                store.setPending(ch.id, Number(entry.value));
                commitSetpoint(ch.id);
            });
        card.querySelector<HTMLInputElement>(".select")!
            .addEventListener("change", () => store.toggleSelected(ch.id));
        card.querySelector<HTMLInputElement>(".enabled")!
            .addEventListener("change", (event) => {
                const on = (event.target as HTMLInputElement).checked;
                connection.send({ type: on ? "enable" : "disable", channel: ch.id });
            });
        card.querySelector<HTMLButtonElement>(".leak")!
            .addEventListener("click", () => connection.send({
                type: "set_leak", channel: ch.id, coefficient: 0.02,
                duration_s: 30,
            }));
        card.querySelector<HTMLButtonElement>(".disturb")!
            .addEventListener("click", () => connection.send({
                type: "inject_disturbance", channel: ch.id,
                flow_lpm: -0.5, duration_s: 0.5,
            }));
    }
}

function refreshReadouts(): void {
    const cards = grid.children;
    for (let i = 0; i < cards.length && i < store.channels.length; i++) {
        const ch = store.channels[i];
        const card = cards[i] as HTMLElement;
        card.querySelector(".pressure")!.textContent = ch.pressure.toFixed(2);
        card.querySelector(".flow")!.textContent = ch.flow.toFixed(3);
        card.querySelector(".target-value")!.textContent = ch.target.toFixed(1);
        card.classList.toggle("disabled", !ch.enabled);
    }
}

function renderLoop(nowMs: number): void {
    // Coalesce snapshots to the animation rate, but repaint at least
    // every 1000 / MIN_REFRESH_HZ ms while data flows.
    if (dirty && (nowMs - lastRenderMs >= 1000 / (MIN_REFRESH_HZ * 6))) {
        dirty = false;
        lastRenderMs = nowMs;
        refreshReadouts();
        if (chartData) {
            const selected = store.channels.map((c) => c.selected);
            renderChart(pressureCanvas, chartData, selected, store.timeS(),
                "pressure", { windowS: CHART_WINDOW_S, showTargets: true });
            renderChart(flowCanvas, chartData, selected, store.timeS(),
                "flow", { windowS: CHART_WINDOW_S, showTargets: false });
        }
    }
    requestAnimationFrame(renderLoop);
}

wireMasterControls();
connection.connect();
requestAnimationFrame(renderLoop);
