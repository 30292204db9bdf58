// Canvas renderer for the scrolling pressure/flow charts. Pressure and
// flow get separate axes; the target is drawn as a step overlay on the
// pressure axis.

import type { ChartData } from "./ringbuffer.js";
import type { SeriesBuffer } from "./ringbuffer.js";

const COLORS = ["#4e9af1", "#f1734e", "#53c487", "#c45396", "#b8b94c",
    "#7a5cc4", "#4cb8b9", "#c4764c", "#96c453", "#5370c4"];

export interface ChartOptions {
    windowS: number;
    showTargets: boolean;
}

function niceRange(lo: number, hi: number, pad = 0.1): [number, number] {
    if (lo === hi) {
        lo -= 1;
        hi += 1;
    }
    const span = hi - lo;
    return [lo - span * pad, hi + span * pad];
}

function combinedRange(series: SeriesBuffer[], selected: boolean[]): [number, number] | null {
    let lo = Infinity;
    let hi = -Infinity;
    series.forEach((buffer, i) => {
        if (!selected[i]) return;
        const r = buffer.range();
        if (r) {
            lo = Math.min(lo, r[0]);
            hi = Math.max(hi, r[1]);
        }
    });
    return lo <= hi ? [lo, hi] : null;
}

function drawSeries(ctx: CanvasRenderingContext2D, buffer: SeriesBuffer,
                    color: string, nowS: number, windowS: number,
                    lo: number, hi: number, width: number, height: number,
                    step: boolean): void {
    const pts = buffer.points();
    if (pts.length < 2) return;
    const x = (t: number) => width * (1 - (nowS - t) / windowS);
    const y = (v: number) => height * (1 - (v - lo) / (hi - lo));
    ctx.strokeStyle = color;
    ctx.beginPath();
    let started = false;
    let prevY = 0;
    for (const p of pts) {
        const px = x(p.timeS);
        const py = y(p.value);
        if (!started) {
            ctx.moveTo(px, py);
            started = true;
        } else if (step) {
            ctx.lineTo(px, prevY);
            ctx.lineTo(px, py);
        } else {
            ctx.lineTo(px, py);
        }
        prevY = py;
    }
    ctx.stroke();
}

function drawAxis(ctx: CanvasRenderingContext2D, lo: number, hi: number,
                  width: number, height: number, unit: string): void {
    ctx.strokeStyle = "#3a3f4a";
    ctx.fillStyle = "#9aa3b2";
    ctx.font = "11px system-ui";
    const ticks = 4;
    for (let i = 0; i <= ticks; i++) {
        const value = lo + ((hi - lo) * i) / ticks;
        const y = height * (1 - i / ticks);
        ctx.beginPath();
        ctx.moveTo(0, y);
        ctx.lineTo(width, y);
        ctx.stroke();
        ctx.fillText(`${value.toFixed(1)} ${unit}`, 4, Math.max(10, y - 3));
    }
}

export function renderChart(canvas: HTMLCanvasElement, data: ChartData,
                            selected: boolean[], nowS: number,
                            series: "pressure" | "flow",
                            options: ChartOptions): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = canvas;
    ctx.clearRect(0, 0, width, height);
    ctx.lineWidth = 1;

    const buffers = series === "pressure" ? data.pressure : data.flow;
    let range = combinedRange(buffers, selected);
    if (series === "pressure" && options.showTargets) {
        const targetRange = combinedRange(data.target, selected);
        if (targetRange && range) {
            range = [Math.min(range[0], targetRange[0]),
                Math.max(range[1], targetRange[1])];
        } else {
            range = range ?? targetRange;
        }
    }
    if (!range) return;
    const [lo, hi] = niceRange(range[0], range[1]);
    drawAxis(ctx, lo, hi, width, height, series === "pressure" ? "kPa" : "L/min");

    buffers.forEach((buffer, i) => {
        if (!selected[i]) return;
        drawSeries(ctx, buffer, COLORS[i % COLORS.length], nowS,
            options.windowS, lo, hi, width, height, false);
    });
    if (series === "pressure" && options.showTargets) {
        ctx.setLineDash([4, 3]);
        data.target.forEach((buffer, i) => {
            if (!selected[i]) return;
            drawSeries(ctx, buffer, COLORS[i % COLORS.length], nowS,
                options.windowS, lo, hi, width, height, true);
        });
        ctx.setLineDash([]);
    }
}
