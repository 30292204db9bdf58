"""Benchmark the tick loop on every available kernel backend."""

from __future__ import annotations

import time

from . import _backend
from .device import Device


def run_benchmark(channels: int = 10, ticks: int = 5000,
                  repeats: int = 3) -> dict:
    """Time ``ticks`` device ticks per backend; returns rates and speedup.

    Besides timing, verifies that every backend lands on the same final
    pressures bit-for-bit.
    """
    results: dict[str, float] = {}
    finals: dict[str, list[float]] = {}
    original = _backend.channel_tick
    try:
        for name, module in _backend.available_backends().items():
            _backend.channel_tick = module.channel_tick
            best = 0.0
            for _ in range(repeats):
                device = Device(channels, seed=1)
                device.set_all_targets([30.0] * channels)
                start = time.perf_counter()
                device.run(ticks)
                elapsed = time.perf_counter() - start
                best = max(best, ticks / elapsed)
            results[name] = best
            finals[name] = device.pressures()
    finally:
        _backend.channel_tick = original
    report = {
        "channels": channels,
        "ticks": ticks,
        "active_backend": _backend.BACKEND_NAME,
        "ticks_per_second": results,
        "identical_results": len({tuple(v) for v in finals.values()}) == 1,
    }
    if "compiled" in results and "python" in results:
        report["speedup"] = results["compiled"] / results["python"]
    return report


def format_report(report: dict) -> str:
    lines = [f"{report['channels']} channels, {report['ticks']} ticks "
             f"(active backend: {report['active_backend']})"]
    for name, rate in sorted(report["ticks_per_second"].items()):
        lines.append(f"  {name:>8}: {rate:10.0f} ticks/s "
                     f"({rate * 0.02:6.1f}x real time)")
    if "speedup" in report:
        lines.append(f"  speedup: {report['speedup']:.1f}x")
    lines.append(f"  backends bit-identical: {report['identical_results']}")
    return "\n".join(lines)
