"""In-process deterministic session: drive a device without a transport.

Exposes the same command surface as the network client, but applies
commands directly between ticks and advances simulated time explicitly,
so runs are exactly reproducible (the determinism scope the acceptance
suite relies on).  Also the natural adapter for scripted recordings.
"""

from __future__ import annotations

import csv

from .client import RECORDING_COLUMNS, write_recording_rows
from .device import Device
from .telemetry import TelemetrySnapshot


class SimHarness:
    """Tick-stepped driver for an in-process simulated device."""

    def __init__(self, device: Device, decimation: int = 1):
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        self.device = device
        self.decimation = decimation

    @property
    def channel_count(self) -> int:
        return self.device.channel_count

    @property
    def dt(self) -> float:
        return self.device.dt

    @property
    def tick(self) -> int:
        return self.device.tick_count

    # Command surface (tick-boundary semantics: applied before next tick).

    def set_pressure(self, channel: int, kpa: float) -> None:
        self.device.set_target(channel, kpa)

    def set_all(self, targets_kpa: list[float]) -> None:
        self.device.set_all_targets(targets_kpa)

    def enable(self, channel: int) -> None:
        self.device.set_enabled(channel, True)

    def disable(self, channel: int) -> None:
        self.device.set_enabled(channel, False)

    def inject_disturbance(self, channel: int, flow_lpm: float,
                           duration_s: float) -> None:
        self.device.inject_disturbance(channel, flow_lpm, duration_s)

    def set_leak(self, channel: int, coefficient: float,
                 duration_s: float = 0.0) -> None:
        self.device.set_leak(channel, coefficient, duration_s)

    def read_pressure(self, channel: int) -> float:
        return self.device.channels[channel].plant.pressure_kpa

    # Time control.

    def run_ticks(self, n: int) -> list[TelemetrySnapshot]:
        out: list[TelemetrySnapshot] = []
        capture = out.append
        self.device.run(n, on_snapshot=capture, decimation=self.decimation)
        return out

    def advance(self, duration_s: float) -> list[TelemetrySnapshot]:
        return self.run_ticks(round(duration_s / self.device.dt))

    def record_csv(self, path, duration_s: float, trajectory=None) -> int:
        """Deterministic recording: the wall_time column holds sim time.

        With a trajectory, its setpoints are applied on their scheduled
        tick boundaries while the recording runs, so identical seeds and
        scripts give byte-identical files.
        """
        steps = iter(trajectory.unrolled() if trajectory is not None else ())
        pending = next(steps, None)
        dt = self.device.dt
        rows = 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RECORDING_COLUMNS)
            for _ in range(round(duration_s / dt)):
                while pending is not None and \
                        round(pending.time_s / dt) <= self.device.tick_count:
                    if pending.channel is None:
                        self.set_all([pending.target_kpa] * self.channel_count)
                    else:
                        self.set_pressure(pending.channel, pending.target_kpa)
                    pending = next(steps, None)
                snapshot = self.device.tick()
                if self.device.tick_count % self.decimation == 0:
                    rows += write_recording_rows(writer, snapshot,
                                                 snapshot.tick * dt)
        return rows
