"""Telemetry snapshot types shared by the device loop and the wire codec."""

from __future__ import annotations

from dataclasses import dataclass

from .plant import Valve


@dataclass(frozen=True)
class ChannelTelemetry:
    """Post-tick observation of one channel."""

    pressure_kpa: float
    target_kpa: float
    flow_lpm: float
    inflate_counts: int
    deflate_counts: int
    valve: Valve
    enabled: bool


@dataclass(frozen=True)
class TelemetrySnapshot:
    """One tick's worth of measurements and actuation for every channel."""

    tick: int
    channels: tuple[ChannelTelemetry, ...]

    @property
    def channel_count(self) -> int:
        return len(self.channels)
