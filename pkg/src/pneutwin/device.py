"""Firmware-equivalent device: channel states, 50 Hz tick, command handling.

The device owns every channel's controller and (in simulated mode) plant
state, advances them together on a fixed tick, and answers decoded
protocol frames between ticks.  Commands therefore take effect on tick
boundaries, which keeps runs reproducible: identical initial state plus
an identical tick-stamped command schedule gives a bit-identical
telemetry stream.

Channels are independent; they are evaluated in index order inside one
tick purely for reproducibility.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _backend, protocol
from .controller import (
    TICK_DT_S,
    ActuationCommand,
    ChannelControlConfig,
    PidGains,
    PidState,
)
from .plant import (
    HYBRID_SENSOR,
    ChamberParams,
    ChannelPlantState,
    DisturbanceWindow,
    NonFiniteState,
    OverlappingDisturbance,
    PlantParams,
    SensorModel,
    Valve,
)
from .protocol import CommandId, ErrorCode, Frame
from .telemetry import ChannelTelemetry, TelemetrySnapshot

MAX_CHANNELS = 24  # 12 two-channel modules


class DeviceMode(Enum):
    SIMULATED = "simulated"
    EXTERNAL_PLANT = "external"


class DeviceError(Exception):
    """Command rejected; carries the wire error code."""

    code = ErrorCode.BAD_PAYLOAD


class UnknownCommand(DeviceError):
    code = ErrorCode.UNKNOWN_COMMAND


class ChannelOutOfRange(DeviceError):
    code = ErrorCode.CHANNEL_OUT_OF_RANGE


class TargetOutOfRange(DeviceError):
    code = ErrorCode.TARGET_OUT_OF_RANGE


class BadPayload(DeviceError):
    code = ErrorCode.BAD_PAYLOAD


class ExternalPlant:
    """Interface a foreign plant (real hardware, another simulator) implements.

    The device reads one pressure per channel per tick and writes back the
    commanded duties and valve position.
    """

    def read_pressure(self, channel: int) -> float:
        raise NotImplementedError

    def write_command(self, channel: int, inflate_counts: int,
                      deflate_counts: int, valve: Valve) -> None:
        raise NotImplementedError

    def read_flow(self, channel: int) -> float:
        return 0.0


@dataclass
class Channel:
    """Everything the device tracks for one air channel."""

    params: PlantParams = field(default_factory=PlantParams)
    control: ChannelControlConfig = field(default_factory=ChannelControlConfig)
    sensor: SensorModel = HYBRID_SENSOR
    target_kpa: float = 0.0
    pid: PidState = field(default_factory=PidState)
    plant: ChannelPlantState = field(default_factory=ChannelPlantState)
    # Active disturbance window, tracked in ticks for exact scheduling.
    window: DisturbanceWindow | None = None
    window_ticks: tuple[int, int] = (0, 0)
    leak_revert: tuple[int, float] | None = None  # (tick, coefficient)

    def envelope(self) -> tuple[float, float]:
        lo = max(self.params.deflate.stall_kpa, self.sensor.range_kpa[0])
        hi = min(self.params.inflate.stall_kpa, self.sensor.range_kpa[1])
        return lo, hi


@dataclass
class ScenarioEvent:
    """One scheduled plant perturbation from a scenario script."""

    time_s: float
    channel: int
    kind: str  # "disturbance" | "leak"
    value: float
    duration_s: float = 0.0


class Device:
    """Simulated (or externally planted) multi-channel pressure device."""

    def __init__(
        self,
        channel_count: int = 10,
        *,
        channels: list[Channel] | None = None,
        mode: DeviceMode = DeviceMode.SIMULATED,
        external_plant: ExternalPlant | None = None,
        dt: float = TICK_DT_S,
        seed: int = 0,
    ):
        if channels is not None:
            channel_count = len(channels)
        if not 1 <= channel_count <= MAX_CHANNELS:
            raise ValueError(f"channel_count must be 1..{MAX_CHANNELS}")
        if mode == DeviceMode.EXTERNAL_PLANT and external_plant is None:
            raise ValueError("external mode requires an ExternalPlant")
        self.channels = channels if channels is not None else [
            Channel() for _ in range(channel_count)
        ]
        self.mode = mode
        self.external_plant = external_plant
        self.dt = dt
        self.seed = seed
        self.tick_count = 0
        self._rngs = [np.random.default_rng((seed, i))
                      for i in range(channel_count)]
        self._scenario: list[ScenarioEvent] = []
        self._flat: list[tuple] = [()] * channel_count
        for i in range(channel_count):
            self._reflatten(i)

    # -- bookkeeping ------------------------------------------------------

    @property
    def channel_count(self) -> int:
        return len(self.channels)

    @property
    def sim_time_s(self) -> float:
        return self.tick_count * self.dt

    def _reflatten(self, i: int) -> None:
        """Cache the kernel's constant argument tail for channel i."""
        ch = self.channels[i]
        g = ch.control.gains
        p = ch.params
        self._flat[i] = (
            ch.sensor.quantization_kpa,
            ch.sensor.range_kpa[0], ch.sensor.range_kpa[1],
            g.kp, g.ki, g.kd, g.output_limit, g.integral_limit,
            ch.control.deadband_kpa, ch.control.valve_hysteresis_kpa,
            p.inflate.max_flow_lpm, p.inflate.stall_kpa,
            p.deflate.max_flow_lpm, p.deflate.stall_kpa,
            p.chamber.leak_coefficient,
            p.chamber.rest_volume_ml, p.chamber.compliance_ml_per_kpa,
            self.dt,
        )

    def _check_channel(self, channel: int) -> Channel:
        if not 0 <= channel < self.channel_count:
            raise ChannelOutOfRange(f"channel {channel} on a "
                                    f"{self.channel_count}-channel device")
        return self.channels[channel]

    # -- direct control surface (used by apply_command and by harnesses) ---

    def set_target(self, channel: int, kpa: float) -> None:
        ch = self._check_channel(channel)
        lo, hi = ch.envelope()
        if not lo <= kpa <= hi:
            raise TargetOutOfRange(f"{kpa} kPa outside [{lo}, {hi}]")
        ch.target_kpa = kpa

    def set_all_targets(self, targets_kpa: list[float]) -> None:
        if len(targets_kpa) != self.channel_count:
            raise BadPayload(f"expected {self.channel_count} targets, "
                             f"got {len(targets_kpa)}")
        for i, kpa in enumerate(targets_kpa):  # validate all before applying
            lo, hi = self.channels[i].envelope()
            if not lo <= kpa <= hi:
                raise TargetOutOfRange(f"channel {i}: {kpa} kPa outside [{lo}, {hi}]")
        for i, kpa in enumerate(targets_kpa):
            self.channels[i].target_kpa = kpa

    def set_enabled(self, channel: int, enabled: bool) -> None:
        for ch in self._addressed(channel):
            ch.control = ChannelControlConfig(
                gains=ch.control.gains,
                deadband_kpa=ch.control.deadband_kpa,
                valve_hysteresis_kpa=ch.control.valve_hysteresis_kpa,
                enabled=enabled,
            )
        self._reflatten_addressed(channel)

    def set_gains(self, channel: int, kp: float, ki: float, kd: float) -> None:
        for ch in self._addressed(channel):
            old = ch.control.gains
            ch.control = ChannelControlConfig(
                gains=PidGains(kp=kp, ki=ki, kd=kd,
                               output_limit=old.output_limit,
                               integral_limit=old.integral_limit),
                deadband_kpa=ch.control.deadband_kpa,
                valve_hysteresis_kpa=ch.control.valve_hysteresis_kpa,
                enabled=ch.control.enabled,
            )
        self._reflatten_addressed(channel)

    def inject_disturbance(self, channel: int, flow_lpm: float,
                           duration_s: float) -> DisturbanceWindow:
        """Schedule an external flow on the channel starting this tick."""
        ch = self._check_channel(channel)
        if ch.window is not None and self.tick_count < ch.window_ticks[1]:
            raise OverlappingDisturbance(
                f"channel {channel} window active until "
                f"t={ch.window_ticks[1] * self.dt:.2f} s")
        window = DisturbanceWindow(flow_lpm=flow_lpm,
                                   start_s=self.sim_time_s,
                                   duration_s=duration_s)
        ticks = max(1, round(duration_s / self.dt))
        ch.window = window
        ch.window_ticks = (self.tick_count, self.tick_count + ticks)
        return window

    def set_leak(self, channel: int, coefficient: float,
                 duration_s: float = 0.0) -> None:
        """Change a channel's leak; nonzero duration reverts afterwards."""
        ch = self._check_channel(channel)
        if coefficient < 0:
            raise BadPayload("leak coefficient must be >= 0")
        old = ch.params.chamber.leak_coefficient
        chamber = ch.params.chamber
        ch.params = PlantParams(
            inflate=ch.params.inflate,
            deflate=ch.params.deflate,
            chamber=ChamberParams(
                rest_volume_ml=chamber.rest_volume_ml,
                compliance_ml_per_kpa=chamber.compliance_ml_per_kpa,
                leak_coefficient=coefficient,
            ),
        )
        if duration_s > 0:
            ch.leak_revert = (self.tick_count + max(1, round(duration_s / self.dt)), old)
        else:
            ch.leak_revert = None
        self._reflatten(channel)

    def load_scenario(self, events: list[ScenarioEvent]) -> None:
        self._scenario.extend(events)
        self._scenario.sort(key=lambda e: e.time_s)

    def _addressed(self, channel: int) -> list[Channel]:
        if channel == protocol.BROADCAST_CHANNEL:
            return self.channels
        return [self._check_channel(channel)]

    def _reflatten_addressed(self, channel: int) -> None:
        if channel == protocol.BROADCAST_CHANNEL:
            for i in range(self.channel_count):
                self._reflatten(i)
        else:
            self._reflatten(channel)

    # -- the 50 Hz tick -----------------------------------------------------

    def _apply_schedules(self) -> None:
        now_tick = self.tick_count
        while self._scenario and round(self._scenario[0].time_s / self.dt) <= now_tick:
            ev = self._scenario.pop(0)
            if ev.kind == "disturbance":
                self.inject_disturbance(ev.channel, ev.value, ev.duration_s)
            elif ev.kind == "leak":
                self.set_leak(ev.channel, ev.value, ev.duration_s)
            else:
                raise ValueError(f"unknown scenario kind {ev.kind!r}")
        for i, ch in enumerate(self.channels):
            if ch.leak_revert is not None and now_tick >= ch.leak_revert[0]:
                _, old = ch.leak_revert
                ch.leak_revert = None
                self.set_leak(i, old)
            if ch.window is not None:
                start, end = ch.window_ticks
                if start <= now_tick < end:
                    ch.plant.disturbance_flow_lpm = ch.window.flow_lpm
                else:
                    ch.plant.disturbance_flow_lpm = 0.0
                    if now_tick >= end:
                        ch.window = None

    def tick(self) -> TelemetrySnapshot:
        """Advance every channel by one tick and snapshot the result."""
        self._apply_schedules()
        if self.mode == DeviceMode.SIMULATED:
            entries = self._tick_simulated()
        else:
            entries = self._tick_external()
        self.tick_count += 1
        return TelemetrySnapshot(tick=self.tick_count, channels=tuple(entries))

    def _tick_simulated(self) -> list[ChannelTelemetry]:
        kernel = _backend.channel_tick
        entries = []
        for i, ch in enumerate(self.channels):
            plant = ch.plant
            pid = ch.pid
            enabled = ch.control.enabled
            noise = 0.0
            if enabled and ch.sensor.noise_std_kpa > 0.0:
                noise = self._rngs[i].normal(0.0, ch.sensor.noise_std_kpa)
            try:
                (p_new, valve, flow, integral, prev_error, saturated,
                 inf_counts, def_counts, _u, _reading) = kernel(
                    plant.pressure_kpa, int(plant.valve),
                    plant.disturbance_flow_lpm,
                    pid.integral, pid.prev_error,
                    1 if enabled else 0, ch.target_kpa, noise,
                    *self._flat[i],
                )
            except ValueError as exc:
                raise NonFiniteState(f"channel {i}: {exc}") from exc
            plant.pressure_kpa = p_new
            plant.valve = Valve(valve)
            plant.last_flow_lpm = flow
            pid.integral = integral
            pid.prev_error = prev_error
            pid.saturated = bool(saturated)
            entries.append(ChannelTelemetry(
                pressure_kpa=p_new,
                target_kpa=ch.target_kpa,
                flow_lpm=flow,
                inflate_counts=inf_counts,
                deflate_counts=def_counts,
                valve=plant.valve,
                enabled=enabled,
            ))
        return entries

    def _tick_external(self) -> list[ChannelTelemetry]:
        from .controller import tick_channel
        from .plant import read_sensor

        ext = self.external_plant
        entries = []
        for i, ch in enumerate(self.channels):
            pressure = ext.read_pressure(i)
            reading = read_sensor(pressure, ch.sensor,
                                  self._rngs[i] if ch.sensor.noise_std_kpa else None)
            cmd, ch.pid = tick_channel(reading, ch.target_kpa, ch.control,
                                       ch.pid, ch.plant.valve, self.dt)
            ext.write_command(i, cmd.inflate_counts, cmd.deflate_counts, cmd.valve)
            ch.plant.pressure_kpa = pressure
            ch.plant.valve = cmd.valve
            flow = ext.read_flow(i)
            ch.plant.last_flow_lpm = flow
            entries.append(ChannelTelemetry(
                pressure_kpa=pressure,
                target_kpa=ch.target_kpa,
                flow_lpm=flow,
                inflate_counts=cmd.inflate_counts,
                deflate_counts=cmd.deflate_counts,
                valve=cmd.valve,
                enabled=ch.control.enabled,
            ))
        return entries

    def run(self, n_ticks: int, on_snapshot=None, decimation: int = 1):
        """Advance ``n_ticks``; deliver every ``decimation``-th snapshot."""
        for _ in range(n_ticks):
            snapshot = self.tick()
            if on_snapshot is not None and self.tick_count % decimation == 0:
                on_snapshot(snapshot)

    def pressures(self) -> list[float]:
        return [ch.plant.pressure_kpa for ch in self.channels]

    # -- protocol frame handling -------------------------------------------

    def apply_command(self, frame: Frame) -> list[Frame]:
        """Process one decoded, CRC-valid frame; returns reply frames."""
        try:
            return self._dispatch(frame)
        except DeviceError as exc:
            return [protocol.make_error(frame, exc.code)]
        except OverlappingDisturbance:
            return [protocol.make_error(frame, ErrorCode.OVERLAPPING_DISTURBANCE)]
        except ValueError:
            return [protocol.make_error(frame, ErrorCode.BAD_PAYLOAD)]

    def _dispatch(self, frame: Frame) -> list[Frame]:
        cmd = frame.command_id
        payload = frame.payload
        if cmd == CommandId.PING:
            data = bytes((protocol.PROTOCOL_VERSION, *protocol.FIRMWARE_VERSION,
                          self.channel_count))
            return [protocol.make_reply(frame, data)]
        if cmd == CommandId.SET_TARGET:
            code = self._unpack(frame, "<h")
            self.set_target(frame.channel, protocol.decode_pressure(code[0]))
            return [protocol.make_reply(frame)]
        if cmd == CommandId.SET_ALL_TARGETS:
            if len(payload) != 2 * self.channel_count:
                raise BadPayload(f"expected {2 * self.channel_count} bytes")
            codes = struct.unpack(f"<{self.channel_count}h", payload)
            self.set_all_targets([protocol.decode_pressure(c) for c in codes])
            return [protocol.make_reply(frame)]
        if cmd == CommandId.READ_PRESSURE:
            ch = self._check_channel(frame.channel)
            code = protocol.encode_pressure(ch.plant.pressure_kpa)
            return [protocol.make_reply(frame, struct.pack("<h", code))]
        if cmd == CommandId.READ_FLOW:
            ch = self._check_channel(frame.channel)
            code = protocol.encode_flow(ch.plant.last_flow_lpm)
            return [protocol.make_reply(frame, struct.pack("<h", code))]
        if cmd == CommandId.ENABLE:
            self.set_enabled(frame.channel, True)
            return [protocol.make_reply(frame)]
        if cmd == CommandId.DISABLE:
            self.set_enabled(frame.channel, False)
            return [protocol.make_reply(frame)]
        if cmd == CommandId.SET_GAINS:
            kp, ki, kd = (protocol.decode_micro(v)
                          for v in self._unpack(frame, "<III"))
            self.set_gains(frame.channel, kp, ki, kd)
            return [protocol.make_reply(frame)]
        if cmd == CommandId.SUBSCRIBE_TELEMETRY:
            # Session-level concern; the server interprets it. Ack so the
            # command also works against an in-process device.
            if len(payload) != 2:
                raise BadPayload("expected 2 bytes")
            return [protocol.make_reply(frame)]
        if cmd == CommandId.INJECT_DISTURBANCE:
            flow_code, duration_ms = self._unpack(frame, "<hH")
            self.inject_disturbance(frame.channel,
                                    protocol.decode_flow(flow_code),
                                    duration_ms / 1000.0)
            return [protocol.make_reply(frame)]
        if cmd == CommandId.SET_LEAK:
            coeff_code, duration_ms = self._unpack(frame, "<IH")
            self.set_leak(frame.channel, protocol.decode_micro(coeff_code),
                          duration_ms / 1000.0)
            return [protocol.make_reply(frame)]
        raise UnknownCommand(f"command id 0x{cmd:02X}")

    def _unpack(self, frame: Frame, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if len(frame.payload) != size:
            raise BadPayload(f"expected {size} payload bytes, "
                             f"got {len(frame.payload)}")
        return struct.unpack(fmt, frame.payload)
