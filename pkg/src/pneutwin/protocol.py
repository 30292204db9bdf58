"""Binary wire codec for the host/device instruction set.

Frame layout (all multi-byte integers little-endian)::

    0xAA | command_id (1B) | channel (1B) | length (1B) | payload | crc8 (1B)

The CRC-8 (polynomial 0x07, init 0x00, no reflection) covers command_id
through the last payload byte.  Channel 0xFF addresses all channels.
Physical quantities travel as fixed-point integers: pressure in 0.01 kPa
(signed 16-bit), flow in 1 mL/min (signed 16-bit), gains and leak
coefficients in millionths (unsigned 32-bit).

``docs/protocol.md`` is the normative byte-layout document with worked
hex examples; treat it as a compatibility contract.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .plant import Valve
from .telemetry import ChannelTelemetry, TelemetrySnapshot

SOF = 0xAA
MAX_PAYLOAD = 64
HEADER_LEN = 4  # sof, command_id, channel, length
BROADCAST_CHANNEL = 0xFF

PROTOCOL_VERSION = 1
FIRMWARE_VERSION = (0, 1)

TELEMETRY_CHANNELS_PER_FRAME = 5
_TELEMETRY_RECORD = struct.Struct("<hhhHB")
_TELEMETRY_TICK = struct.Struct("<I")

FLAG_VALVE_DEFLATE = 0x01
FLAG_ENABLED = 0x02


class CommandId(IntEnum):
    """Stable wire command ids."""

    PING = 0x01
    SET_TARGET = 0x02
    SET_ALL_TARGETS = 0x03
    READ_PRESSURE = 0x04
    READ_FLOW = 0x05
    ENABLE = 0x06
    DISABLE = 0x07
    SET_GAINS = 0x08
    SUBSCRIBE_TELEMETRY = 0x09
    REPLY = 0x0A
    TELEMETRY = 0x0B
    ERROR = 0x0C
    # Simulation-only extensions (a physical device replies UnknownCommand).
    INJECT_DISTURBANCE = 0x20
    SET_LEAK = 0x21


class ErrorCode(IntEnum):
    """Codes carried in Error frame payloads."""

    UNKNOWN_COMMAND = 1
    CHANNEL_OUT_OF_RANGE = 2
    TARGET_OUT_OF_RANGE = 3
    BAD_PAYLOAD = 4
    OVERLAPPING_DISTURBANCE = 5


class PayloadTooLarge(ValueError):
    """Frame payload exceeds 64 bytes."""


def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07 if crc & 0x80 else crc << 1) & 0xFF
        table.append(crc)
    return table


_CRC_TABLE = _build_crc_table()


def crc8(data: bytes) -> int:
    """CRC-8, polynomial 0x07, init 0x00, no reflection, no final xor."""
    crc = 0x00
    for byte in data:
        crc = _CRC_TABLE[crc ^ byte]
    return crc


@dataclass(frozen=True)
class Frame:
    """One decoded protocol message (sof, length and crc are implicit)."""

    command_id: int
    channel: int
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.command_id <= 0xFF:
            raise ValueError("command_id out of range")
        if not 0 <= self.channel <= 0xFF:
            raise ValueError("channel out of range")
        if len(self.payload) > MAX_PAYLOAD:
            raise PayloadTooLarge(f"payload of {len(self.payload)} bytes")


def encode_frame(command_id: int, channel: int, payload: bytes = b"") -> bytes:
    """Serialize one frame, appending the CRC over command_id..payload."""
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes")
    body = bytes((command_id, channel, len(payload))) + payload
    return bytes((SOF,)) + body + bytes((crc8(body),))


def encode(frame: Frame) -> bytes:
    return encode_frame(frame.command_id, frame.channel, frame.payload)


class FrameDecoder:
    """Incremental frame parser tolerant of torn and corrupted streams.

    Feed arbitrary byte chunks; complete CRC-valid frames come out in
    order.  After a bad frame the parser resynchronizes on the next 0xAA,
    rescanning from one byte past the failed start so a valid frame
    embedded in garbage is never skipped.  Corruption is counted, never
    raised: a byte stream cannot be invalid, only empty of frames.
    """

    def __init__(self):
        self._buf = bytearray()
        self.crc_errors = 0
        self.length_errors = 0
        self.dropped_bytes = 0

    def feed(self, data: bytes) -> list[Frame]:
        self._buf.extend(data)
        frames: list[Frame] = []
        buf = self._buf
        start = 0
        while True:
            sof = buf.find(SOF, start)
            if sof < 0:
                self.dropped_bytes += len(buf) - start
                buf.clear()
                return frames
            self.dropped_bytes += sof - start
            if sof:
                del buf[:sof]
            start = 0
            if len(buf) < HEADER_LEN:
                return frames  # need more bytes
            length = buf[3]
            if length > MAX_PAYLOAD:
                self.length_errors += 1
                self.dropped_bytes += 1
                start = 1
                continue
            end = HEADER_LEN + length + 1
            if len(buf) < end:
                return frames  # need more bytes
            body = bytes(buf[1 : end - 1])
            if crc8(body) != buf[end - 1]:
                self.crc_errors += 1
                self.dropped_bytes += 1
                start = 1
                continue
            frames.append(Frame(body[0], body[1], body[3:]))
            del buf[:end]
            start = 0


# ---------------------------------------------------------------------------
# Fixed-point field codecs

PRESSURE_SCALE = 100.0  # counts per kPa
FLOW_SCALE = 1000.0  # counts per L/min (i.e. mL/min)
MICRO_SCALE = 1e6


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def encode_pressure(kpa: float) -> int:
    """kPa -> signed 16-bit code in 0.01 kPa units, saturating."""
    code = _round_half_up(kpa * PRESSURE_SCALE)
    return max(-32768, min(32767, code))


def decode_pressure(code: int) -> float:
    return code / PRESSURE_SCALE


def encode_flow(lpm: float) -> int:
    """L/min -> signed 16-bit code in 1 mL/min units, saturating."""
    code = _round_half_up(lpm * FLOW_SCALE)
    return max(-32768, min(32767, code))


def decode_flow(code: int) -> float:
    return code / FLOW_SCALE


def encode_micro(value: float) -> int:
    """Non-negative value -> unsigned 32-bit code in millionths."""
    if value < 0:
        raise ValueError("micro-encoded values must be >= 0")
    return min(0xFFFFFFFF, _round_half_up(value * MICRO_SCALE))


def decode_micro(code: int) -> float:
    return code / MICRO_SCALE


# ---------------------------------------------------------------------------
# Command payload builders / parsers

def make_ping() -> Frame:
    return Frame(CommandId.PING, 0)


def make_set_target(channel: int, kpa: float) -> Frame:
    return Frame(CommandId.SET_TARGET, channel,
                 struct.pack("<h", encode_pressure(kpa)))


def make_set_all_targets(targets_kpa: list[float]) -> Frame:
    payload = b"".join(struct.pack("<h", encode_pressure(t)) for t in targets_kpa)
    return Frame(CommandId.SET_ALL_TARGETS, BROADCAST_CHANNEL, payload)


def make_read_pressure(channel: int) -> Frame:
    return Frame(CommandId.READ_PRESSURE, channel)


def make_read_flow(channel: int) -> Frame:
    return Frame(CommandId.READ_FLOW, channel)


def make_enable(channel: int) -> Frame:
    return Frame(CommandId.ENABLE, channel)


def make_disable(channel: int) -> Frame:
    return Frame(CommandId.DISABLE, channel)


def make_set_gains(channel: int, kp: float, ki: float, kd: float) -> Frame:
    payload = struct.pack("<III", encode_micro(kp), encode_micro(ki),
                          encode_micro(kd))
    return Frame(CommandId.SET_GAINS, channel, payload)


def make_subscribe(enable: bool = True, decimation: int = 0) -> Frame:
    """decimation 0 keeps the server's current setting."""
    return Frame(CommandId.SUBSCRIBE_TELEMETRY, 0,
                 bytes((1 if enable else 0, decimation & 0xFF)))


def make_inject_disturbance(channel: int, flow_lpm: float, duration_s: float) -> Frame:
    duration_ms = max(0, min(0xFFFF, _round_half_up(duration_s * 1000.0)))
    payload = struct.pack("<hH", encode_flow(flow_lpm), duration_ms)
    return Frame(CommandId.INJECT_DISTURBANCE, channel, payload)


def make_set_leak(channel: int, coefficient: float, duration_s: float = 0.0) -> Frame:
    duration_ms = max(0, min(0xFFFF, _round_half_up(duration_s * 1000.0)))
    payload = struct.pack("<IH", encode_micro(coefficient), duration_ms)
    return Frame(CommandId.SET_LEAK, channel, payload)


def make_reply(request: Frame, data: bytes = b"") -> Frame:
    return Frame(CommandId.REPLY, request.channel,
                 bytes((request.command_id,)) + data)


def make_error(request: Frame, code: ErrorCode) -> Frame:
    return Frame(CommandId.ERROR, request.channel,
                 bytes((request.command_id, code)))


def parse_reply(frame: Frame) -> tuple[int, bytes]:
    """Returns (echoed command id, data) from a Reply or Error frame."""
    if len(frame.payload) < 1:
        raise ValueError("reply payload too short")
    return frame.payload[0], frame.payload[1:]


# ---------------------------------------------------------------------------
# Telemetry packing

def encode_telemetry(snapshot: TelemetrySnapshot) -> list[bytes]:
    """Pack one snapshot into encoded telemetry frames.

    Snapshots with more than five channels split into fragments of five
    records; every fragment repeats the tick.  The frame header channel
    byte carries ``(fragment_index << 4) | fragment_count``.
    """
    n = snapshot.channel_count
    if n > 24:
        raise ValueError("telemetry supports at most 24 channels")
    per = TELEMETRY_CHANNELS_PER_FRAME
    count = max(1, -(-n // per))
    frames = []
    for idx in range(count):
        chunk = snapshot.channels[idx * per : (idx + 1) * per]
        payload = _TELEMETRY_TICK.pack(snapshot.tick & 0xFFFFFFFF)
        for ch in chunk:
            duty = ch.inflate_counts if ch.inflate_counts else ch.deflate_counts
            flags = 0
            if ch.valve == Valve.DEFLATE_PATH:
                flags |= FLAG_VALVE_DEFLATE
            if ch.enabled:
                flags |= FLAG_ENABLED
            payload += _TELEMETRY_RECORD.pack(
                encode_pressure(ch.pressure_kpa),
                encode_pressure(ch.target_kpa),
                encode_flow(ch.flow_lpm),
                duty,
                flags,
            )
        frames.append(encode_frame(CommandId.TELEMETRY, (idx << 4) | count, payload))
    return frames


def _parse_telemetry_fragment(frame: Frame):
    index = frame.channel >> 4
    count = frame.channel & 0x0F
    body = frame.payload
    if count == 0 or len(body) < 4 or (len(body) - 4) % _TELEMETRY_RECORD.size:
        raise ValueError("malformed telemetry fragment")
    (tick,) = _TELEMETRY_TICK.unpack_from(body, 0)
    records = []
    for off in range(4, len(body), _TELEMETRY_RECORD.size):
        p, t, q, duty, flags = _TELEMETRY_RECORD.unpack_from(body, off)
        deflate = bool(flags & FLAG_VALVE_DEFLATE)
        records.append(ChannelTelemetry(
            pressure_kpa=decode_pressure(p),
            target_kpa=decode_pressure(t),
            flow_lpm=decode_flow(q),
            inflate_counts=0 if deflate else duty,
            deflate_counts=duty if deflate else 0,
            valve=Valve.DEFLATE_PATH if deflate else Valve.INFLATE_PATH,
            enabled=bool(flags & FLAG_ENABLED),
        ))
    return tick, index, count, records


class TelemetryReassembler:
    """Rebuilds snapshots from (possibly fragmented) telemetry frames.

    Fragments of a snapshot arrive in order on a session.  A fragment for
    a new tick discards any incomplete predecessor (counted in
    ``incomplete_drops``).
    """

    def __init__(self):
        self.incomplete_drops = 0
        self._tick: int | None = None
        self._count = 0
        self._parts: dict[int, list[ChannelTelemetry]] = {}

    def feed(self, frame: Frame) -> TelemetrySnapshot | None:
        tick, index, count, records = _parse_telemetry_fragment(frame)
        if self._tick is not None and tick != self._tick:
            self.incomplete_drops += 1
            self._reset()
        if self._tick is None:
            self._tick = tick
            self._count = count
        self._parts[index] = records
        if len(self._parts) < self._count:
            return None
        channels: list[ChannelTelemetry] = []
        for idx in range(self._count):
            part = self._parts.get(idx)
            if part is None:
                self.incomplete_drops += 1
                self._reset()
                return None
            channels.extend(part)
        snapshot = TelemetrySnapshot(tick=tick, channels=tuple(channels))
        self._reset()
        return snapshot

    def _reset(self):
        self._tick = None
        self._count = 0
        self._parts = {}
