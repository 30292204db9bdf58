"""Host-side client: request/reply commands and telemetry streaming.

A background reader thread decodes the byte stream; replies are matched
to the waiting request by (echoed command id, channel) and telemetry is
reassembled into snapshots fanned out to subscriptions.  Command calls
are serialized per connection.  The handle is safe to share across
threads.
"""

from __future__ import annotations

import csv
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

from . import protocol
from .protocol import CommandId, ErrorCode, Frame, FrameDecoder, TelemetryReassembler
from .telemetry import TelemetrySnapshot

REQUEST_TIMEOUT_S = 0.2
REQUEST_RETRIES = 3
SUBSCRIPTION_BUFFER = 1024

RECORDING_COLUMNS = ["wall_time", "sim_tick", "channel", "pressure", "target",
                     "flow", "inflate_duty", "deflate_duty", "valve"]


class ClientError(Exception):
    pass


class Timeout(ClientError):
    """No reply after the retry budget."""


class TransportClosed(ClientError):
    """Connection lost."""


class LengthMismatch(ClientError):
    """set_all target list does not match the device channel count."""


class DeviceReportedError(ClientError):
    """Device answered with an Error frame."""

    def __init__(self, code: int):
        self.code = ErrorCode(code) if code in ErrorCode._value2member_map_ else code
        super().__init__(f"device error: {getattr(self.code, 'name', code)}")


@dataclass(frozen=True)
class DeviceInfo:
    protocol_version: int
    firmware_version: tuple[int, int]
    channel_count: int


class Subscription:
    """Buffered telemetry feed: snapshots in tick order, no duplicates."""

    def __init__(self, client: "PneuClient", callback=None):
        self._client = client
        self._callback = callback
        self._queue: queue.Queue[TelemetrySnapshot | None] = queue.Queue(
            SUBSCRIPTION_BUFFER)
        self.dropped = 0
        self._last_tick = -1
        self.closed = False

    def _offer(self, snapshot: TelemetrySnapshot):
        if snapshot.tick <= self._last_tick:
            return  # duplicate or reordered: never deliver
        self._last_tick = snapshot.tick
        if self._callback is not None:
            self._callback(snapshot)
            return
        while True:
            try:
                self._queue.put_nowait(snapshot)
                return
            except queue.Full:
                try:
                    self._queue.get_nowait()
                    self.dropped += 1
                except queue.Empty:
                    pass

    def get(self, timeout: float | None = 1.0) -> TelemetrySnapshot:
        if self.closed and self._queue.empty():
            raise TransportClosed("subscription closed")
        try:
            snapshot = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise Timeout("no telemetry received") from None
        if snapshot is None:
            raise TransportClosed("subscription closed")
        return snapshot

    def get_nowait(self) -> TelemetrySnapshot | None:
        """Next buffered snapshot, or None when the buffer is empty."""
        try:
            snapshot = self._queue.get_nowait()
        except queue.Empty:
            return None
        if snapshot is None:
            raise TransportClosed("subscription closed")
        return snapshot

    def __iter__(self):
        while True:
            try:
                yield self.get()
            except TransportClosed:
                return

    def close(self):
        self.closed = True
        self._client._drop_subscription(self)
        try:
            self._queue.put_nowait(None)
        except queue.Full:
            pass


class PneuClient:
    """Client handle for one device connection."""

    def __init__(self, host: str = "127.0.0.1", port: int = 9191,
                 connect_timeout: float = 2.0):
        sock = socket.create_connection((host, port), timeout=connect_timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(None)
        self._init_from_socket(sock)

    @classmethod
    def from_socket(cls, sock: socket.socket) -> "PneuClient":
        client = cls.__new__(cls)
        client._init_from_socket(sock)
        return client

    def _init_from_socket(self, sock):
        self._sock = sock
        self._decoder = FrameDecoder()
        self._reassembler = TelemetryReassembler()
        self._subscriptions: list[Subscription] = []
        self._pending: dict[tuple[int, int], queue.SimpleQueue] = {}
        self._lock = threading.Lock()  # serializes commands
        self._sub_lock = threading.Lock()
        self._closed = False
        self._info: DeviceInfo | None = None
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    # -- plumbing -----------------------------------------------------------

    def _read_loop(self):
        try:
            while not self._closed:
                data = self._sock.recv(4096)
                if not data:
                    break
                for frame in self._decoder.feed(data):
                    self._dispatch(frame)
        except OSError:
            pass
        finally:
            self._shutdown()

    def _dispatch(self, frame: Frame):
        if frame.command_id == CommandId.TELEMETRY:
            try:
                snapshot = self._reassembler.feed(frame)
            except ValueError:
                return
            if snapshot is not None:
                with self._sub_lock:
                    subs = list(self._subscriptions)
                for sub in subs:
                    sub._offer(snapshot)
            return
        if frame.command_id in (CommandId.REPLY, CommandId.ERROR):
            if not frame.payload:
                return
            key = (frame.payload[0], frame.channel)
            waiter = self._pending.get(key)
            if waiter is not None:
                waiter.put(frame)

    def _shutdown(self):
        self._closed = True
        with self._sub_lock:
            subs = list(self._subscriptions)
        for sub in subs:
            sub.close()
        for waiter in list(self._pending.values()):
            waiter.put(None)
        try:
            self._sock.close()
        except OSError:
            pass

    def close(self):
        self._shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- request/reply ------------------------------------------------------

    def request(self, frame: Frame, timeout: float = REQUEST_TIMEOUT_S,
                retries: int = REQUEST_RETRIES) -> bytes:
        """Send a frame, await its Reply; resend up to ``retries`` times."""
        if self._closed:
            raise TransportClosed("client is closed")
        key = (frame.command_id, frame.channel)
        raw = protocol.encode(frame)
        with self._lock:
            waiter: queue.SimpleQueue = queue.SimpleQueue()
            self._pending[key] = waiter
            try:
                for _attempt in range(retries + 1):
                    try:
                        self._sock.sendall(raw)
                    except OSError as exc:
                        raise TransportClosed(str(exc)) from exc
                    try:
                        reply = waiter.get(timeout=timeout)
                    except queue.Empty:
                        continue
                    if reply is None:
                        raise TransportClosed("connection lost")
                    if reply.command_id == CommandId.ERROR:
                        raise DeviceReportedError(reply.payload[1])
                    return reply.payload[1:]
                raise Timeout(f"no reply to 0x{frame.command_id:02X} after "
                              f"{retries + 1} attempts")
            finally:
                self._pending.pop(key, None)

    # -- command surface ------------------------------------------------------

    def ping(self) -> DeviceInfo:
        data = self.request(protocol.make_ping())
        if len(data) < 4:
            raise ClientError("short ping reply")
        self._info = DeviceInfo(protocol_version=data[0],
                                firmware_version=(data[1], data[2]),
                                channel_count=data[3])
        return self._info

    @property
    def channel_count(self) -> int:
        if self._info is None:
            self.ping()
        return self._info.channel_count

    def set_pressure(self, channel: int, kpa: float) -> None:
        self.request(protocol.make_set_target(channel, kpa))

    def set_all(self, targets_kpa: list[float]) -> None:
        if len(targets_kpa) != self.channel_count:
            raise LengthMismatch(f"expected {self.channel_count} targets, "
                                 f"got {len(targets_kpa)}")
        self.request(protocol.make_set_all_targets(targets_kpa))

    def read_pressure(self, channel: int) -> float:
        data = self.request(protocol.make_read_pressure(channel))
        return protocol.decode_pressure(struct.unpack("<h", data)[0])

    def read_flow(self, channel: int) -> float:
        data = self.request(protocol.make_read_flow(channel))
        return protocol.decode_flow(struct.unpack("<h", data)[0])

    def enable(self, channel: int = protocol.BROADCAST_CHANNEL) -> None:
        self.request(protocol.make_enable(channel))

    def disable(self, channel: int = protocol.BROADCAST_CHANNEL) -> None:
        self.request(protocol.make_disable(channel))

    def set_gains(self, channel: int, kp: float, ki: float, kd: float) -> None:
        self.request(protocol.make_set_gains(channel, kp, ki, kd))

    def inject_disturbance(self, channel: int, flow_lpm: float,
                           duration_s: float) -> None:
        self.request(protocol.make_inject_disturbance(channel, flow_lpm,
                                                      duration_s))

    def set_leak(self, channel: int, coefficient: float,
                 duration_s: float = 0.0) -> None:
        self.request(protocol.make_set_leak(channel, coefficient, duration_s))

    # -- telemetry ------------------------------------------------------------

    def stream_telemetry(self, callback=None, decimation: int = 0) -> Subscription:
        """Subscribe to snapshots; returns a handle (queue- or callback-fed)."""
        sub = Subscription(self, callback)
        with self._sub_lock:
            self._subscriptions.append(sub)
        self.request(protocol.make_subscribe(True, decimation))
        return sub

    def _drop_subscription(self, sub: Subscription):
        with self._sub_lock:
            if sub in self._subscriptions:
                self._subscriptions.remove(sub)

    def record_csv(self, path, duration_s: float) -> int:
        """Record live telemetry rows for ``duration_s``; returns row count."""
        sub = self.stream_telemetry()
        rows = 0
        try:
            first = sub.get(timeout=2.0)
            end_tick = first.tick + round(duration_s / 0.02)
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(RECORDING_COLUMNS)
                rows += write_recording_rows(writer, first, time.time())
                for snapshot in sub:
                    rows += write_recording_rows(writer, snapshot, time.time())
                    if snapshot.tick >= end_tick:
                        break
        finally:
            sub.close()
        return rows


class ClientSession:
    """Adapter exposing the trajectory-session surface over a live client.

    Simulated time comes from telemetry ticks, so ``advance`` tracks the
    device clock, not the wall clock.
    """

    def __init__(self, client: PneuClient, dt: float = 0.02):
        self.client = client
        self.dt = dt
        self._sub = client.stream_telemetry()
        self._last = self._sub.get(timeout=2.0)

    @property
    def channel_count(self) -> int:
        return self.client.channel_count

    @property
    def tick(self) -> int:
        return self._last.tick

    def set_pressure(self, channel: int, kpa: float) -> None:
        self.client.set_pressure(channel, kpa)

    def set_all(self, targets_kpa: list[float]) -> None:
        self.client.set_all(targets_kpa)

    def read_pressure(self, channel: int) -> float:
        return self._last.channels[channel].pressure_kpa

    def advance(self, duration_s: float) -> list[TelemetrySnapshot]:
        target_tick = self._last.tick + round(duration_s / self.dt)
        out = []
        while self._last.tick < target_tick:
            self._last = self._sub.get(timeout=5.0)
            out.append(self._last)
        return out

    def close(self):
        self._sub.close()


def write_recording_rows(writer, snapshot: TelemetrySnapshot,
                         wall_time: float) -> int:
    """Append one row per channel; floats use repr for exact round-trips."""
    for index, ch in enumerate(snapshot.channels):
        writer.writerow([
            repr(wall_time), snapshot.tick, index,
            repr(ch.pressure_kpa), repr(ch.target_kpa), repr(ch.flow_lpm),
            repr(ch.inflate_counts / 4096.0), repr(ch.deflate_counts / 4096.0),
            int(ch.valve),
        ])
    return snapshot.channel_count
