"""Protocol server: fixed-rate tick loop plus byte-stream sessions.

One loop thread owns the device exclusively.  Sessions (TCP connections
or a stdio pipe) decode frames on their own reader threads and post them
to a queue; the loop drains the queue between ticks, so commands land on
tick boundaries and never delay a tick by more than one period.  Replies
and telemetry go out through per-session bounded queues with a writer
thread each; a stalled client loses telemetry (drop-oldest, counted)
rather than stalling the loop.

In accelerated mode the loop free-runs with identical results to paced
mode for the same tick-stamped command schedule.
"""

from __future__ import annotations

import queue
import socket
import threading
import time

from . import protocol
from .device import Device
from .protocol import CommandId, FrameDecoder

OUTBOX_FRAMES = 512


class Session:
    """One transport peer: frame decoding in, queued frames out.

    Replies ride an unbounded priority lane and are never dropped;
    telemetry uses a bounded lane with drop-oldest, so a stalled
    subscriber loses snapshots instead of stalling the loop or losing
    acks.
    """

    _ids = iter(range(1, 1 << 30))

    def __init__(self, server: "DeviceServer", read_fn, write_fn, close_fn):
        self.id = next(Session._ids)
        self.server = server
        self._read = read_fn
        self._write = write_fn
        self._close = close_fn
        self.decoder = FrameDecoder()
        self.subscribed = False
        self.dropped_frames = 0
        self._replies: queue.SimpleQueue[bytes | None] = queue.SimpleQueue()
        self._telemetry: queue.Queue[bytes] = queue.Queue(OUTBOX_FRAMES)
        self._wakeup = threading.Event()
        self.alive = True
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._writer = threading.Thread(target=self._write_loop, daemon=True)

    def start(self):
        self._reader.start()
        self._writer.start()

    def send_reply(self, data: bytes):
        self._replies.put(data)
        self._wakeup.set()

    def send_telemetry(self, data: bytes):
        while True:
            try:
                self._telemetry.put_nowait(data)
                self._wakeup.set()
                return
            except queue.Full:
                try:
                    self._telemetry.get_nowait()
                    self.dropped_frames += 1
                except queue.Empty:
                    pass

    def close(self):
        if self.alive:
            self.alive = False
            self._replies.put(None)
            self._wakeup.set()
            try:
                self._close()
            except OSError:
                pass
            self.server._forget(self)

    def _read_loop(self):
        try:
            while self.alive:
                data = self._read(4096)
                if not data:
                    break
                for frame in self.decoder.feed(data):
                    self.server._enqueue(self, frame)
        except (OSError, ValueError):
            pass
        finally:
            self.close()

    def _write_loop(self):
        try:
            while True:
                wrote = False
                while True:  # replies first, always
                    try:
                        data = self._replies.get_nowait()
                    except queue.Empty:
                        break
                    if data is None:
                        return
                    self._write(data)
                    wrote = True
                try:
                    self._write(self._telemetry.get_nowait())
                    wrote = True
                except queue.Empty:
                    pass
                if not wrote:
                    self._wakeup.wait(0.05)
                    self._wakeup.clear()
        except (OSError, ValueError):
            self.close()


class DeviceServer:
    """Serves one device over TCP; owns the tick schedule."""

    def __init__(
        self,
        device: Device,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        decimation: int = 2,
        accelerated: bool = False,
        max_ticks: int | None = None,
    ):
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        self.device = device
        self.host = host
        self.port = port
        self.decimation = decimation
        self.accelerated = accelerated
        self.max_ticks = max_ticks
        self._commands: queue.SimpleQueue = queue.SimpleQueue()
        self._sessions: list[Session] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> int:
        """Bind, start the acceptor and loop threads, return the port."""
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen()
        listener.settimeout(0.2)
        self._listener = listener
        self.port = listener.getsockname()[1]
        for target in (self._accept_loop, self._tick_loop):
            thread = threading.Thread(target=target, daemon=True)
            thread.start()
            self._threads.append(thread)
        return self.port

    def serve_forever(self):
        self.start()
        try:
            while not self._stop.wait(0.5):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self):
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
        with self._lock:
            sessions = list(self._sessions)
        for session in sessions:
            session.close()
        for thread in self._threads:
            thread.join(timeout=2.0)

    def wait(self, timeout=None) -> bool:
        """Block until the loop finishes (max_ticks) or timeout elapses."""
        return self._stop.wait(timeout)

    # -- session plumbing ----------------------------------------------------

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._attach(conn.recv, conn.sendall, conn.close)

    def _attach(self, read_fn, write_fn, close_fn) -> Session:
        session = Session(self, read_fn, write_fn, close_fn)
        with self._lock:
            self._sessions.append(session)
        session.start()
        return session

    def _forget(self, session: Session):
        with self._lock:
            if session in self._sessions:
                self._sessions.remove(session)

    def _enqueue(self, session: Session, frame):
        self._commands.put((session, frame))

    # -- the loop ------------------------------------------------------------

    # Upper bound on commands applied between two ticks, so a command
    # flood cannot delay the tick by more than a fraction of a period.
    COMMANDS_PER_GAP = 256

    def _handle_pending(self):
        for _ in range(self.COMMANDS_PER_GAP):
            try:
                session, frame = self._commands.get_nowait()
            except queue.Empty:
                return
            if frame.command_id == CommandId.SUBSCRIBE_TELEMETRY \
                    and len(frame.payload) == 2:
                session.subscribed = frame.payload[0] != 0
                if frame.payload[1]:
                    self.decimation = frame.payload[1]
            for reply in self.device.apply_command(frame):
                session.send_reply(protocol.encode(reply))

    def _publish(self, snapshot):
        frames = protocol.encode_telemetry(snapshot)
        data = b"".join(frames)
        with self._lock:
            targets = [s for s in self._sessions if s.subscribed and s.alive]
        for session in targets:
            session.send_telemetry(data)

    def _tick_loop(self):
        period = self.device.dt
        deadline = time.perf_counter() + period
        while not self._stop.is_set():
            self._handle_pending()
            snapshot = self.device.tick()
            if self.device.tick_count % self.decimation == 0:
                self._publish(snapshot)
            if self.max_ticks is not None and self.device.tick_count >= self.max_ticks:
                break
            if not self.accelerated:
                now = time.perf_counter()
                if deadline > now:
                    time.sleep(deadline - now)
                    deadline += period
                else:
                    deadline = now + period  # overrun: don't accumulate debt
        self._stop.set()


def serve_stdio(device: Device, *, decimation: int = 2,
                accelerated: bool = False, max_ticks: int | None = None):
    """Serve the protocol over stdin/stdout (for in-process harnesses)."""
    import sys

    server = DeviceServer(device, decimation=decimation,
                          accelerated=accelerated, max_ticks=max_ticks)
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    def write(data: bytes):
        stdout.write(data)
        stdout.flush()

    loop = threading.Thread(target=server._tick_loop, daemon=True)
    loop.start()
    server._threads.append(loop)
    server._attach(stdin.read1 if hasattr(stdin, "read1") else stdin.read,
                   write, lambda: None)
    server.wait()
    server.stop()
