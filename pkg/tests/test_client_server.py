"""End-to-end protocol tests over real sockets."""

import socket
import threading
import time

import pytest

from pneutwin import Device, protocol
from pneutwin.client import (
    ClientSession,
    DeviceReportedError,
    LengthMismatch,
    PneuClient,
    Timeout,
)
from pneutwin.protocol import ErrorCode, FrameDecoder
from pneutwin.server import DeviceServer


@pytest.fixture
def served_device():
    device = Device(10, seed=3)
    server = DeviceServer(device, port=0, decimation=2, accelerated=True)
    port = server.start()
    yield device, server, port
    server.stop()


@pytest.fixture
def client(served_device):
    _, _, port = served_device
    client = PneuClient(port=port)
    yield client
    client.close()


class TestCommands:
    def test_ping_reports_device_info(self, client):
        info = client.ping()
        assert info.protocol_version == protocol.PROTOCOL_VERSION
        assert info.channel_count == 10

    def test_set_pressure_and_readback(self, client):
        client.set_pressure(0, 30.0)
        deadline = time.time() + 5.0
        while time.time() < deadline:
            if abs(client.read_pressure(0) - 30.0) < 0.5:
                break
            time.sleep(0.01)
        else:
            pytest.fail("pressure never approached the target")

    def test_target_out_of_envelope(self, client):
        with pytest.raises(DeviceReportedError) as err:
            client.set_pressure(0, 95.0)
        assert err.value.code == ErrorCode.TARGET_OUT_OF_RANGE

    def test_bad_channel(self, client):
        with pytest.raises(DeviceReportedError) as err:
            client.set_pressure(12, 10.0)
        assert err.value.code == ErrorCode.CHANNEL_OUT_OF_RANGE

    def test_set_all_length_checked_client_side(self, client):
        with pytest.raises(LengthMismatch):
            client.set_all([20.0] * 3)

    def test_set_all_applies_together(self, served_device, client):
        device, _, _ = served_device
        client.set_all([15.0] * 10)
        assert [ch.target_kpa for ch in device.channels] == [15.0] * 10

    def test_enable_disable_and_gains(self, served_device, client):
        device, _, _ = served_device
        client.disable(4)
        assert not device.channels[4].control.enabled
        client.enable(4)
        assert device.channels[4].control.enabled
        client.set_gains(4, 0.11, 0.22, 0.001)
        assert device.channels[4].control.gains.kp == 0.11

    def test_scenario_extensions(self, served_device, client):
        device, _, _ = served_device
        client.set_leak(2, 0.02)
        assert device.channels[2].params.chamber.leak_coefficient == 0.02
        # Long window so it is still active on the accelerated clock when
        # the overlapping request arrives.
        client.inject_disturbance(2, -0.4, 60.0)
        with pytest.raises(DeviceReportedError) as err:
            client.inject_disturbance(2, -0.4, 0.5)
        assert err.value.code == ErrorCode.OVERLAPPING_DISTURBANCE


class TestTelemetry:
    def test_stream_is_strictly_increasing(self, client):
        sub = client.stream_telemetry()
        ticks = [sub.get(timeout=2.0).tick for _ in range(50)]
        assert all(b > a for a, b in zip(ticks, ticks[1:]))
        sub.close()

    def test_snapshot_carries_all_channels(self, client):
        sub = client.stream_telemetry()
        snapshot = sub.get(timeout=2.0)
        assert snapshot.channel_count == 10
        sub.close()

    def test_callback_delivery(self, client):
        seen = []
        done = threading.Event()

        def on_snapshot(s):
            seen.append(s.tick)
            if len(seen) >= 10:
                done.set()

        sub = client.stream_telemetry(callback=on_snapshot)
        assert done.wait(2.0)
        sub.close()

    def test_client_session_advances_on_device_clock(self, client):
        session = ClientSession(client)
        start = session.tick
        snapshots = session.advance(1.0)  # 1 s of sim time
        assert snapshots
        assert session.tick >= start + 50
        session.close()

    def test_record_csv(self, client, tmp_path):
        path = tmp_path / "live.csv"
        rows = client.record_csv(path, duration_s=0.5)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("wall_time,sim_tick,channel")
        assert rows == len(lines) - 1
        assert rows % 10 == 0  # one row per channel per snapshot


class TestSessionLifecycle:
    def test_device_survives_client_disconnect(self, served_device):
        device, _, port = served_device
        first = PneuClient(port=port)
        first.set_pressure(0, 10.0)
        first.close()
        time.sleep(0.05)
        second = PneuClient(port=port)
        assert second.ping().channel_count == 10
        second.close()

    def test_two_observers_one_commander(self, served_device):
        _, _, port = served_device
        commander = PneuClient(port=port)
        observer = PneuClient(port=port)
        sub = observer.stream_telemetry()
        commander.set_pressure(1, 20.0)
        deadline = time.time() + 2.0
        got = None
        while time.time() < deadline:
            snapshot = sub.get(timeout=2.0)
            if snapshot.channels[1].target_kpa == 20.0:
                got = snapshot
                break
        assert got is not None
        sub.close()
        observer.close()
        commander.close()


class TestRetries:
    def flaky_server(self, drop_first: int, reply: bool = True):
        """Raw socket responder that ignores the first N requests."""
        listener = socket.socket()
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        port = listener.getsockname()[1]
        state = {"requests": 0}

        def run():
            conn, _ = listener.accept()
            decoder = FrameDecoder()
            while True:
                try:
                    data = conn.recv(4096)
                except OSError:
                    return
                if not data:
                    return
                for frame in decoder.feed(data):
                    state["requests"] += 1
                    if state["requests"] > drop_first and reply:
                        conn.sendall(protocol.encode(protocol.make_reply(frame)))

        threading.Thread(target=run, daemon=True).start()
        return port, state

    def test_retry_recovers_lost_reply(self):
        port, state = self.flaky_server(drop_first=2)
        client = PneuClient(port=port)
        client.set_pressure(0, 5.0)  # succeeds on third attempt
        assert state["requests"] == 3
        client.close()

    def test_timeout_after_retry_budget(self):
        port, state = self.flaky_server(drop_first=99)
        client = PneuClient(port=port)
        start = time.time()
        with pytest.raises(Timeout):
            client.set_pressure(0, 5.0)
        elapsed = time.time() - start
        assert state["requests"] == 4  # initial + 3 retries
        assert 0.7 <= elapsed < 2.0
        client.close()


class TestPacedLoop:
    def test_paced_tick_rate_and_decimation(self):
        device = Device(2)
        server = DeviceServer(device, port=0, decimation=2, accelerated=False)
        port = server.start()
        try:
            client = PneuClient(port=port)
            sub = client.stream_telemetry()
            snapshots = [sub.get(timeout=2.0) for _ in range(12)]
            gaps = [b.tick - a.tick for a, b in zip(snapshots, snapshots[1:])]
            assert all(g == 2 for g in gaps)  # 25 Hz stream from a 50 Hz loop
            wall = time.time()
            sub.get(timeout=2.0)
            sub.get(timeout=2.0)
            assert time.time() - wall > 0.05  # actually paced
            sub.close()
            client.close()
        finally:
            server.stop()
