"""UI bridge tests: WebSocket schema, command translation, static assets."""

import time

import pytest
from fastapi.testclient import TestClient

from pneutwin import Device
from pneutwin.bridge import create_bridge_app
from pneutwin.client import PneuClient
from pneutwin.server import DeviceServer


@pytest.fixture
def bridge_stack(tmp_path):
    device = Device(3, seed=1)
    server = DeviceServer(device, port=0, decimation=10, accelerated=True)
    port = server.start()
    client = PneuClient(port=port)
    assets = tmp_path / "assets"
    assets.mkdir()
    (assets / "index.html").write_text("<!doctype html><title>console</title>")
    app = create_bridge_app(client, assets_dir=assets)
    with TestClient(app) as web:
        yield web, device
    client.close()
    server.stop()


def recv_until(ws, kind, limit=200):
    for _ in range(limit):
        message = ws.receive_json()
        if message["type"] == kind:
            return message
    raise AssertionError(f"no {kind!r} message within {limit} messages")


class TestWebSocket:
    def test_hello_then_telemetry_schema(self, bridge_stack):
        web, _ = bridge_stack
        with web.websocket_connect("/ws") as ws:
            hello = ws.receive_json()
            assert hello["type"] == "hello"
            assert hello["channels"] == 3
            assert hello["envelope"] == [-50.0, 80.0]
            telemetry = recv_until(ws, "telemetry")
            assert set(telemetry.keys()) == {"type", "tick", "channels"}
            assert len(telemetry["channels"]) == 3
            entry = telemetry["channels"][0]
            assert set(entry.keys()) == {"p", "t", "q", "di", "dd", "v", "en"}

    def test_set_target_acks_and_reads_back(self):
        # Paced 50 Hz server: the slider-to-readback budget is a wall-clock
        # contract, so measure it at the real tick rate.
        device = Device(3, seed=1)
        server = DeviceServer(device, port=0, decimation=2, accelerated=False)
        port = server.start()
        client = PneuClient(port=port)
        app = create_bridge_app(client)
        try:
            with TestClient(app) as web, web.websocket_connect("/ws") as ws:
                ws.receive_json()  # hello
                ws.receive_json()  # first telemetry: stream is live
                start = time.monotonic()
                ws.send_json({"type": "set_target", "channel": 1, "kpa": 25.0})
                seen_target = None
                deadline = time.monotonic() + 2.0
                while time.monotonic() < deadline:
                    message = ws.receive_json()
                    if message["type"] == "ack":
                        assert message["req"] == "set_target"
                    if message["type"] == "telemetry" \
                            and message["channels"][1]["t"] == 25.0:
                        seen_target = time.monotonic() - start
                        break
                assert seen_target is not None
                assert seen_target < 0.2  # slider-to-readback budget
        finally:
            client.close()
            server.stop()

    def test_envelope_error_reported_inline(self, bridge_stack):
        web, _ = bridge_stack
        with web.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json({"type": "set_target", "channel": 0, "kpa": 500.0})
            reply = recv_until(ws, "error")
            assert reply["req"] == "set_target"
            assert "TARGET_OUT_OF_RANGE" in reply["message"]

    def test_set_all_and_toggles(self, bridge_stack):
        web, device = bridge_stack
        with web.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json({"type": "set_all", "targets": [5.0, 6.0, 7.0]})
            recv_until(ws, "ack")
            assert [ch.target_kpa for ch in device.channels] == [5.0, 6.0, 7.0]
            ws.send_json({"type": "disable", "channel": 2})
            recv_until(ws, "ack")
            assert not device.channels[2].control.enabled

    def test_scenario_injection(self, bridge_stack):
        web, device = bridge_stack
        with web.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json({"type": "set_leak", "channel": 0,
                          "coefficient": 0.02})
            recv_until(ws, "ack")
            assert device.channels[0].params.chamber.leak_coefficient == 0.02
            ws.send_json({"type": "inject_disturbance", "channel": 0,
                          "flow_lpm": -0.5, "duration_s": 30.0})
            recv_until(ws, "ack")

    def test_unknown_type_rejected(self, bridge_stack):
        web, _ = bridge_stack
        with web.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json({"type": "reboot"})
            reply = recv_until(ws, "error")
            assert "unknown" in reply["message"]


class TestStatic:
    def test_assets_served(self, bridge_stack):
        web, _ = bridge_stack
        response = web.get("/")
        assert response.status_code == 200
        assert "console" in response.text

    def test_placeholder_without_assets(self):
        device = Device(1)
        server = DeviceServer(device, port=0, accelerated=True)
        port = server.start()
        client = PneuClient(port=port)
        app = create_bridge_app(client, assets_dir=None)
        with TestClient(app) as web:
            response = web.get("/")
            assert response.status_code == 200
            assert "Bridge is up" in response.text
        client.close()
        server.stop()
