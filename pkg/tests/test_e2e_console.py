"""Full-stack check: CLI server + UI bridge + built console assets.

Drives the real uvicorn/websockets path that the in-process bridge tests
bypass: slider-style set_target over a live WebSocket must read back in
telemetry within the 200 ms budget, and scenario buttons must produce a
visible transient.
"""

import asyncio
import json
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

websockets = pytest.importorskip("websockets")

ASSETS = Path(__file__).resolve().parent.parent / "frontend" / "dist"


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def ui_stack():
    device_port = free_port()
    ui_port = free_port()
    args = [sys.executable, "-m", "pneutwin.cli", "serve-sim",
            "--port", str(device_port), "--channels", "4",
            "--ui-port", str(ui_port)]
    if ASSETS.is_dir():
        args += ["--assets", str(ASSETS)]
    proc = subprocess.Popen(args, stdout=subprocess.PIPE,
                            stderr=subprocess.STDOUT, text=True)
    deadline = time.time() + 15
    while time.time() < deadline:
        try:
            urllib.request.urlopen(f"http://127.0.0.1:{ui_port}/", timeout=0.3)
            break
        except OSError:
            if proc.poll() is not None:
                pytest.fail(f"server died: {proc.stdout.read()}")
            time.sleep(0.2)
    else:
        proc.kill()
        pytest.fail("bridge never came up")
    yield ui_port
    proc.terminate()
    proc.wait(timeout=5)


def test_console_assets_served(ui_stack):
    if not ASSETS.is_dir():
        pytest.skip("frontend not built")
    html = urllib.request.urlopen(
        f"http://127.0.0.1:{ui_stack}/", timeout=2).read().decode()
    assert "pneutwin console" in html
    js = urllib.request.urlopen(
        f"http://127.0.0.1:{ui_stack}/main.js", timeout=2).read().decode()
    assert "set_target" in js


def test_slider_readback_within_budget(ui_stack):
    async def scenario():
        uri = f"ws://127.0.0.1:{ui_stack}/ws"
        async with websockets.connect(uri) as ws:
            hello = json.loads(await ws.recv())
            assert hello["type"] == "hello"
            assert hello["channels"] == 4
            # wait for the stream to be live before timing
            while json.loads(await ws.recv())["type"] != "telemetry":
                pass
            start = time.monotonic()
            await ws.send(json.dumps(
                {"type": "set_target", "channel": 2, "kpa": 20.0}))
            while True:
                message = json.loads(await asyncio.wait_for(ws.recv(), 2.0))
                if message["type"] == "telemetry" \
                        and message["channels"][2]["t"] == 20.0:
                    return time.monotonic() - start

    elapsed = asyncio.run(scenario())
    assert elapsed < 0.2, f"target readback took {elapsed * 1000:.0f} ms"


def test_disturbance_button_shows_transient(ui_stack):
    async def scenario():
        uri = f"ws://127.0.0.1:{ui_stack}/ws"
        async with websockets.connect(uri) as ws:
            await ws.recv()  # hello
            await ws.send(json.dumps(
                {"type": "set_target", "channel": 0, "kpa": 30.0}))
            deadline = time.monotonic() + 20
            while time.monotonic() < deadline:
                message = json.loads(await asyncio.wait_for(ws.recv(), 2.0))
                if message["type"] == "telemetry" \
                        and abs(message["channels"][0]["p"] - 30.0) < 0.1:
                    break
            await ws.send(json.dumps(
                {"type": "inject_disturbance", "channel": 0,
                 "flow_lpm": -0.5, "duration_s": 0.5}))
            peak = 0.0
            deadline = time.monotonic() + 5
            while time.monotonic() < deadline:
                message = json.loads(await asyncio.wait_for(ws.recv(), 2.0))
                if message["type"] == "telemetry":
                    peak = max(peak, abs(message["channels"][0]["p"] - 30.0))
                    if peak > 0.5:
                        return peak
            return peak

    peak = asyncio.run(scenario())
    assert peak > 0.5, f"no visible transient (peak deviation {peak:.3f} kPa)"
