"""WebSocket bridge between the binary device protocol and the browser console.

Relays telemetry snapshots as JSON text at the device's decimated rate
and translates console commands into protocol frames.  Messages:

  server -> client
    {"type": "hello", "channels": N, "envelope": [lo, hi], "dt": 0.02,
     "protocol_version": 1}
    {"type": "telemetry", "tick": T,
     "channels": [{"p": kPa, "t": kPa, "q": L/min, "di": duty, "dd": duty,
                   "v": 0|1, "en": bool}, ...]}
    {"type": "ack", "req": <incoming type>}
    {"type": "error", "req": <incoming type>, "message": str}

  client -> server
    {"type": "set_target", "channel": i, "kpa": x}
    {"type": "set_all", "targets": [x, ...]}
    {"type": "enable"|"disable", "channel": i}
    {"type": "inject_disturbance", "channel": i, "flow_lpm": x,
     "duration_s": x}
    {"type": "set_leak", "channel": i, "coefficient": x, "duration_s": x}

The static console assets are served at ``/`` when an assets directory
is configured; otherwise a plain status page is returned.
"""

from __future__ import annotations

import asyncio
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from .client import ClientError, DeviceReportedError, PneuClient, Timeout

DEFAULT_ENVELOPE = (-50.0, 80.0)

_PLACEHOLDER = """<!doctype html>
<title>pneutwin bridge</title>
<p>Bridge is up. Console assets were not configured; connect a WebSocket
client to <code>/ws</code>.</p>
"""


def snapshot_message(snapshot) -> dict:
    return {
        "type": "telemetry",
        "tick": snapshot.tick,
        "channels": [
            {
                "p": ch.pressure_kpa,
                "t": ch.target_kpa,
                "q": ch.flow_lpm,
                "di": round(ch.inflate_counts / 4096.0, 6),
                "dd": round(ch.deflate_counts / 4096.0, 6),
                "v": int(ch.valve),
                "en": ch.enabled,
            }
            for ch in snapshot.channels
        ],
    }


def _handle_command(client: PneuClient, message: dict) -> dict:
    kind = message.get("type")
    try:
        if kind == "set_target":
            client.set_pressure(int(message["channel"]), float(message["kpa"]))
        elif kind == "set_all":
            client.set_all([float(x) for x in message["targets"]])
        elif kind == "enable":
            client.enable(int(message["channel"]))
        elif kind == "disable":
            client.disable(int(message["channel"]))
        elif kind == "inject_disturbance":
            client.inject_disturbance(int(message["channel"]),
                                      float(message["flow_lpm"]),
                                      float(message["duration_s"]))
        elif kind == "set_leak":
            client.set_leak(int(message["channel"]),
                            float(message["coefficient"]),
                            float(message.get("duration_s", 0.0)))
        else:
            return {"type": "error", "req": kind,
                    "message": f"unknown message type {kind!r}"}
    except (DeviceReportedError, ClientError) as exc:
        return {"type": "error", "req": kind, "message": str(exc)}
    except (KeyError, TypeError, ValueError) as exc:
        return {"type": "error", "req": kind, "message": f"bad message: {exc}"}
    return {"type": "ack", "req": kind}


def create_bridge_app(client: PneuClient, assets_dir: str | Path | None = None,
                      envelope=DEFAULT_ENVELOPE) -> FastAPI:
    app = FastAPI()

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        info = await asyncio.to_thread(client.ping)
        await websocket.send_json({
            "type": "hello",
            "channels": info.channel_count,
            "envelope": list(envelope),
            "dt": 0.02,
            "protocol_version": info.protocol_version,
        })
        subscription = await asyncio.to_thread(client.stream_telemetry)
        stop = asyncio.Event()

        async def pump():
            while not stop.is_set():
                try:
                    snapshot = await asyncio.to_thread(subscription.get, 0.25)
                    # Coalesce to the freshest snapshot: the console renders
                    # latest state, so a backlog is skipped, never replayed.
                    while True:
                        fresher = subscription.get_nowait()
                        if fresher is None:
                            break
                        snapshot = fresher
                except Timeout:
                    continue
                except ClientError:
                    break
                await websocket.send_json(snapshot_message(snapshot))

        pump_task = asyncio.create_task(pump())
        try:
            while True:
                message = await websocket.receive_json()
                reply = await asyncio.to_thread(_handle_command, client, message)
                await websocket.send_json(reply)
        except WebSocketDisconnect:
            pass
        finally:
            stop.set()
            subscription.close()
            pump_task.cancel()

    if assets_dir is not None and Path(assets_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(assets_dir), html=True),
                  name="console")
    else:
        @app.get("/")
        async def index() -> HTMLResponse:
            return HTMLResponse(_PLACEHOLDER)

    return app


def serve_ui_bridge(client: PneuClient, port: int, host: str = "127.0.0.1",
                    assets_dir: str | Path | None = None) -> None:
    """Run the bridge until interrupted.  Raises OSError if the port is taken."""
    import uvicorn

    app = create_bridge_app(client, assets_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
