"""Plain-text configuration and scenario script loading.

Config files are flat ``key = value`` lines ('#' starts a comment).
Every key has a default; per-channel overrides use a ``channel.<i>.``
prefix, e.g. ``channel.3.leak_coefficient = 0.02``.  The full schema:

    channels                 int, 1..24          (default 10)
    rest_volume_ml           float > 0           (25.0)
    compliance_ml_per_kpa    float >= 0          (0.25)
    leak_coefficient         float >= 0          (0.0)
    inflate_max_flow_lpm     float > 0           (1.7)
    inflate_stall_kpa        float > 0           (80.0)
    deflate_max_flow_lpm     float > 0           (1.7)
    deflate_stall_kpa        float < 0           (-50.0)
    kp, ki, kd               floats >= 0         (0.2, 0.3, 0.002)
    output_limit             0 < float <= 1      (1.0)
    integral_limit           float > 0           (3.0)
    deadband_kpa             float >= 0          (0.05)
    valve_hysteresis_kpa     float >= deadband   (0.2)
    sensor_min_kpa           float               (-103.4)
    sensor_max_kpa           float               (103.4)
    sensor_quantization_kpa  float >= 0          (0.0)
    sensor_noise_std_kpa     float >= 0          (0.0)

Scenario scripts are JSON lists of events::

    [{"time_s": 5.0, "channel": 0, "kind": "disturbance",
      "value": -0.5, "duration_s": 1.0},
     {"time_s": 0.0, "channel": 2, "kind": "leak", "value": 0.02}]

``kind`` is "disturbance" (value in L/min, duration required) or "leak"
(value in (L/min)/kPa; zero/absent duration means permanent).
"""

from __future__ import annotations

import json
from pathlib import Path

from .controller import ChannelControlConfig, PidGains
from .device import Channel, Device, ScenarioEvent
from .plant import ChamberParams, PlantParams, PumpCurve, SensorModel

_DEFAULTS: dict[str, float] = {
    "channels": 10,
    "rest_volume_ml": 25.0,
    "compliance_ml_per_kpa": 0.25,
    "leak_coefficient": 0.0,
    "inflate_max_flow_lpm": 1.7,
    "inflate_stall_kpa": 80.0,
    "deflate_max_flow_lpm": 1.7,
    "deflate_stall_kpa": -50.0,
    "kp": 0.2,
    "ki": 0.3,
    "kd": 0.002,
    "output_limit": 1.0,
    "integral_limit": 3.0,
    "deadband_kpa": 0.05,
    "valve_hysteresis_kpa": 0.2,
    "sensor_min_kpa": -103.4,
    "sensor_max_kpa": 103.4,
    "sensor_quantization_kpa": 0.0,
    "sensor_noise_std_kpa": 0.0,
}


class ConfigError(ValueError):
    """Malformed config or scenario file."""


def parse_config(text: str) -> tuple[dict[str, float], dict[int, dict[str, float]]]:
    """Parse config text into (global values, per-channel overrides)."""
    values = dict(_DEFAULTS)
    overrides: dict[int, dict[str, float]] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        target = values
        if key.startswith("channel."):
            parts = key.split(".", 2)
            if len(parts) != 3 or not parts[1].isdigit():
                raise ConfigError(f"line {lineno}: bad channel override {key!r}")
            index = int(parts[1])
            key = parts[2]
            target = overrides.setdefault(index, {})
        if key not in _DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key == "channels" and target is not values:
            raise ConfigError(f"line {lineno}: 'channels' is not per-channel")
        try:
            target[key] = float(raw_value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad number {raw_value!r}") from exc
    return values, overrides


def load_config(path: str | Path) -> tuple[dict[str, float], dict[int, dict[str, float]]]:
    return parse_config(Path(path).read_text())


def _build_channel(values: dict[str, float]) -> Channel:
    return Channel(
        params=PlantParams(
            inflate=PumpCurve(values["inflate_max_flow_lpm"],
                              values["inflate_stall_kpa"]),
            deflate=PumpCurve(values["deflate_max_flow_lpm"],
                              values["deflate_stall_kpa"]),
            chamber=ChamberParams(
                rest_volume_ml=values["rest_volume_ml"],
                compliance_ml_per_kpa=values["compliance_ml_per_kpa"],
                leak_coefficient=values["leak_coefficient"],
            ),
        ),
        control=ChannelControlConfig(
            gains=PidGains(
                kp=values["kp"], ki=values["ki"], kd=values["kd"],
                output_limit=values["output_limit"],
                integral_limit=values["integral_limit"],
            ),
            deadband_kpa=values["deadband_kpa"],
            valve_hysteresis_kpa=values["valve_hysteresis_kpa"],
        ),
        sensor=SensorModel(
            range_kpa=(values["sensor_min_kpa"], values["sensor_max_kpa"]),
            quantization_kpa=values["sensor_quantization_kpa"],
            noise_std_kpa=values["sensor_noise_std_kpa"],
        ),
    )


def build_device(
    config_path: str | Path | None = None,
    *,
    channel_count: int | None = None,
    seed: int = 0,
    dt: float = 0.02,
) -> Device:
    """Create a simulated device from a config file (or all defaults)."""
    if config_path is not None:
        values, overrides = load_config(config_path)
    else:
        values, overrides = dict(_DEFAULTS), {}
    count = channel_count if channel_count is not None else int(values["channels"])
    bad = [i for i in overrides if not 0 <= i < count]
    if bad:
        raise ConfigError(f"channel overrides out of range: {bad}")
    channels = []
    for i in range(count):
        merged = dict(values)
        merged.update(overrides.get(i, {}))
        try:
            channels.append(_build_channel(merged))
        except ValueError as exc:
            raise ConfigError(f"channel {i}: {exc}") from exc
    return Device(channels=channels, seed=seed, dt=dt)


def load_scenario(path: str | Path) -> list[ScenarioEvent]:
    """Load a JSON scenario script into scheduled events."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
    return parse_scenario(data)


def parse_scenario(data) -> list[ScenarioEvent]:
    if not isinstance(data, list):
        raise ConfigError("scenario must be a JSON list of events")
    events = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise ConfigError(f"event {i}: not an object")
        try:
            kind = entry["kind"]
            time_s = float(entry["time_s"])
            channel = int(entry["channel"])
            value = float(entry["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"event {i}: {exc}") from exc
        duration = float(entry.get("duration_s", 0.0))
        if kind not in ("disturbance", "leak"):
            raise ConfigError(f"event {i}: unknown kind {kind!r}")
        if kind == "disturbance" and duration <= 0:
            raise ConfigError(f"event {i}: disturbance needs duration_s > 0")
        if time_s < 0:
            raise ConfigError(f"event {i}: negative time_s")
        events.append(ScenarioEvent(time_s=time_s, channel=channel, kind=kind,
                                    value=value, duration_s=duration))
    return events
