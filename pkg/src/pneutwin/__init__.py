"""Software twin of a multi-channel micro-pump pneumatic actuation platform.

Simulated plant, 50 Hz PID pressure control, binary wire protocol,
device server, host client and CLI, plus a WebSocket bridge for the
browser console.
"""

from ._backend import BACKEND_NAME, available_backends
from .controller import (
    TICK_DT_S,
    ActuationCommand,
    ChannelControlConfig,
    PidGains,
    PidState,
    map_actuation,
    pid_step,
    quantize_duty,
    tick_channel,
)
from .device import (
    Channel,
    ChannelOutOfRange,
    Device,
    DeviceError,
    DeviceMode,
    ExternalPlant,
    ScenarioEvent,
    TargetOutOfRange,
    UnknownCommand,
)
from .plant import (
    DEFLATE_CURVE,
    HYBRID_SENSOR,
    INFLATE_CURVE,
    P_ATM_KPA,
    POSITIVE_SENSOR,
    ChamberParams,
    ChannelPlantState,
    DisturbanceWindow,
    NonFiniteState,
    OverlappingDisturbance,
    PlantParams,
    PumpCurve,
    SensorModel,
    Valve,
    net_flow,
    pump_flow,
    read_sensor,
    step_plant,
)
from .telemetry import ChannelTelemetry, TelemetrySnapshot

__version__ = "0.1.0"
