"""Per-channel PID pressure regulation and pump/valve actuation mapping.

The control effort is a signed fraction: positive drives the inflation
pump, negative the deflation pump, each through a 12-bit PWM duty.  A
deadband suppresses actuation near the target and a hysteresis band
keeps the binary valve from chattering.  Everything here is a pure
function of its inputs, evaluated once per 20 ms tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .plant import Valve

TICK_DT_S = 0.02  # 50 Hz controller tick
DUTY_STEPS = 4096  # 12-bit PWM resolution
MAX_DUTY_COUNTS = DUTY_STEPS - 1


@dataclass(frozen=True)
class PidGains:
    """PID gains plus output and anti-windup limits.

    Defaults are calibrated against the default plant so a 0 -> 30 kPa
    step settles in under a second with small overshoot; they live in
    config, not code paths.
    """

    kp: float = 0.2
    ki: float = 0.3
    kd: float = 0.002
    output_limit: float = 1.0
    integral_limit: float = 3.0  # kPa*s clamp on the accumulator

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ValueError("gains must be >= 0")
        if not 0.0 < self.output_limit <= 1.0:
            raise ValueError("output_limit must be in (0, 1]")
        if self.integral_limit <= 0:
            raise ValueError("integral_limit must be > 0")


@dataclass
class PidState:
    """Controller memory carried between ticks."""

    integral: float = 0.0
    prev_error: float = 0.0
    saturated: bool = False

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = 0.0
        self.saturated = False

    def copy(self) -> "PidState":
        return PidState(self.integral, self.prev_error, self.saturated)


@dataclass(frozen=True)
class ActuationCommand:
    """Firmware output to the hardware: two PWM duties and the valve.

    Duties are stored as integer PWM counts so they are exact multiples
    of 1/4096; at most one of the two is nonzero.
    """

    inflate_counts: int = 0
    deflate_counts: int = 0
    valve: Valve = Valve.INFLATE_PATH

    def __post_init__(self):
        if not 0 <= self.inflate_counts <= MAX_DUTY_COUNTS:
            raise ValueError("inflate_counts out of range")
        if not 0 <= self.deflate_counts <= MAX_DUTY_COUNTS:
            raise ValueError("deflate_counts out of range")
        if self.inflate_counts and self.deflate_counts:
            raise ValueError("duties are mutually exclusive")
        if self.inflate_counts and self.valve != Valve.INFLATE_PATH:
            raise ValueError("inflate duty requires inflate path")
        if self.deflate_counts and self.valve != Valve.DEFLATE_PATH:
            raise ValueError("deflate duty requires deflate path")

    @property
    def inflate_duty(self) -> float:
        return self.inflate_counts / 4096.0

    @property
    def deflate_duty(self) -> float:
        return self.deflate_counts / 4096.0


ZERO_COMMAND = ActuationCommand()


@dataclass(frozen=True)
class ChannelControlConfig:
    """Per-channel regulation settings."""

    gains: PidGains = field(default_factory=PidGains)
    deadband_kpa: float = 0.05
    valve_hysteresis_kpa: float = 0.2
    enabled: bool = True

    def __post_init__(self):
        if self.deadband_kpa < 0:
            raise ValueError("deadband must be >= 0")
        if self.valve_hysteresis_kpa < self.deadband_kpa:
            raise ValueError("valve hysteresis must be >= deadband")


def quantize_duty(magnitude: float) -> int:
    """Map a duty fraction in [0, 1] to PWM counts; 1.0 maps to 4095."""
    counts = math.floor(magnitude * 4096.0 + 0.5)
    if counts > MAX_DUTY_COUNTS:
        counts = MAX_DUTY_COUNTS
    elif counts < 0:
        counts = 0
    return counts


def pid_step(
    state: PidState,
    gains: PidGains,
    target_kpa: float,
    measured_kpa: float,
    dt: float,
) -> tuple[float, PidState]:
    """One PID evaluation; returns the clamped effort and the new state.

    Anti-windup is clamping plus conditional integration: the integral
    accumulator is clamped to +/-integral_limit and is frozen at its
    previous value whenever the output saturates in the direction the
    current error would deepen.  The derivative acts on the error.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    # Mirrored in the compiled kernel; keep expression order unchanged.
    error = target_kpa - measured_kpa
    integral = state.integral + error * dt
    if integral > gains.integral_limit:
        integral = gains.integral_limit
    elif integral < -gains.integral_limit:
        integral = -gains.integral_limit
    derivative = (error - state.prev_error) / dt
    u_raw = gains.kp * error + gains.ki * integral + gains.kd * derivative
    u = u_raw
    if u > gains.output_limit:
        u = gains.output_limit
    elif u < -gains.output_limit:
        u = -gains.output_limit
    saturated = u != u_raw
    if saturated and ((u_raw > 0.0) == (error > 0.0)) and error != 0.0:
        integral = state.integral  # freeze: error would deepen saturation
    return u, PidState(integral=integral, prev_error=error, saturated=saturated)


def map_actuation(
    u: float,
    error_kpa: float,
    current_valve: Valve,
    config: ChannelControlConfig,
) -> ActuationCommand:
    """Map the signed effort onto pump duties and the binary valve.

    Inside the deadband both duties are zero and the valve holds.  The
    valve only flips once the error magnitude exceeds the hysteresis band
    in the opposite direction; until then the command coasts (zero duty,
    valve held) rather than chatter.
    """
    if not -1.0 <= u <= 1.0:
        raise ValueError("|u| must be <= 1")
    # Mirrored in the compiled kernel; keep logic order unchanged.
    abs_error = -error_kpa if error_kpa < 0.0 else error_kpa
    if abs_error < config.deadband_kpa or u == 0.0:
        return ActuationCommand(valve=current_valve)
    if u > 0.0:
        if current_valve != Valve.INFLATE_PATH and error_kpa <= config.valve_hysteresis_kpa:
            return ActuationCommand(valve=current_valve)
        return ActuationCommand(inflate_counts=quantize_duty(u), valve=Valve.INFLATE_PATH)
    if current_valve != Valve.DEFLATE_PATH and -error_kpa <= config.valve_hysteresis_kpa:
        return ActuationCommand(valve=current_valve)
    return ActuationCommand(deflate_counts=quantize_duty(-u), valve=Valve.DEFLATE_PATH)


def tick_channel(
    measured_kpa: float,
    target_kpa: float,
    config: ChannelControlConfig,
    state: PidState,
    current_valve: Valve,
    dt: float = TICK_DT_S,
) -> tuple[ActuationCommand, PidState]:
    """One 50 Hz control evaluation: PID then actuation mapping.

    A disabled channel emits the zero command and leaves the controller
    state untouched.
    """
    if not config.enabled:
        return ActuationCommand(valve=current_valve), state
    u, new_state = pid_step(state, config.gains, target_kpa, measured_kpa, dt)
    cmd = map_actuation(u, target_kpa - measured_kpa, current_valve, config)
    return cmd, new_state
