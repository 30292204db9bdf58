"""Pneumatic channel physics: micro-pumps, valve, compliant chamber, leak.

One channel is a closed chamber fed through a binary valve by two
micro-pumps (one inflates, one deflates).  Pressure evolves by an
isothermal ideal-gas balance and is integrated with classic RK4 at the
controller tick.  All quantities are gauge kPa, L/min, mL and seconds;
unit conversion happens only at the protocol boundary.

The arithmetic here is the reference for the compiled kernel: both
backends evaluate the same expressions in the same order so that
trajectories are bit-identical regardless of which one is active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

P_ATM_KPA = 101.325
LPM_TO_MLPS = 1000.0 / 60.0  # L/min -> mL/s


class NonFiniteState(RuntimeError):
    """Integration produced NaN/Inf, which signals bad parameters."""


class OverlappingDisturbance(RuntimeError):
    """A disturbance window is already active on the channel."""


class Valve(IntEnum):
    """Binary solenoid valve position: which pump is plumbed to the chamber."""

    INFLATE_PATH = 0
    DEFLATE_PATH = 1


@dataclass(frozen=True)
class PumpCurve:
    """Linearized micro-pump curve: flow falls off with back-pressure.

    ``max_flow_lpm`` is the free-flow rating at zero gauge pressure and
    ``stall_kpa`` the pressure at which flow reaches zero.  Inflation
    pumps stall at positive pressure, deflation pumps at negative.
    """

    max_flow_lpm: float = 1.7
    stall_kpa: float = 80.0

    def __post_init__(self):
        if self.max_flow_lpm <= 0:
            raise ValueError("max_flow_lpm must be > 0")
        if self.stall_kpa == 0:
            raise ValueError("stall_kpa must be nonzero")


INFLATE_CURVE = PumpCurve(max_flow_lpm=1.7, stall_kpa=80.0)
DEFLATE_CURVE = PumpCurve(max_flow_lpm=1.7, stall_kpa=-50.0)


@dataclass(frozen=True)
class ChamberParams:
    """Elastic chamber: rest volume plus pressure-linear compliance growth."""

    rest_volume_ml: float = 25.0
    compliance_ml_per_kpa: float = 0.25
    leak_coefficient: float = 0.0  # (L/min) per kPa of gauge pressure

    def __post_init__(self):
        if self.rest_volume_ml <= 0:
            raise ValueError("rest_volume_ml must be > 0")
        if self.compliance_ml_per_kpa < 0:
            raise ValueError("compliance_ml_per_kpa must be >= 0")
        if self.leak_coefficient < 0:
            raise ValueError("leak_coefficient must be >= 0")


@dataclass(frozen=True)
class PlantParams:
    """Full parameter set for one simulated channel."""

    inflate: PumpCurve = INFLATE_CURVE
    deflate: PumpCurve = DEFLATE_CURVE
    chamber: ChamberParams = ChamberParams()

    def __post_init__(self):
        if self.inflate.stall_kpa <= 0:
            raise ValueError("inflation pump must stall at positive pressure")
        if self.deflate.stall_kpa >= 0:
            raise ValueError("deflation pump must stall at negative pressure")
        # Effective volume must stay positive over the reachable range.
        c = self.chamber.compliance_ml_per_kpa
        v_low = self.chamber.rest_volume_ml + c * self.deflate.stall_kpa
        if v_low + c * (P_ATM_KPA + self.deflate.stall_kpa) <= 0:
            raise ValueError("effective volume not positive over pressure range")

    @property
    def pressure_range(self) -> tuple[float, float]:
        return (self.deflate.stall_kpa, self.inflate.stall_kpa)


@dataclass
class ChannelPlantState:
    """Instantaneous state of one simulated channel."""

    pressure_kpa: float = 0.0
    valve: Valve = Valve.INFLATE_PATH
    last_flow_lpm: float = 0.0
    disturbance_flow_lpm: float = 0.0

    def copy(self) -> "ChannelPlantState":
        return replace(self)


@dataclass(frozen=True)
class SensorModel:
    """Pressure sensor: clamped range, count quantization, Gaussian noise."""

    range_kpa: tuple[float, float] = (-103.4, 103.4)
    quantization_kpa: float = 0.0
    noise_std_kpa: float = 0.0

    def __post_init__(self):
        if self.range_kpa[0] >= self.range_kpa[1]:
            raise ValueError("sensor range must be ordered")
        if self.quantization_kpa < 0 or self.noise_std_kpa < 0:
            raise ValueError("quantization and noise must be >= 0")


# Default presets mirror the two stocked sensor types (0..15 psi, +/-15 psi).
POSITIVE_SENSOR = SensorModel(range_kpa=(0.0, 103.4))
HYBRID_SENSOR = SensorModel(range_kpa=(-103.4, 103.4))


@dataclass(frozen=True)
class DisturbanceWindow:
    """Externally injected flow held on a channel for a simulated interval."""

    flow_lpm: float
    start_s: float
    duration_s: float

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s

    def active_at(self, t_s: float) -> bool:
        return self.start_s <= t_s < self.end_s


def pump_flow(curve: PumpCurve, duty: float, pressure_kpa: float) -> float:
    """Pump delivery magnitude in L/min at the given duty and back-pressure.

    Linear in duty and in pressure up to the stall point; capped at the
    free-flow rating so the magnitude never exceeds ``max_flow_lpm``.
    """
    if not 0.0 <= duty <= 1.0:
        raise ValueError("duty must be in [0, 1]")
    span = 1.0 - pressure_kpa / curve.stall_kpa
    if span < 0.0:
        span = 0.0
    elif span > 1.0:
        span = 1.0
    return duty * curve.max_flow_lpm * span


def net_flow(
    state: ChannelPlantState,
    cmd,
    params: PlantParams,
) -> float:
    """Signed L/min into the chamber for the current valve path.

    Pump contribution follows the valve; leak drains toward atmosphere at
    ``leak_coefficient * pressure``; the disturbance flow adds as-is.
    """
    return _net_flow_lpm(
        state.pressure_kpa,
        int(cmd.valve),
        cmd.inflate_counts / 4096.0,
        cmd.deflate_counts / 4096.0,
        params.inflate.max_flow_lpm,
        params.inflate.stall_kpa,
        params.deflate.max_flow_lpm,
        params.deflate.stall_kpa,
        params.chamber.leak_coefficient,
        state.disturbance_flow_lpm,
    )


def _net_flow_lpm(
    pressure: float,
    valve: int,
    inflate_duty: float,
    deflate_duty: float,
    inf_max: float,
    inf_stall: float,
    def_max: float,
    def_stall: float,
    leak: float,
    dist: float,
) -> float:
    # Mirrored in the compiled kernel; keep expression order unchanged.
    if valve == 0:
        span = 1.0 - pressure / inf_stall
        if span < 0.0:
            span = 0.0
        elif span > 1.0:
            span = 1.0
        pump = inflate_duty * inf_max * span
        return pump - leak * pressure + dist
    span = 1.0 - pressure / def_stall
    if span < 0.0:
        span = 0.0
    elif span > 1.0:
        span = 1.0
    pump = deflate_duty * def_max * span
    return -pump - leak * pressure + dist


def _dpdt(
    pressure: float,
    valve: int,
    inflate_duty: float,
    deflate_duty: float,
    inf_max: float,
    inf_stall: float,
    def_max: float,
    def_stall: float,
    leak: float,
    dist: float,
    v0: float,
    comp: float,
) -> float:
    # Isothermal ideal-gas balance with pressure-linear chamber volume.
    # Mirrored in the compiled kernel; keep expression order unchanged.
    q_lpm = _net_flow_lpm(
        pressure, valve, inflate_duty, deflate_duty,
        inf_max, inf_stall, def_max, def_stall, leak, dist,
    )
    q_mls = q_lpm * LPM_TO_MLPS
    p_abs = P_ATM_KPA + pressure
    return p_abs * q_mls / (v0 + comp * pressure + comp * p_abs)


def step_plant(
    state: ChannelPlantState,
    cmd,
    params: PlantParams,
    dt: float,
) -> ChannelPlantState:
    """Advance one channel by ``dt`` with the command held constant (RK4).

    Deterministic: identical inputs give bit-identical outputs.  Raises
    :class:`NonFiniteState` if the integration produces NaN/Inf.
    """
    if not 0.0 < dt <= 0.02:
        raise ValueError("dt must be in (0, 0.02] s")
    valve = int(cmd.valve)
    inflate_duty = cmd.inflate_counts / 4096.0
    deflate_duty = cmd.deflate_counts / 4096.0
    args = (
        valve, inflate_duty, deflate_duty,
        params.inflate.max_flow_lpm, params.inflate.stall_kpa,
        params.deflate.max_flow_lpm, params.deflate.stall_kpa,
        params.chamber.leak_coefficient, state.disturbance_flow_lpm,
        params.chamber.rest_volume_ml, params.chamber.compliance_ml_per_kpa,
    )
    p = state.pressure_kpa
    k1 = _dpdt(p, *args)
    k2 = _dpdt(p + 0.5 * dt * k1, *args)
    k3 = _dpdt(p + 0.5 * dt * k2, *args)
    k4 = _dpdt(p + dt * k3, *args)
    p_new = p + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    if not math.isfinite(p_new):
        raise NonFiniteState(f"pressure became non-finite (from {p!r})")
    flow = _net_flow_lpm(p_new, *args[:9])
    return ChannelPlantState(
        pressure_kpa=p_new,
        valve=Valve(valve),
        last_flow_lpm=flow,
        disturbance_flow_lpm=state.disturbance_flow_lpm,
    )


def read_sensor(pressure_kpa: float, model: SensorModel, rng=None) -> float:
    """Sensor reading: true pressure plus noise, quantized and range-clamped.

    ``rng`` is a ``numpy.random.Generator``; pass a seeded one for
    reproducible noise.  With zero noise and zero quantization the reading
    equals the true pressure exactly (up to the range clamp).
    """
    value = pressure_kpa
    if model.noise_std_kpa > 0.0:
        if rng is None:
            raise ValueError("noisy sensor requires an rng")
        value = value + rng.normal(0.0, model.noise_std_kpa)
    return condition_reading(value, model.quantization_kpa,
                             model.range_kpa[0], model.range_kpa[1])


def condition_reading(value: float, quantization: float, lo: float, hi: float) -> float:
    # Mirrored in the compiled kernel; keep expression order unchanged.
    if quantization > 0.0:
        value = math.floor(value / quantization + 0.5) * quantization
    if value < lo:
        value = lo
    elif value > hi:
        value = hi
    return value
