"""Pure-Python tick kernel: the fallback backend for the hot loop.

One call advances a single channel by one controller tick: sensor
conditioning, PID, actuation mapping and the RK4 plant step, fused into
scalar arithmetic with no object allocation.  The compiled kernel in
``_kernel.pyx`` is a line-for-line translation; both must evaluate the
same IEEE-754 operations in the same order so results are bit-identical
(the test suite enforces equality against the composed reference
functions in ``plant`` and ``controller``).
"""

from math import floor, isfinite

BACKEND_NAME = "python"

_P_ATM = 101.325
_LPM_TO_MLPS = 1000.0 / 60.0


def channel_tick(
    # plant state
    pressure: float,
    valve: int,
    dist: float,
    # controller state
    integral: float,
    prev_error: float,
    # inputs
    enabled: int,
    target: float,
    noise: float,
    # sensor model
    quant: float,
    sensor_lo: float,
    sensor_hi: float,
    # gains / control config
    kp: float,
    ki: float,
    kd: float,
    out_lim: float,
    int_lim: float,
    deadband: float,
    hysteresis: float,
    # plant params
    inf_max: float,
    inf_stall: float,
    def_max: float,
    def_stall: float,
    leak: float,
    v0: float,
    comp: float,
    dt: float,
):
    """Advance one channel one tick; returns the full post-tick tuple.

    Returns ``(pressure, valve, last_flow, integral, prev_error,
    saturated, inflate_counts, deflate_counts, u, reading)``.
    """
    u = 0.0
    reading = pressure
    saturated = 0
    inf_counts = 0
    def_counts = 0
    new_valve = valve
    new_integral = integral
    new_prev_error = prev_error

    if enabled:
        # Sensor conditioning (see plant.condition_reading).
        value = pressure + noise
        if quant > 0.0:
            value = floor(value / quant + 0.5) * quant
        if value < sensor_lo:
            value = sensor_lo
        elif value > sensor_hi:
            value = sensor_hi
        reading = value

        # PID with clamping + conditional integration (see controller.pid_step).
        error = target - reading
        acc = integral + error * dt
        if acc > int_lim:
            acc = int_lim
        elif acc < -int_lim:
            acc = -int_lim
        derivative = (error - prev_error) / dt
        u_raw = kp * error + ki * acc + kd * derivative
        u = u_raw
        if u > out_lim:
            u = out_lim
        elif u < -out_lim:
            u = -out_lim
        if u != u_raw:
            saturated = 1
            if ((u_raw > 0.0) == (error > 0.0)) and error != 0.0:
                acc = integral
        new_integral = acc
        new_prev_error = error

        # Actuation mapping (see controller.map_actuation).
        abs_error = -error if error < 0.0 else error
        if abs_error < deadband or u == 0.0:
            pass
        elif u > 0.0:
            if valve == 0 or error > hysteresis:
                counts = int(floor(u * 4096.0 + 0.5))
                if counts > 4095:
                    counts = 4095
                elif counts < 0:
                    counts = 0
                inf_counts = counts
                new_valve = 0
        else:
            if valve == 1 or -error > hysteresis:
                counts = int(floor(-u * 4096.0 + 0.5))
                if counts > 4095:
                    counts = 4095
                elif counts < 0:
                    counts = 0
                def_counts = counts
                new_valve = 1

    # RK4 plant step with the command held over dt (see plant.step_plant).
    inf_duty = inf_counts / 4096.0
    def_duty = def_counts / 4096.0
    p = pressure
    k1 = _dpdt(p, new_valve, inf_duty, def_duty,
               inf_max, inf_stall, def_max, def_stall, leak, dist, v0, comp)
    k2 = _dpdt(p + 0.5 * dt * k1, new_valve, inf_duty, def_duty,
               inf_max, inf_stall, def_max, def_stall, leak, dist, v0, comp)
    k3 = _dpdt(p + 0.5 * dt * k2, new_valve, inf_duty, def_duty,
               inf_max, inf_stall, def_max, def_stall, leak, dist, v0, comp)
    k4 = _dpdt(p + dt * k3, new_valve, inf_duty, def_duty,
               inf_max, inf_stall, def_max, def_stall, leak, dist, v0, comp)
    p_new = p + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    if not isfinite(p_new):
        raise ValueError("non-finite pressure")
    last_flow = _net_flow(p_new, new_valve, inf_duty, def_duty,
                          inf_max, inf_stall, def_max, def_stall, leak, dist)

    return (p_new, new_valve, last_flow, new_integral, new_prev_error,
            saturated, inf_counts, def_counts, u, reading)


def _net_flow(pressure, valve, inflate_duty, deflate_duty,
              inf_max, inf_stall, def_max, def_stall, leak, dist):
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


def _dpdt(pressure, valve, inflate_duty, deflate_duty,
          inf_max, inf_stall, def_max, def_stall, leak, dist, v0, comp):
    q_lpm = _net_flow(pressure, valve, inflate_duty, deflate_duty,
                      inf_max, inf_stall, def_max, def_stall, leak, dist)
    q_mls = q_lpm * _LPM_TO_MLPS
    p_abs = _P_ATM + pressure
    return p_abs * q_mls / (v0 + comp * pressure + comp * p_abs)
