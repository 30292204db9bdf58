# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=False
"""Compiled tick kernel: line-for-line translation of ``_kernel_py``.

Compiled with -ffp-contract=off so every IEEE-754 double operation
matches the pure-Python backend bit-for-bit.  Keep this file in lockstep
with ``_kernel_py.py``; the cross-backend tests compare raw bits.
"""

from libc.math cimport floor, isfinite

BACKEND_NAME = "compiled"

cdef double _P_ATM = 101.325
cdef double _LPM_TO_MLPS = 1000.0 / 60.0


cdef inline double _net_flow(double pressure, int valve,
                             double inflate_duty, double deflate_duty,
                             double inf_max, double inf_stall,
                             double def_max, double def_stall,
                             double leak, double dist) nogil:
    cdef double span, pump
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


cdef inline double _dpdt(double pressure, int valve,
                         double inflate_duty, double deflate_duty,
                         double inf_max, double inf_stall,
                         double def_max, double def_stall,
                         double leak, double dist,
                         double v0, double comp) nogil:
    cdef double q_lpm = _net_flow(pressure, valve, inflate_duty, deflate_duty,
                                  inf_max, inf_stall, def_max, def_stall,
                                  leak, dist)
    cdef double q_mls = q_lpm * _LPM_TO_MLPS
    cdef double p_abs = _P_ATM + pressure
    return p_abs * q_mls / (v0 + comp * pressure + comp * p_abs)


def channel_tick(double pressure, int valve, double dist,
                 double integral, double prev_error,
                 int enabled, double target, double noise,
                 double quant, double sensor_lo, double sensor_hi,
                 double kp, double ki, double kd,
                 double out_lim, double int_lim,
                 double deadband, double hysteresis,
                 double inf_max, double inf_stall,
                 double def_max, double def_stall,
                 double leak, double v0, double comp, double dt):
    """Advance one channel one tick; see ``_kernel_py.channel_tick``."""
    cdef double u = 0.0
    cdef double reading = pressure
    cdef int saturated = 0
    cdef int inf_counts = 0
    cdef int def_counts = 0
    cdef int new_valve = valve
    cdef double new_integral = integral
    cdef double new_prev_error = prev_error
    cdef double value, error, acc, derivative, u_raw, abs_error
    cdef long counts
    cdef double inf_duty, def_duty, p, k1, k2, k3, k4, p_new, last_flow

    if enabled:
        value = pressure + noise
        if quant > 0.0:
            value = floor(value / quant + 0.5) * quant
        if value < sensor_lo:
            value = sensor_lo
        elif value > sensor_hi:
            value = sensor_hi
        reading = value

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

        abs_error = -error if error < 0.0 else error
        if abs_error < deadband or u == 0.0:
            pass
        elif u > 0.0:
            if valve == 0 or error > hysteresis:
                counts = <long>floor(u * 4096.0 + 0.5)
                if counts > 4095:
                    counts = 4095
                elif counts < 0:
                    counts = 0
                inf_counts = <int>counts
                new_valve = 0
        else:
            if valve == 1 or -error > hysteresis:
                counts = <long>floor(-u * 4096.0 + 0.5)
                if counts > 4095:
                    counts = 4095
                elif counts < 0:
                    counts = 0
                def_counts = <int>counts
                new_valve = 1

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
