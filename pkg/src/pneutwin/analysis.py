"""Offline step-response analysis over recorded arrays.

Deliberately a second, array-based implementation of the metrics the
trajectory runner computes incrementally: recomputing a report from a
recording must agree with the live run, and keeping the code paths
separate makes that check meaningful.

Definitions (shared with the runner):
  settling band   +/- 2% of the step magnitude with a 0.2 kPa floor
  settling time   time from the step until the response last leaves the
                  band (one sample period past the final excursion)
  overshoot       excursion beyond the target in the step direction
  steady-state    mean |target - pressure| over the final 25% of the hold
  oscillation     summed |increment| of the tracking error at increment
                  sign reversals (0.01 kPa threshold), per second
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

SETTLE_BAND_FRACTION = 0.02
SETTLE_BAND_FLOOR_KPA = 0.2
OSCILLATION_THRESHOLD_KPA = 0.01


def settling_band(step_magnitude_kpa: float) -> float:
    return max(SETTLE_BAND_FRACTION * abs(step_magnitude_kpa),
               SETTLE_BAND_FLOOR_KPA)


def settle_time(times_s, pressures, target_kpa, step_magnitude_kpa, t0=None):
    """Seconds from the step until the band holds; None if it never does.

    ``t0`` is the step instant; recordings usually begin one sample after
    it, so it defaults to one sample period before the first stamp.
    """
    times_s = np.asarray(times_s)
    pressures = np.asarray(pressures)
    if t0 is None:
        t0 = times_s[0] - (times_s[1] - times_s[0] if len(times_s) > 1 else 0.0)
    band = settling_band(step_magnitude_kpa)
    outside = np.abs(pressures - target_kpa) > band
    if not outside.any():
        return 0.0
    last = np.flatnonzero(outside)[-1]
    if last == len(pressures) - 1:
        return None
    return float(times_s[last + 1] - t0)


def overshoot(pressures, target_kpa, step_sign: float) -> float:
    pressures = np.asarray(pressures)
    if step_sign > 0:
        return float(max(0.0, pressures.max() - target_kpa))
    if step_sign < 0:
        return float(max(0.0, target_kpa - pressures.min()))
    return float(np.abs(pressures - target_kpa).max())


def steady_state_error(pressures, target_kpa) -> float:
    pressures = np.asarray(pressures)
    tail = pressures[-max(1, len(pressures) // 4):]
    return float(np.abs(tail - target_kpa).mean())


def oscillation_index(times_s, pressures, targets, t0=None) -> float:
    """Tracking-error zigzag amplitude per second over the window."""
    times_s = np.asarray(times_s)
    error = np.asarray(targets) - np.asarray(pressures)
    if len(error) < 3:
        return 0.0
    if t0 is None:
        t0 = times_s[0] - (times_s[1] - times_s[0])
    d = np.diff(error)
    significant = np.abs(d) > OSCILLATION_THRESHOLD_KPA
    sign = np.sign(d)
    reversal = (sign[1:] * sign[:-1] < 0) & significant[1:] & significant[:-1]
    total = float(np.abs(d[1:][reversal]).sum())
    span = float(times_s[-1] - t0)
    return total / span if span > 0 else 0.0


@dataclass(frozen=True)
class StepAnalysis:
    target_kpa: float
    step_kpa: float
    settle_time_s: float | None
    overshoot_kpa: float
    steady_state_error_kpa: float
    oscillation_index: float


def analyze_step(times_s, pressures, targets, initial_kpa, t0=None) -> StepAnalysis:
    """Full metric set for one hold window of a single channel."""
    target = float(np.asarray(targets)[-1])
    step = target - initial_kpa
    return StepAnalysis(
        target_kpa=target,
        step_kpa=step,
        settle_time_s=settle_time(times_s, pressures, target, step, t0),
        overshoot_kpa=overshoot(pressures, target, np.sign(step)),
        steady_state_error_kpa=steady_state_error(pressures, target),
        oscillation_index=oscillation_index(times_s, pressures, targets, t0),
    )


def read_recording(path):
    """Load a recording CSV into per-channel column arrays.

    Returns ``(ticks, channels)`` where ``channels[i]`` is a dict of
    numpy arrays keyed 'time', 'pressure', 'target', 'flow'.
    """
    per_channel: dict[int, dict[str, list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ch = int(row["channel"])
            cols = per_channel.setdefault(
                ch, {"time": [], "tick": [], "pressure": [], "target": [],
                     "flow": []})
            cols["time"].append(float(row["wall_time"]))
            cols["tick"].append(int(row["sim_tick"]))
            cols["pressure"].append(float(row["pressure"]))
            cols["target"].append(float(row["target"]))
            cols["flow"].append(float(row["flow"]))
    channels = {}
    ticks = None
    for ch, cols in sorted(per_channel.items()):
        arrays = {key: np.asarray(vals) for key, vals in cols.items()}
        channels[ch] = arrays
        if ticks is None:
            ticks = arrays["tick"]
    return ticks, channels
