"""Scripted pressure trajectories and their response reports.

A trajectory is an ordered list of setpoint changes (single channel or
all channels) issued at scheduled, tick-quantized times against any
session exposing the client command surface (network client adapter or
the in-process harness).  The runner collects telemetry and scores each
step: settling time into the +/-2% band (0.2 kPa floor), overshoot,
steady-state error over the final quarter of the hold, and an
oscillation index.  The arithmetic here is intentionally incremental and
separate from :mod:`pneutwin.analysis`, which recomputes the same
definitions from recordings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_ENVELOPE = (-50.0, 80.0)
SETTLE_BAND_FRACTION = 0.02
SETTLE_BAND_FLOOR_KPA = 0.2
OSCILLATION_THRESHOLD_KPA = 0.01


class EnvelopeViolation(ValueError):
    """Trajectory target outside the device pressure envelope."""


@dataclass(frozen=True)
class TrajectoryStep:
    """One scheduled setpoint: ``channel`` None addresses all channels."""

    time_s: float
    target_kpa: float
    channel: int | None = None


@dataclass
class Trajectory:
    steps: list[TrajectoryStep]
    loop_count: int = 1
    final_hold_s: float = 3.0

    def __post_init__(self):
        if not self.steps:
            raise ValueError("trajectory needs at least one step")
        if self.loop_count < 1:
            raise ValueError("loop_count must be >= 1")
        times = [s.time_s for s in self.steps]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("step times must be non-decreasing")
        if times[0] < 0:
            raise ValueError("step times must be >= 0")

    @property
    def loop_duration_s(self) -> float:
        return self.steps[-1].time_s + self.final_hold_s

    def validate_targets(self, envelope=DEFAULT_ENVELOPE) -> None:
        lo, hi = envelope
        for step in self.steps:
            if not lo <= step.target_kpa <= hi:
                raise EnvelopeViolation(
                    f"target {step.target_kpa} kPa outside [{lo}, {hi}]")

    def unrolled(self) -> list[TrajectoryStep]:
        out = []
        for loop in range(self.loop_count):
            offset = loop * self.loop_duration_s
            out.extend(TrajectoryStep(s.time_s + offset, s.target_kpa, s.channel)
                       for s in self.steps)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        try:
            steps = [TrajectoryStep(time_s=float(s["time_s"]),
                                    target_kpa=float(s["target_kpa"]),
                                    channel=(None if s.get("channel") is None
                                             else int(s["channel"])))
                     for s in data["steps"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad trajectory: {exc}") from exc
        return cls(steps=steps,
                   loop_count=int(data.get("loop_count", 1)),
                   final_hold_s=float(data.get("final_hold_s", 3.0)))

    @classmethod
    def load(cls, path: str | Path) -> "Trajectory":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "steps": [{"time_s": s.time_s, "target_kpa": s.target_kpa,
                       "channel": s.channel} for s in self.steps],
            "loop_count": self.loop_count,
            "final_hold_s": self.final_hold_s,
        }


@dataclass(frozen=True)
class StepMetrics:
    time_s: float
    channel: int | None
    target_kpa: float
    step_kpa: float  # worst-channel magnitude for all-channel steps
    settle_time_s: float | None
    overshoot_kpa: float
    steady_state_error_kpa: float
    oscillation_index: float

    @property
    def settled(self) -> bool:
        return self.settle_time_s is not None


class _ZigzagTracker:
    """Accumulates tracking-error reversal amplitude across a whole run."""

    def __init__(self):
        self.prev_error: float | None = None
        self.prev_delta = 0.0
        self.total = 0.0

    def feed(self, error: float) -> None:
        if self.prev_error is not None:
            delta = error - self.prev_error
            if (abs(delta) > OSCILLATION_THRESHOLD_KPA
                    and abs(self.prev_delta) > OSCILLATION_THRESHOLD_KPA
                    and (delta > 0) != (self.prev_delta > 0)):
                self.total += abs(delta)
            self.prev_delta = delta
        self.prev_error = error


@dataclass
class TrajectoryReport:
    steps: list[StepMetrics] = field(default_factory=list)
    # Error-reversal amplitude per second over the whole run, all channels;
    # catches ramp-tracking chatter that per-step windows are too short for.
    run_oscillation_index: float = 0.0

    @property
    def all_settled(self) -> bool:
        return all(s.settled for s in self.steps)

    @property
    def worst_settle_s(self) -> float | None:
        if not self.all_settled:
            return None
        return max(s.settle_time_s for s in self.steps)

    @property
    def max_overshoot_kpa(self) -> float:
        return max(s.overshoot_kpa for s in self.steps)

    @property
    def worst_steady_state_error_kpa(self) -> float:
        return max(s.steady_state_error_kpa for s in self.steps)

    @property
    def oscillation_total(self) -> float:
        return sum(s.oscillation_index for s in self.steps)

    def summary_lines(self) -> list[str]:
        lines = []
        for s in self.steps:
            settle = "never" if s.settle_time_s is None else f"{s.settle_time_s:.2f} s"
            who = "all" if s.channel is None else f"ch{s.channel}"
            lines.append(
                f"t={s.time_s:7.2f}s {who:>4} -> {s.target_kpa:7.2f} kPa  "
                f"settle={settle:>7}  overshoot={s.overshoot_kpa:5.2f} kPa  "
                f"sse={s.steady_state_error_kpa:5.3f} kPa  "
                f"osc={s.oscillation_index:6.3f}")
        return lines


def _window_metrics(step, snapshots, dt, start_tick, initial):
    """Incremental metrics over one hold window (no numpy on purpose)."""
    affected = (list(range(len(initial))) if step.channel is None
                else [step.channel])
    worst = None
    for ch in affected:
        target = step.target_kpa
        step_mag = target - initial[ch]
        band = max(SETTLE_BAND_FRACTION * abs(step_mag), SETTLE_BAND_FLOOR_KPA)
        last_outside = None
        peak = None
        tail_start = len(snapshots) - max(1, len(snapshots) // 4)
        tail_sum = 0.0
        tail_n = 0
        prev_error = None
        prev_delta = 0.0
        zigzag = 0.0
        for k, snapshot in enumerate(snapshots):
            p = snapshot.channels[ch].pressure_kpa
            error = target - p
            if abs(error) > band:
                last_outside = k
            if step_mag > 0:
                excursion = p - target
            elif step_mag < 0:
                excursion = target - p
            else:
                excursion = abs(error)
            peak = excursion if peak is None else max(peak, excursion)
            if k >= tail_start:
                tail_sum += abs(error)
                tail_n += 1
            if prev_error is not None:
                delta = error - prev_error
                if (abs(delta) > OSCILLATION_THRESHOLD_KPA
                        and abs(prev_delta) > OSCILLATION_THRESHOLD_KPA
                        and (delta > 0) != (prev_delta > 0)):
                    zigzag += abs(delta)
                prev_delta = delta
            prev_error = error
        duration = (snapshots[-1].tick - start_tick) * dt
        if last_outside is None:
            settle = 0.0
        elif last_outside == len(snapshots) - 1:
            settle = None
        else:
            settle = (snapshots[last_outside + 1].tick - start_tick) * dt
        metrics = StepMetrics(
            time_s=step.time_s,
            channel=step.channel,
            target_kpa=target,
            step_kpa=step_mag,
            settle_time_s=settle,
            overshoot_kpa=max(0.0, peak if peak is not None else 0.0),
            steady_state_error_kpa=tail_sum / tail_n if tail_n else 0.0,
            oscillation_index=zigzag / duration if duration > 0 else 0.0,
        )
        if worst is None or _worse(metrics, worst):
            worst = metrics
    return worst


def _worse(a: StepMetrics, b: StepMetrics) -> bool:
    key_a = (a.settle_time_s is None, a.settle_time_s or 0.0, a.overshoot_kpa)
    key_b = (b.settle_time_s is None, b.settle_time_s or 0.0, b.overshoot_kpa)
    return key_a > key_b


def run_trajectory(session, trajectory: Trajectory,
                   envelope=DEFAULT_ENVELOPE) -> TrajectoryReport:
    """Issue the trajectory against a session and score every step.

    The session must expose ``channel_count``, ``set_pressure``,
    ``set_all``, ``advance(duration_s) -> snapshots`` and ``dt``
    (the in-process harness and the client adapter both do).
    """
    trajectory.validate_targets(envelope)
    steps = trajectory.unrolled()
    report = TrajectoryReport()
    dt = session.dt
    now_s = 0.0
    trackers = [_ZigzagTracker() for _ in range(session.channel_count)]

    def advance(duration_s):
        snapshots = session.advance(duration_s)
        for snapshot in snapshots:
            for ch, tracker in enumerate(trackers):
                entry = snapshot.channels[ch]
                tracker.feed(entry.target_kpa - entry.pressure_kpa)
        return snapshots

    first_tick = session.tick
    for i, step in enumerate(steps):
        if step.time_s > now_s:
            advance(step.time_s - now_s)
            now_s = step.time_s
        initial = [session.read_pressure(ch)
                   for ch in range(session.channel_count)]
        if step.channel is None:
            session.set_all([step.target_kpa] * session.channel_count)
        else:
            session.set_pressure(step.channel, step.target_kpa)
        next_time = (steps[i + 1].time_s if i + 1 < len(steps)
                     else step.time_s + trajectory.final_hold_s)
        hold = next_time - step.time_s
        start_tick = session.tick
        snapshots = advance(hold)
        now_s = next_time
        if not snapshots:
            continue
        report.steps.append(_window_metrics(step, snapshots, dt, start_tick,
                                            initial))
    run_span_s = (session.tick - first_tick) * dt
    if run_span_s > 0:
        report.run_oscillation_index = sum(t.total for t in trackers) / run_span_s
    return report
