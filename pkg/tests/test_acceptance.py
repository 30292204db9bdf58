"""Acceptance suite: every criterion at its stated tolerance.

Closed-loop criteria run against the default simulated plant.  Each test
prints one PASS/FAIL line (run with ``pytest -s`` to see them live).
"""

import json
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from pneutwin import (
    Channel,
    ChamberParams,
    Device,
    PidGains,
    PidState,
    PlantParams,
    Valve,
    pid_step,
    protocol,
)
from pneutwin._backend import BACKEND_NAME
from pneutwin.plant import P_ATM_KPA, ChannelPlantState, step_plant
from pneutwin.controller import ActuationCommand
from pneutwin.protocol import Frame, FrameDecoder, crc8, encode

TICK = 0.02


def report(criterion: str, passed: bool, detail: str):
    print(f"{criterion}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{criterion} failed: {detail}"


def leaky_device(leak: float, n: int = 1, seed: int = 0) -> Device:
    channels = [Channel(params=PlantParams(
        chamber=ChamberParams(rest_volume_ml=25.0, compliance_ml_per_kpa=0.25,
                              leak_coefficient=leak))) for _ in range(n)]
    return Device(channels=channels, seed=seed)


def collect_pressures(device: Device, n_ticks: int, channel: int = 0):
    out = []
    device.run(n_ticks, on_snapshot=lambda s: out.append(
        s.channels[channel].pressure_kpa))
    return np.asarray(out)


def settle_tick(pressures, target, band):
    """Index one past the last out-of-band sample; None if still outside."""
    outside = np.abs(pressures - target) > band
    if not outside.any():
        return 0
    last = int(np.flatnonzero(outside)[-1])
    if last == len(pressures) - 1:
        return None
    return last + 1


class TestA1StepResponse:
    def test_a1(self):
        device = Device(1)
        device.set_target(0, 30.0)
        start = time.perf_counter()
        pressures = collect_pressures(device, 250)  # 5 s sim
        wall = time.perf_counter() - start
        band = 0.02 * 30.0
        idx = settle_tick(pressures, 30.0, band)
        settle_s = None if idx is None else (idx + 1) * TICK
        overshoot = max(0.0, float(pressures.max()) - 30.0) / 30.0
        ok = (settle_s is not None and settle_s <= 1.2
              and overshoot <= 0.05 and wall < 1.0)
        report("A1 step response", ok,
               f"settle={settle_s}s overshoot={overshoot * 100:.2f}% "
               f"wall={wall * 1000:.0f}ms backend={BACKEND_NAME}")


class TestA2SteadyState:
    def test_a2(self):
        device = Device(1)
        device.set_target(0, 30.0)
        device.run(250)  # 5 s hold
        error = abs(device.pressures()[0] - 30.0)
        report("A2 steady-state accuracy", error <= 0.1,
               f"|error|={error:.4f} kPa after 5 s")


class TestA3LeakCompensation:
    def test_a3_held(self):
        device = leaky_device(0.02)
        device.set_target(0, 30.0)
        pressures = collect_pressures(device, 3000)  # 60 s
        tail = pressures[-750:]  # final 15 s
        sse = float(np.abs(tail - 30.0).mean())
        mid = float(pressures[1500:1750].mean())   # 30..35 s window
        end = float(pressures[-250:].mean())       # last 5 s
        no_decay = abs(end - mid) < 0.1 and end > 29.5
        report("A3 leak compensation", sse <= 0.3 and no_decay,
               f"sse={sse:.3f} kPa, mean 30-35s={mid:.2f}, last 5s={end:.2f}")

    def test_a3_contrast_uncontrolled(self):
        device = leaky_device(0.02)
        device.set_target(0, 30.0)
        device.run(250)
        device.set_enabled(0, False)
        pressures = collect_pressures(device, 3000)
        report("A3 contrast (controller off)", pressures[-1] < 15.0,
               f"decayed to {pressures[-1]:.2f} kPa")


class TestA4DisturbanceRecovery:
    @pytest.mark.parametrize("flow", [-0.5, +0.5])
    def test_a4(self, flow):
        device = Device(1)
        device.set_target(0, 30.0)
        device.run(250)
        device.inject_disturbance(0, flow, 0.5)
        pressures = collect_pressures(device, 150)  # 3 s from pulse start
        band = 0.02 * 30.0
        deviated = float(np.abs(pressures - 30.0).max())
        idx = settle_tick(pressures, 30.0, band)
        recovery_s = None if idx is None else (idx + 1) * TICK
        ok = deviated > band and recovery_s is not None and recovery_s <= 2.0
        report(f"A4 disturbance recovery ({flow:+.1f} L/min)", ok,
               f"peak dev={deviated:.2f} kPa, recovered in {recovery_s}s")


class TestA5Envelope:
    def test_a5(self):
        worst_low, worst_high, worst_flow = 0.0, 0.0, 0.0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            device = Device(10, seed=seed)
            lows = []
            highs = []
            flows = []

            def watch(s):
                ps = [c.pressure_kpa for c in s.channels]
                qs = [abs(c.flow_lpm) for c in s.channels]
                lows.append(min(ps))
                highs.append(max(ps))
                flows.append(max(qs))

            for _segment in range(20):  # 20 segments x 3 s = 60 s
                if rng.random() < 0.7:
                    device.set_all_targets(list(rng.uniform(-50.0, 80.0, 10)))
                else:
                    device.set_target(int(rng.integers(0, 10)),
                                      float(rng.uniform(-50.0, 80.0)))
                device.run(150, on_snapshot=watch)
            worst_low = min(worst_low, min(lows))
            worst_high = max(worst_high, max(highs))
            worst_flow = max(worst_flow, max(flows))
        ok = worst_low >= -50.0 and worst_high <= 80.0 and worst_flow <= 1.7
        report("A5 envelope (100 seeds x 60 s)", ok,
               f"pressure range [{worst_low:.2f}, {worst_high:.2f}] kPa, "
               f"max |pump flow|={worst_flow:.4f} L/min")


class TestA6MultiChannel:
    def test_a6_uniformity_bitwise(self):
        device = Device(10)
        device.set_all_targets([30.0] * 10)
        traces = [[] for _ in range(10)]
        device.run(250, on_snapshot=lambda s: [
            traces[i].append(c.pressure_kpa) for i, c in enumerate(s.channels)])
        identical = all(traces[i] == traces[0] for i in range(10))
        report("A6 multi-channel uniformity", identical,
               "10 identical steps -> bitwise-identical trajectories")

    def test_a6_rock_paper_scissors(self):
        rock = [25.0] * 10
        paper = [-15.0] * 10
        scissors = ([-15.0, -15.0, 25.0, 25.0, 25.0] * 2)
        gestures = [rock, paper, scissors, rock]
        device = Device(10)
        device.set_all_targets(gestures[0])
        device.run(400)
        worst = 0.0
        for prev, gesture in zip(gestures, gestures[1:]):
            device.set_all_targets(gesture)
            traces = [[] for _ in range(10)]
            device.run(100, on_snapshot=lambda s: [  # observe 2 s
                traces[i].append(c.pressure_kpa)
                for i, c in enumerate(s.channels)])
            for ch in range(10):
                step = abs(gesture[ch] - prev[ch])
                if step == 0.0:
                    continue
                band = max(0.02 * step, 0.2)
                idx = settle_tick(np.asarray(traces[ch]), gesture[ch], band)
                assert idx is not None, f"channel {ch} never settled"
                worst = max(worst, (idx + 1) * TICK)
            device.run(300)  # finish the hold before the next gesture
        report("A6 gesture change", worst <= 1.2,
               f"worst channel settle {worst:.2f} s across 3 transitions")


class TestA7IntegratorOracle:
    def test_a7(self):
        # 10 s schedule mixing duty levels, valve flips, leak and
        # disturbance, changing every second.
        params = PlantParams(chamber=ChamberParams(
            rest_volume_ml=25.0, compliance_ml_per_kpa=0.25,
            leak_coefficient=0.01))
        schedule = []
        rng = random.Random(99)
        for _ in range(10):
            deflate = rng.random() < 0.4
            counts = rng.randrange(0, 4096)
            schedule.append((
                ActuationCommand(deflate_counts=counts, valve=Valve.DEFLATE_PATH)
                if deflate else
                ActuationCommand(inflate_counts=counts, valve=Valve.INFLATE_PATH),
                rng.choice([0.0, 0.0, -0.3, 0.4]),  # disturbance
            ))

        state = ChannelPlantState(pressure_kpa=5.0)
        rk4 = []
        for cmd, dist in schedule:
            state.disturbance_flow_lpm = dist
            for _ in range(50):
                state = step_plant(state, cmd, params, TICK)
                rk4.append(state.pressure_kpa)

        # independent fine-step Euler oracle
        conv = 1000.0 / 60.0
        p = 5.0
        euler = []
        h = 1e-5
        for cmd, dist in schedule:
            inf_duty = cmd.inflate_counts / 4096.0
            def_duty = cmd.deflate_counts / 4096.0
            deflate = cmd.valve == Valve.DEFLATE_PATH
            for k in range(50):
                for _ in range(2000):  # 20 ms at 1e-5 s
                    if deflate:
                        span = min(1.0, max(0.0, 1.0 - p / -50.0))
                        q = -def_duty * 1.7 * span
                    else:
                        span = min(1.0, max(0.0, 1.0 - p / 80.0))
                        q = inf_duty * 1.7 * span
                    q = (q - 0.01 * p + dist) * conv
                    p += h * (P_ATM_KPA + p) * q / (25.0 + 0.25 * p
                                                    + 0.25 * (P_ATM_KPA + p))
                euler.append(p)

        diff = float(np.abs(np.asarray(rk4) - np.asarray(euler)).max())
        report("A7 integrator oracle", diff <= 1e-3,
               f"max |RK4@20ms - Euler@1e-5| = {diff:.2e} kPa over 10 s")


class TestA8ProtocolSoundness:
    def test_a8_roundtrip_100k(self):
        rng = random.Random(2024)
        bad = 0
        decoder = FrameDecoder()
        for _ in range(100_000):
            frame = Frame(rng.randrange(256), rng.randrange(256),
                          rng.randbytes(rng.randrange(65)))
            if decoder.feed(encode(frame)) != [frame]:
                bad += 1
        report("A8 round-trip 1e5 frames", bad == 0, f"{bad} mismatches")

    def test_a8_fuzz_1m_bytes(self):
        rng = random.Random(1337)
        decoder = FrameDecoder()
        emitted = 0
        corrupt = 0
        remaining = 1_000_000
        while remaining > 0:
            chunk = rng.randbytes(min(4096, remaining))
            remaining -= len(chunk)
            for frame in decoder.feed(chunk):  # must never raise
                emitted += 1
                body = bytes([frame.command_id, frame.channel,
                              len(frame.payload)]) + frame.payload
                if encode(frame)[-1] != crc8(body):
                    corrupt += 1
        report("A8 fuzz 1e6 bytes", corrupt == 0,
               f"0 panics, {emitted} coincidental frames, {corrupt} corrupt")

    def test_a8_single_bit_exhaustive(self):
        rng = random.Random(5)
        missed = 0
        total = 0
        for length in range(9):  # payloads 0..8 bytes
            frame = Frame(rng.randrange(256), rng.randrange(256),
                          rng.randbytes(length))
            raw = encode(frame)
            for bit in range(len(raw) * 8):
                corrupted = bytearray(raw)
                corrupted[bit // 8] ^= 1 << (bit % 8)
                total += 1
                if frame in FrameDecoder().feed(bytes(corrupted)):
                    missed += 1
        report("A8 single-bit detection", missed == 0,
               f"{total} corruptions, {missed} undetected")


class TestA9DeterminismPerformance:
    def test_a9_csv_byte_identical(self, tmp_path):
        traj = tmp_path / "traj.json"
        traj.write_text(json.dumps({
            "steps": [{"time_s": 0.0, "target_kpa": 30.0, "channel": None},
                      {"time_s": 3.0, "target_kpa": -20.0, "channel": 4}],
            "final_hold_s": 2.0,
        }))
        blobs = []
        for name in ("one.csv", "two.csv"):
            out = tmp_path / name
            result = subprocess.run(
                [sys.executable, "-m", "pneutwin.cli", "record", "--sim",
                 "--channels", "10", "--seed", "7", "--traj", str(traj),
                 "--duration", "6", "--out", str(out)],
                capture_output=True, text=True, timeout=120)
            assert result.returncode == 0, result.stderr
            blobs.append(out.read_bytes())
        report("A9 deterministic CSV", blobs[0] == blobs[1],
               f"two scripted runs, {len(blobs[0])} bytes each, byte-identical")

    def test_a9_throughput(self):
        device = Device(10)
        device.set_all_targets([30.0] * 10)
        device.run(500)  # warm-up
        start = time.perf_counter()
        device.run(5000)
        elapsed = time.perf_counter() - start
        rate = 5000 / elapsed
        report("A9 throughput", rate >= 5000,
               f"{rate:.0f} ticks/s 10-channel single-thread "
               f"({rate * TICK:.0f}x real time, backend={BACKEND_NAME})")


class TestA10PidContracts:
    def test_a10_golden_trace(self):
        gains = PidGains(kp=0.05, ki=0.5, kd=0.0, output_limit=1.0,
                         integral_limit=15.0)
        state = PidState()
        us, integrals = [], []
        for _ in range(20):
            u, state = pid_step(state, gains, 10.0, 0.0, TICK)
            us.append(u)
            integrals.append(state.integral)
        golden_u = [0.6, 0.7, 0.8, 0.9] + [1.0] * 16
        golden_i = [0.2, 0.4, 0.6, 0.8] + [1.0] * 16
        exact = (us == pytest.approx(golden_u, abs=1e-12)
                 and integrals == pytest.approx(golden_i, abs=1e-12))
        report("A10 golden PID trace", exact,
               "20-tick saturation trace matches hand recurrence")

    def test_a10_antiwindup_randomized(self):
        rng = random.Random(31)
        gains = PidGains()
        violations = 0
        for _trial in range(200):
            state = PidState()
            for _ in range(200):
                target = rng.uniform(-80.0, 80.0)
                measured = rng.uniform(-80.0, 80.0)
                u, state = pid_step(state, gains, target, measured, TICK)
                if abs(u) > gains.output_limit or \
                        abs(state.integral) > gains.integral_limit:
                    violations += 1
        report("A10 anti-windup bound", violations == 0,
               f"40k randomized steps, {violations} violations")
