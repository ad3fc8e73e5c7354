"""Raw IMU stream processing: step detection, heading integration, calibration.

An inertial stream is a time-ordered sequence of samples carrying 3-axis
acceleration and the z-axis angular rate. Steps are local maxima of the
acceleration magnitude; headings come from trapezoidal integration of the
gyro rate. The nominal sampling interval is 300 ms, but gaps are treated as
data, not errors.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CalibrationError

INERTIAL_CSV_HEADER = ["t_ms", "ax", "ay", "az", "gz"]


@dataclass(frozen=True)
class InertialSample:
    """One IMU reading: time in ms, acceleration in m/s^2, z angular rate in rad/s."""

    t_ms: float
    ax: float
    ay: float
    az: float
    gz: float


@dataclass(frozen=True)
class StepEvent:
    """A detected step: peak time, absolute heading at that time, peak magnitude."""

    t_ms: float
    heading: float
    magnitude: float


@dataclass(frozen=True)
class PeakDetectorConfig:
    """Peak-detection thresholds for step counting.

    min_peak_height sits just above the 1 g resting baseline so that only
    gait impacts qualify; min_peak_separation_ms rejects double-counting
    within one stride.
    """

    min_peak_height: float = 10.5
    min_peak_separation_ms: float = 300.0

    def __post_init__(self):
        if self.min_peak_height <= 0.0:
            raise ValueError("min_peak_height must be positive")
        if self.min_peak_separation_ms <= 0.0:
            raise ValueError("min_peak_separation_ms must be positive")


DEFAULT_PEAK_CONFIG = PeakDetectorConfig()


def magnitude(s: InertialSample) -> float:
    """Euclidean norm of the 3-axis acceleration."""
    return math.sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az)


def _check_monotone(stream: Sequence[InertialSample]) -> None:
    for prev, cur in zip(stream, stream[1:]):
        if cur.t_ms <= prev.t_ms:
            raise ValueError(
                f"inertial timestamps must strictly increase ({prev.t_ms} -> {cur.t_ms})"
            )


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    w = (angle + math.pi) % math.tau - math.pi
    return math.pi if w == -math.pi else w


class HeadingProfile:
    """Heading as a function of time, from trapezoidal integration of gz.

    heading(t) = initial_heading + integral of gz over [0, t], wrapped to
    (-pi, pi]. The rate is held constant before the first sample and after
    the last one, and interpolated linearly between samples.
    """

    def __init__(self, stream: Sequence[InertialSample], initial_heading: float):
        _check_monotone(stream)
        self._t = [s.t_ms for s in stream]
        self._gz = [s.gz for s in stream]
        self._initial = initial_heading
        # unwrapped heading at each sample time
        self._h: list[float] = []
        if self._t:
            h = initial_heading + self._gz[0] * self._t[0] / 1000.0
            self._h.append(h)
            for i in range(1, len(self._t)):
                dt_s = (self._t[i] - self._t[i - 1]) / 1000.0
                h += 0.5 * (self._gz[i - 1] + self._gz[i]) * dt_s
                self._h.append(h)

    def __call__(self, t_ms: float) -> float:
        if not self._t:
            return wrap_angle(self._initial)
        if t_ms <= self._t[0]:
            # constant-rate hold back to t (and before stream start)
            h = self._h[0] - self._gz[0] * (self._t[0] - t_ms) / 1000.0
            return wrap_angle(h)
        if t_ms >= self._t[-1]:
            h = self._h[-1] + self._gz[-1] * (t_ms - self._t[-1]) / 1000.0
            return wrap_angle(h)
        i = bisect_right(self._t, t_ms) - 1
        # partial trapezoid with gz linear on the segment
        dt_s = (self._t[i + 1] - self._t[i]) / 1000.0
        tau_s = (t_ms - self._t[i]) / 1000.0
        slope = (self._gz[i + 1] - self._gz[i]) / dt_s
        h = self._h[i] + self._gz[i] * tau_s + 0.5 * slope * tau_s * tau_s
        return wrap_angle(h)


def integrate_heading(
    stream: Sequence[InertialSample], initial_heading: float = 0.0
) -> HeadingProfile:
    """Integrate the z-axis gyro rate into a heading-of-time function."""
    return HeadingProfile(stream, initial_heading)


def detect_steps(
    stream: Sequence[InertialSample],
    cfg: PeakDetectorConfig = DEFAULT_PEAK_CONFIG,
    initial_heading: float = 0.0,
) -> list[StepEvent]:
    """Detect steps as strict local maxima of the acceleration magnitude.

    A sample counts as a step peak when its magnitude strictly exceeds both
    neighbors, reaches cfg.min_peak_height, and lies at least
    cfg.min_peak_separation_ms after the previously accepted peak. Each event
    carries the heading integrated up to the peak time.

    An empty (or too short) stream yields no steps.
    """
    _check_monotone(stream)
    if len(stream) < 3:
        return []
    heading = integrate_heading(stream, initial_heading)
    mags = [magnitude(s) for s in stream]
    events: list[StepEvent] = []
    last_t: float | None = None
    for i in range(1, len(stream) - 1):
        if not (mags[i] > mags[i - 1] and mags[i] > mags[i + 1]):
            continue
        if mags[i] < cfg.min_peak_height:
            continue
        t = stream[i].t_ms
        if last_t is not None and t - last_t < cfg.min_peak_separation_ms:
            continue
        events.append(StepEvent(t_ms=t, heading=heading(t), magnitude=mags[i]))
        last_t = t
    return events


def calibrate_step_length(
    line_length_m: float,
    stream: Sequence[InertialSample],
    cfg: PeakDetectorConfig = DEFAULT_PEAK_CONFIG,
) -> float:
    """Average step length from a walk along a line of known length.

    Raises:
        ValueError: if line_length_m is not positive.
        CalibrationError: if no steps are detected in the stream.
    """
    if line_length_m <= 0.0:
        raise ValueError("line_length_m must be positive")
    steps = detect_steps(stream, cfg)
    if not steps:
        raise CalibrationError("no steps detected; cannot calibrate step length")
    return line_length_m / len(steps)


def load_inertial_csv(path: str | Path) -> list[InertialSample]:
    """Read an inertial stream from CSV with header t_ms,ax,ay,az,gz."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != INERTIAL_CSV_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(INERTIAL_CSV_HEADER)}, "
                f"got {reader.fieldnames}"
            )
        samples = [
            InertialSample(
                t_ms=float(row["t_ms"]),
                ax=float(row["ax"]),
                ay=float(row["ay"]),
                az=float(row["az"]),
                gz=float(row["gz"]),
            )
            for row in reader
        ]
    _check_monotone(samples)
    return samples


def save_inertial_csv(path: str | Path, samples: Iterable[InertialSample]) -> None:
    """Write an inertial stream as CSV with header t_ms,ax,ay,az,gz."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(INERTIAL_CSV_HEADER)
        for s in samples:
            writer.writerow([s.t_ms, s.ax, s.ay, s.az, s.gz])
