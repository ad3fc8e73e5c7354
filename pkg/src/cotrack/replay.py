"""Deterministic execution replay on a shared clock.

Each tick, every active device consumes the inertial samples due in that tick,
advances two dead-reckoning tracks (a pure-PDR baseline and the collaborative
track), and grows its error counter per detected step. Then, for every pair of
broadcasting devices, a noisy RSSI is drawn from the true groundtruth distance;
pairs whose estimated distance falls under the proximity cutoff exchange states
and run the collaboration step against a frozen snapshot of broadcasts.

Everything is reproducible from (scenario, seed): channel noise comes from
per-pair substreams derived by stable hashing of device ids, so adding or
reordering devices does not perturb the noise seen by existing pairs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import pdr
from .collab import CollabConfig, DeviceState, accumulate_error, aoe_step, update_guard
from .errors import ScenarioError
from .fileio import atomic_path
from .geodesy import GeoPoint, haversine, intermediate_point, local_frame, unproject
from .inertial import (
    DEFAULT_PEAK_CONFIG,
    InertialSample,
    detect_steps,
    load_inertial_csv,
    save_inertial_csv,
    wrap_angle,
)
from .metrics import MetricsReport, improvement_summary
from .radio import PathLossModel, distance_from_rssi, rssi_at

TRACK_CSV_HEADER = ["t_ms", "gt_lat", "gt_lon", "pdr_lat", "pdr_lon", "aoe_lat", "aoe_lon", "errors"]
EVENTS_CSV_HEADER = ["t_ms", "id_a", "id_b", "ratio_a", "updated_a"]
GROUNDTRUTH_CSV_HEADER = ["t_ms", "lat", "lon"]

# Two walkers can share a groundtruth point; physical radios never share a
# location, so the channel sees at least this separation.
MIN_CHANNEL_DISTANCE_M = 0.01

_ID_ALLOWED = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-")


@dataclass(frozen=True)
class TimedPoint:
    """A groundtruth trajectory sample: device-local time and true position."""

    t_ms: float
    point: GeoPoint


@dataclass(frozen=True)
class DeviceSpec:
    """One device's inputs: groundtruth walk, inertial stream, start parameters.

    The first groundtruth point doubles as the known initial location. An
    empty inertial stream models a parked device that only broadcasts.
    """

    id: str
    groundtruth: tuple[TimedPoint, ...]
    inertial: tuple[InertialSample, ...] = ()
    start_offset_ms: float = 0.0
    step_length_m: float = 0.7
    initial_heading_rad: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "groundtruth", tuple(self.groundtruth))
        object.__setattr__(self, "inertial", tuple(self.inertial))
        if not self.id or not set(self.id) <= _ID_ALLOWED:
            raise ScenarioError(
                f"device id {self.id!r} must be non-empty and use [A-Za-z0-9_-]", field="id"
            )
        if not self.groundtruth:
            raise ScenarioError(f"device {self.id!r} has an empty groundtruth", field="groundtruth")
        for a, b in zip(self.groundtruth, self.groundtruth[1:]):
            if b.t_ms <= a.t_ms:
                raise ScenarioError(
                    f"device {self.id!r} groundtruth timestamps must strictly increase",
                    field="groundtruth",
                )
        for a, b in zip(self.inertial, self.inertial[1:]):
            if b.t_ms <= a.t_ms:
                raise ScenarioError(
                    f"device {self.id!r} inertial timestamps must strictly increase",
                    field="inertial",
                )
        if self.start_offset_ms < 0:
            raise ScenarioError(
                f"device {self.id!r} start_offset_ms must be >= 0", field="start_offset_ms"
            )
        if self.step_length_m <= 0:
            raise ScenarioError(
                f"device {self.id!r} step_length_m must be positive", field="step_length_m"
            )

    @property
    def initial_location(self) -> GeoPoint:
        return self.groundtruth[0].point

    @property
    def stream_end_ms(self) -> float:
        """Device-local time of the last inertial sample (0 for a parked device)."""
        return self.inertial[-1].t_ms if self.inertial else 0.0


@dataclass(frozen=True)
class Scenario:
    """A complete replay configuration; a value object keyed by its seed."""

    devices: tuple[DeviceSpec, ...]
    path_loss: PathLossModel = PathLossModel()
    collab: CollabConfig = CollabConfig()
    proximity_cutoff_m: float = 4.0
    tick_ms: float = 300.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        if not self.devices:
            raise ScenarioError("scenario needs at least one device", field="devices")
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ScenarioError("device ids must be unique", field="devices")
        if self.tick_ms <= 0:
            raise ScenarioError("tick_ms must be positive", field="tick_ms")
        if self.proximity_cutoff_m <= 0:
            raise ScenarioError("proximity_cutoff_m must be positive", field="proximity_cutoff_m")


@dataclass
class DeviceTrack:
    """Recorded per-tick trajectories for one device (shared timestamps)."""

    device_id: str
    t_ms: list[float] = field(default_factory=list)
    groundtruth: list[GeoPoint] = field(default_factory=list)
    pdr: list[GeoPoint] = field(default_factory=list)
    aoe: list[GeoPoint] = field(default_factory=list)
    errors: list[int] = field(default_factory=list)
    final_errors: int = 0
    collaboration_count: int = 0


@dataclass(frozen=True)
class CollabEvent:
    """One directed collaboration invocation (A's call against B's broadcast)."""

    t_ms: float
    id_a: str
    id_b: str
    ratio_a: float
    updated_a: bool


@dataclass
class RunRecord:
    """Everything a replay produced: per-device tracks and collaboration events."""

    tracks: dict[str, DeviceTrack]
    events: list[CollabEvent]

    @property
    def collaboration_total(self) -> int:
        return len(self.events)

    @property
    def location_update_total(self) -> int:
        return sum(1 for e in self.events if e.updated_a)


def _substream(seed: int, *tokens: str) -> np.random.Generator:
    """Independent generator derived from the master seed and a stable token key."""
    digest = hashlib.sha256("/".join(tokens).encode()).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, key]))


def _interp_groundtruth(points: Sequence[TimedPoint], times: list[float], local_t: float) -> GeoPoint:
    """True position at a device-local time, held flat outside the recorded span."""
    if local_t <= times[0]:
        return points[0].point
    if local_t >= times[-1]:
        return points[-1].point
    i = bisect_right(times, local_t) - 1
    a, b = points[i], points[i + 1]
    fraction = (local_t - a.t_ms) / (b.t_ms - a.t_ms)
    return intermediate_point(a.point, b.point, fraction)


class _DeviceRunner:
    """Mutable per-device simulation state for one replay."""

    def __init__(self, spec: DeviceSpec):
        self.spec = spec
        self.steps = (
            detect_steps(spec.inertial, DEFAULT_PEAK_CONFIG, spec.initial_heading_rad)
            if spec.inertial
            else []
        )
        self.step_cursor = 0
        self.base = pdr.init(spec.initial_location, spec.step_length_m, spec.initial_heading_rad)
        self.aoe_pdr = self.base
        initial = spec.initial_location
        self.state = DeviceState(location=initial, errors=0, previous_location=initial)
        self.end_ms = spec.start_offset_ms + spec.stream_end_ms
        self._gt_times = [p.t_ms for p in spec.groundtruth]
        self.track = DeviceTrack(device_id=spec.id)

    def started(self, t_ms: float) -> bool:
        return t_ms >= self.spec.start_offset_ms

    def recording(self, t_ms: float) -> bool:
        return self.started(t_ms) and t_ms <= self.end_ms

    def groundtruth_at(self, t_ms: float) -> GeoPoint:
        return _interp_groundtruth(self.spec.groundtruth, self._gt_times, t_ms - self.spec.start_offset_ms)


def run(scenario: Scenario, collaborate: bool = True, error_growth: str = "per_step") -> RunRecord:
    """Replay a scenario tick by tick; deterministic given (scenario, seed).

    `collaborate=False` disables the exchange phase entirely (the pure-PDR
    baseline). `error_growth` selects the error-counter unit: "per_step"
    (default) or "per_tick" for sensitivity studies.
    """
    if error_growth not in ("per_step", "per_tick"):
        raise ValueError(f"error_growth must be 'per_step' or 'per_tick', got {error_growth!r}")
    runners = [_DeviceRunner(spec) for spec in sorted(scenario.devices, key=lambda d: d.id)]
    events: list[CollabEvent] = []
    pair_rngs: dict[tuple[str, str], np.random.Generator] = {}
    tick = scenario.tick_ms
    end_ms = max(r.end_ms for r in runners)
    n_ticks = math.ceil(end_ms / tick)

    for k in range(n_ticks + 1):
        now = k * tick

        # movement phase: steps due in (now - tick, now], in timestamp order
        for r in runners:
            if not r.started(now):
                continue
            stepped = False
            while r.step_cursor < len(r.steps):
                step = r.steps[r.step_cursor]
                if r.spec.start_offset_ms + step.t_ms > now:
                    break
                r.base = pdr.advance(r.base, step)
                r.aoe_pdr = pdr.advance(r.aoe_pdr, step)
                if error_growth == "per_step":
                    r.state = accumulate_error(r.state)
                r.step_cursor += 1
                stepped = True
            if error_growth == "per_tick" and now <= r.end_ms:
                r.state = accumulate_error(r.state)
            if stepped:
                r.state = replace(r.state, location=pdr.position(r.aoe_pdr))

        # collaboration phase: all pairs read the same pre-exchange snapshot
        if collaborate:
            broadcasting = [r for r in runners if r.started(now)]
            snapshot = {r.spec.id: r.state for r in broadcasting}
            gt_now = {r.spec.id: r.groundtruth_at(now) for r in broadcasting}
            peers: dict[str, list[str]] = {r.spec.id: [] for r in broadcasting}
            for ia in range(len(broadcasting)):
                for ib in range(ia + 1, len(broadcasting)):
                    id_a = broadcasting[ia].spec.id
                    id_b = broadcasting[ib].spec.id
                    rng = pair_rngs.get((id_a, id_b))
                    if rng is None:
                        rng = _substream(scenario.seed, "pair", id_a, id_b)
                        pair_rngs[(id_a, id_b)] = rng
                    noise = rng.normal(0.0, scenario.path_loss.noise_sigma_db)
                    true_d = max(haversine(gt_now[id_a], gt_now[id_b]), MIN_CHANNEL_DISTANCE_M)
                    rssi = rssi_at(scenario.path_loss, true_d, noise)
                    if distance_from_rssi(scenario.path_loss, rssi) < scenario.proximity_cutoff_m:
                        peers[id_a].append(id_b)
                        peers[id_b].append(id_a)
            for r in broadcasting:
                in_range = peers[r.spec.id]
                if not in_range:
                    continue
                st = r.state
                for peer_id in in_range:  # already in ascending id order
                    other = snapshot[peer_id]
                    sum_errors = st.errors + other.errors
                    ratio = st.errors / sum_errors if sum_errors else 0.0
                    updated = sum_errors != 0 and update_guard(st, other, scenario.collab)
                    events.append(
                        CollabEvent(t_ms=now, id_a=r.spec.id, id_b=peer_id, ratio_a=ratio, updated_a=updated)
                    )
                    st = aoe_step(st, other, scenario.collab)
                if st.location != r.state.location:
                    r.aoe_pdr = pdr.override_position(r.aoe_pdr, st.location)
                r.track.collaboration_count += len(in_range)
                r.state = st

        # record and roll the stationarity reference forward
        for r in runners:
            if r.recording(now):
                r.track.t_ms.append(now)
                r.track.groundtruth.append(r.groundtruth_at(now))
                r.track.pdr.append(pdr.position(r.base))
                r.track.aoe.append(r.state.location)
                r.track.errors.append(r.state.errors)
            if r.started(now):
                r.state = replace(r.state, previous_location=r.state.location)

    tracks = {}
    for r in runners:
        r.track.final_errors = r.state.errors
        tracks[r.spec.id] = r.track
    return RunRecord(tracks=tracks, events=events)


def run_parallel_pdr(scenario: Scenario) -> RunRecord:
    """The comparison baseline: the same replay with collaboration disabled."""
    return run(scenario, collaborate=False)


@dataclass(frozen=True)
class SweepCell:
    """One threshold combination's full evaluation."""

    lower: int
    upper: int
    report: MetricsReport
    collaborations: int
    location_updates: int


def _sweep_cell(scenario: Scenario, lower: int, upper: int) -> SweepCell:
    record = run(replace(scenario, collab=CollabConfig(lower=lower, upper=upper)))
    return SweepCell(
        lower=lower,
        upper=upper,
        report=improvement_summary(record),
        collaborations=record.collaboration_total,
        location_updates=record.location_update_total,
    )


def sweep(
    scenario: Scenario,
    lowers: Sequence[int],
    uppers: Sequence[int],
    jobs: int = 1,
) -> list[SweepCell]:
    """Run one full replay per (lower, upper) pair, identical seed for every cell.

    The whole grid is validated before any run; cells are independent, so
    `jobs > 1` fans them out to worker processes without changing results.
    """
    if not lowers or not uppers:
        raise ScenarioError("threshold grids must be non-empty", field="collab")
    cells = [(int(l), int(u)) for l in lowers for u in uppers]
    for l, u in cells:
        if not 0 <= l < u:
            raise ScenarioError(
                f"invalid threshold pair: lower {l} must be < upper {u}", field="collab"
            )
    if jobs <= 1:
        return [_sweep_cell(scenario, l, u) for l, u in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_cell, [scenario] * len(cells), *zip(*cells)))


# ---------------------------------------------------------------------------
# synthetic scenario generation


@dataclass(frozen=True)
class SyntheticParams:
    """Knobs for the generated corridor/grid scenario.

    Groundtruth walks follow corridor lines; inertial streams are synthesized
    from the walks so that the noiseless construction reproduces the walk
    exactly. Dead-reckoning drift comes from three per-device error sources:
    a step-length miscalibration (each walker's true stride differs from the
    declared step length, so the error grows with distance walked), a gyro
    bias, and white gyro/accelerometer noise.
    """

    device_count: int = 16
    parked_count: int = 0  # of device_count, how many never walk (pure beacons)
    area_width_m: float = 48.0
    area_depth_m: float = 36.0
    corridor_spacing_m: float = 6.0
    path_shape: str = "grid"  # "grid" (random corridor walk) or "corridor" (one line)
    steps_per_device: int = 150
    step_length_m: float = 0.7
    stagger_ms: float = 10000.0
    step_length_error: float = 0.12  # max relative true-stride mismatch
    gyro_bias_sigma: float = 0.012  # max per-device bias (rad/s)
    gyro_noise_sigma: float = 0.003
    accel_noise_sigma: float = 0.2
    anchor_lat: float = 47.0
    anchor_lon: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.device_count < 1:
            raise ValueError("device_count must be >= 1")
        if not 0 <= self.parked_count < self.device_count:
            raise ValueError("parked_count must be >= 0 and < device_count")
        if self.steps_per_device < 1:
            raise ValueError("steps_per_device must be >= 1")
        if self.path_shape not in ("grid", "corridor"):
            raise ValueError(f"unknown path_shape {self.path_shape!r}")
        if self.step_length_m <= 0 or self.corridor_spacing_m <= 0:
            raise ValueError("step_length_m and corridor_spacing_m must be positive")
        if not 0.0 <= self.step_length_error < 1.0:
            raise ValueError("step_length_error must be in [0, 1)")
        if self.stagger_ms < 0:
            raise ValueError("stagger_ms must be >= 0")


_SAMPLE_MS = 300.0
_STEP_MS = 600.0
_GRAVITY = 9.81
_STEP_AMPLITUDE = 2.0


def _grid_walk(
    rng: np.random.Generator, params: SyntheticParams, stride: float
) -> tuple[list[float], list[np.ndarray]]:
    """Random walk along a corridor grid; returns per-step headings and positions."""
    spacing = params.corridor_spacing_m
    nx = max(2, int(params.area_width_m // spacing) + 1)
    ny = max(2, int(params.area_depth_m // spacing) + 1)

    def neighbors(node: tuple[int, int]) -> list[tuple[int, int]]:
        x, y = node
        out = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if 0 <= x + dx < nx and 0 <= y + dy < ny:
                out.append((x + dx, y + dy))
        return out

    def pick_target(node: tuple[int, int], prev: tuple[int, int] | None) -> tuple[int, int]:
        options = [n for n in neighbors(node) if n != prev] or neighbors(node)
        return options[int(rng.integers(len(options)))]

    node = (int(rng.integers(nx)), int(rng.integers(ny)))
    prev: tuple[int, int] | None = None
    target = pick_target(node, prev)
    pos = np.array(node, dtype=float) * spacing
    headings: list[float] = []
    positions = [pos.copy()]
    for _ in range(params.steps_per_device):
        vec = np.array(target, dtype=float) * spacing - pos
        if float(np.hypot(*vec)) <= stride / 2.0:
            prev, node = node, target
            target = pick_target(node, prev)
            vec = np.array(target, dtype=float) * spacing - pos
        theta = math.atan2(vec[1], vec[0])
        pos = pos + stride * np.array([math.cos(theta), math.sin(theta)])
        headings.append(theta)
        positions.append(pos.copy())
    return headings, positions


def _corridor_walk(
    rng: np.random.Generator, params: SyntheticParams, stride: float, row_y: float
) -> tuple[list[float], list[np.ndarray]]:
    """Back-and-forth walk along one corridor line at height row_y."""
    x_min, x_max = 0.0, params.area_width_m
    going_right = bool(rng.integers(2))
    pos = np.array([x_min if going_right else x_max, row_y])
    headings: list[float] = []
    positions = [pos.copy()]
    for _ in range(params.steps_per_device):
        target_x = x_max if going_right else x_min
        if abs(target_x - pos[0]) <= stride / 2.0:
            going_right = not going_right
            target_x = x_max if going_right else x_min
        theta = 0.0 if target_x > pos[0] else math.pi
        pos = pos + stride * np.array([math.cos(theta), math.sin(theta)])
        headings.append(theta)
        positions.append(pos.copy())
    return headings, positions


def _synthesize_stream(
    headings: Sequence[float],
    rng: np.random.Generator,
    params: SyntheticParams,
    total_samples: int = 0,
) -> list[InertialSample]:
    """Inertial samples matching a walk: one step peak per stride, gyro turn pulses.

    Step peaks land on odd samples of the 300 ms grid; heading changes are
    triangular gyro pulses centered between step peaks, so that trapezoidal
    integration recovers each step's heading exactly before noise is added.
    If `total_samples` exceeds the walk, the stream continues with resting
    (gravity-only) samples: the device stands still but keeps sensing.
    """
    n_steps = len(headings)
    n_samples = max(2 * n_steps + 1, total_samples)
    t = np.arange(n_samples) * _SAMPLE_MS
    mag = np.full(n_samples, _GRAVITY)
    mag[0 : 2 * n_steps + 1 : 2] = _GRAVITY - _STEP_AMPLITUDE
    mag[1 : 2 * n_steps + 1 : 2] = _GRAVITY + _STEP_AMPLITUDE
    gz = np.zeros(n_samples)
    for j in range(n_steps - 1):
        delta = wrap_angle(headings[j + 1] - headings[j])
        gz[2 * j + 2] = delta / (_STEP_MS / 1000.0 / 2.0)
    bias = _signed_magnitude(rng, params.gyro_bias_sigma)
    gz = gz + bias + rng.normal(0.0, params.gyro_noise_sigma, n_samples)
    ax = rng.normal(0.0, params.accel_noise_sigma, n_samples)
    ay = rng.normal(0.0, params.accel_noise_sigma, n_samples)
    az = mag + rng.normal(0.0, params.accel_noise_sigma, n_samples)
    return [
        InertialSample(t_ms=float(t[i]), ax=float(ax[i]), ay=float(ay[i]), az=float(az[i]), gz=float(gz[i]))
        for i in range(n_samples)
    ]


def _signed_magnitude(rng: np.random.Generator, scale: float) -> float:
    """Random-sign draw with magnitude in [0.6, 1.0] * scale.

    Every device gets a material error of its own (a plain Gaussian would
    leave half the fleet nearly drift-free, which no real IMU is).
    """
    sign = 1.0 if rng.integers(2) else -1.0
    return sign * rng.uniform(0.6, 1.0) * scale


def generate_synthetic(params: SyntheticParams) -> Scenario:
    """Build a self-contained scenario: staggered walkers with drifting sensors.

    Walks are staggered so arrivals keep flowing for the whole run, and every
    stream continues with resting samples until a common session end. The
    population therefore always mixes freshly started walkers (low error, low
    counter), mid-walk drifters, and finished devices standing at their final
    position. Finished devices keep broadcasting, get corrected by young
    passers-by, and then drain their counters into reset points.

    The last `parked_count` devices never walk at all: they broadcast their
    known position from a corridor junction for the whole run.
    """
    frame = local_frame(GeoPoint(lat=params.anchor_lat, lon=params.anchor_lon))
    spacing = params.corridor_spacing_m
    nx = max(2, int(params.area_width_m // spacing) + 1)
    ny = max(2, int(params.area_depth_m // spacing) + 1)
    n_rows = max(1, int(params.area_depth_m // 3.0))
    walker_count = params.device_count - params.parked_count
    walk_ms = 2 * params.steps_per_device * _SAMPLE_MS
    session_end_ms = (walker_count - 1) * params.stagger_ms + walk_ms
    devices = []
    for i in range(walker_count):
        device_id = f"dev{i:02d}"
        rng = _substream(params.seed, "gen", device_id)
        # true stride vs the declared step length: a distance-proportional
        # drift source on top of the heading drift
        stride = params.step_length_m * (1.0 + _signed_magnitude(rng, params.step_length_error))
        if params.path_shape == "grid":
            headings, positions = _grid_walk(rng, params, stride)
        else:
            headings, positions = _corridor_walk(rng, params, stride, row_y=3.0 * (i % n_rows))
        total_samples = int((session_end_ms - i * params.stagger_ms) // _SAMPLE_MS) + 1
        samples = _synthesize_stream(headings, rng, params, total_samples=total_samples)
        groundtruth = tuple(
            TimedPoint(
                t_ms=float(k * _SAMPLE_MS),
                point=unproject(frame, *positions[min((k + 1) // 2, len(headings))]),
            )
            for k in range(len(samples))
        )
        devices.append(
            DeviceSpec(
                id=device_id,
                groundtruth=groundtruth,
                inertial=tuple(samples),
                start_offset_ms=i * params.stagger_ms,
                step_length_m=params.step_length_m,
                initial_heading_rad=headings[0],
            )
        )
    parked_rng = _substream(params.seed, "gen", "parked")
    for j in range(params.parked_count):
        device_id = f"dev{walker_count + j:02d}"
        # interior junctions see the most passing traffic
        node_x = int(parked_rng.integers(1, max(2, nx - 1)))
        node_y = int(parked_rng.integers(1, max(2, ny - 1)))
        point = unproject(frame, node_x * spacing, node_y * spacing)
        devices.append(
            DeviceSpec(
                id=device_id,
                groundtruth=(TimedPoint(t_ms=0.0, point=point),),
                inertial=(),
                start_offset_ms=0.0,
                step_length_m=params.step_length_m,
                initial_heading_rad=0.0,
            )
        )
    return Scenario(devices=tuple(devices), seed=params.seed)


# ---------------------------------------------------------------------------
# scenario (de)serialization


def _geo(doc: dict, ctx: str) -> GeoPoint:
    try:
        return GeoPoint(lat=float(doc["lat"]), lon=float(doc["lon"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{ctx}: bad point ({exc})", field=ctx) from exc


def _load_groundtruth_csv(path: Path) -> tuple[TimedPoint, ...]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != GROUNDTRUTH_CSV_HEADER:
            raise ScenarioError(
                f"{path}: expected header {','.join(GROUNDTRUTH_CSV_HEADER)}", field="groundtruth"
            )
        return tuple(
            TimedPoint(t_ms=float(row["t_ms"]), point=GeoPoint(float(row["lat"]), float(row["lon"])))
            for row in reader
        )


def _save_groundtruth_csv(path: Path, points: Iterable[TimedPoint]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(GROUNDTRUTH_CSV_HEADER)
        for p in points:
            writer.writerow([p.t_ms, p.point.lat, p.point.lon])


_DEVICE_KEYS = {
    "id",
    "start_offset_ms",
    "step_length_m",
    "initial_heading_rad",
    "groundtruth",
    "groundtruth_csv",
    "inertial",
    "inertial_csv",
}
_SCENARIO_KEYS = {"seed", "tick_ms", "proximity_cutoff_m", "path_loss", "collab", "devices"}


def _device_from_json(doc: dict, base_dir: Path) -> DeviceSpec:
    if not isinstance(doc, dict):
        raise ScenarioError("each device must be a JSON object", field="devices")
    device_id = doc.get("id", "<missing id>")
    ctx = f"device {device_id!r}"
    unknown = set(doc) - _DEVICE_KEYS
    if unknown:
        raise ScenarioError(f"{ctx}: unknown fields {sorted(unknown)}", field="devices")
    if "id" not in doc:
        raise ScenarioError("device missing required field 'id'", field="id")

    if "groundtruth_csv" in doc:
        groundtruth = _load_groundtruth_csv(base_dir / doc["groundtruth_csv"])
    elif "groundtruth" in doc:
        groundtruth = tuple(
            TimedPoint(t_ms=float(p["t_ms"]), point=_geo(p, f"{ctx}.groundtruth"))
            for p in doc["groundtruth"]
        )
    else:
        raise ScenarioError(f"{ctx}: needs 'groundtruth' or 'groundtruth_csv'", field="groundtruth")

    if "inertial_csv" in doc:
        inertial = tuple(load_inertial_csv(base_dir / doc["inertial_csv"]))
    else:
        inertial = tuple(
            InertialSample(
                t_ms=float(s["t_ms"]),
                ax=float(s["ax"]),
                ay=float(s["ay"]),
                az=float(s["az"]),
                gz=float(s["gz"]),
            )
            for s in doc.get("inertial", [])
        )

    try:
        return DeviceSpec(
            id=str(doc["id"]),
            groundtruth=groundtruth,
            inertial=inertial,
            start_offset_ms=float(doc.get("start_offset_ms", 0.0)),
            step_length_m=float(doc.get("step_length_m", 0.7)),
            initial_heading_rad=float(doc.get("initial_heading_rad", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{ctx}: {exc}", field="devices") from exc


def scenario_from_json(doc: dict, base_dir: Path | str = ".") -> Scenario:
    """Build a Scenario from a parsed JSON document; CSV refs resolve against base_dir."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = set(doc) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario fields {sorted(unknown)}")
    base = Path(base_dir)
    path_loss_doc = doc.get("path_loss", {})
    collab_doc = doc.get("collab", {})
    try:
        path_loss = PathLossModel(
            p0_dbm=float(path_loss_doc.get("p0_dbm", -59.0)),
            exponent=float(path_loss_doc.get("exponent", 2.0)),
            noise_sigma_db=float(path_loss_doc.get("noise_sigma_db", 2.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"path_loss: {exc}", field="path_loss") from exc
    try:
        collab = CollabConfig(lower=int(collab_doc.get("lower", 40)), upper=int(collab_doc.get("upper", 80)))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"collab: {exc}", field="collab") from exc
    devices = tuple(_device_from_json(d, base) for d in doc.get("devices", []))
    return Scenario(
        devices=devices,
        path_loss=path_loss,
        collab=collab,
        proximity_cutoff_m=float(doc.get("proximity_cutoff_m", 4.0)),
        tick_ms=float(doc.get("tick_ms", 300.0)),
        seed=int(doc.get("seed", 0)),
    )


def scenario_to_json(scenario: Scenario) -> dict:
    """Self-contained (inline-stream) JSON form of a scenario."""
    return {
        "seed": scenario.seed,
        "tick_ms": scenario.tick_ms,
        "proximity_cutoff_m": scenario.proximity_cutoff_m,
        "path_loss": {
            "p0_dbm": scenario.path_loss.p0_dbm,
            "exponent": scenario.path_loss.exponent,
            "noise_sigma_db": scenario.path_loss.noise_sigma_db,
        },
        "collab": {"lower": scenario.collab.lower, "upper": scenario.collab.upper},
        "devices": [
            {
                "id": d.id,
                "start_offset_ms": d.start_offset_ms,
                "step_length_m": d.step_length_m,
                "initial_heading_rad": d.initial_heading_rad,
                "groundtruth": [
                    {"t_ms": p.t_ms, "lat": p.point.lat, "lon": p.point.lon} for p in d.groundtruth
                ],
                "inertial": [
                    {"t_ms": s.t_ms, "ax": s.ax, "ay": s.ay, "az": s.az, "gz": s.gz}
                    for s in d.inertial
                ],
            }
            for d in scenario.devices
        ],
    }


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario JSON file (streams inline or referenced as CSV paths)."""
    path = Path(path)
    with open(path) as f:
        doc = json.load(f)
    return scenario_from_json(doc, base_dir=path.parent)


def save_scenario(scenario: Scenario, path: str | Path, stream_format: str = "inline") -> None:
    """Write a scenario JSON file.

    stream_format "inline" embeds groundtruth and inertial streams in the JSON;
    "csv" writes one groundtruth and one inertial CSV per device next to the
    JSON and references them by relative path.
    """
    if stream_format not in ("inline", "csv"):
        raise ValueError(f"stream_format must be 'inline' or 'csv', got {stream_format!r}")
    path = Path(path)
    doc = scenario_to_json(scenario)
    if stream_format == "csv":
        for device_doc, device in zip(doc["devices"], scenario.devices):
            gt_name = f"{device.id}_groundtruth.csv"
            imu_name = f"{device.id}_inertial.csv"
            with atomic_path(path.parent / gt_name) as tmp:
                _save_groundtruth_csv(tmp, device.groundtruth)
            with atomic_path(path.parent / imu_name) as tmp:
                save_inertial_csv(tmp, device.inertial)
            del device_doc["groundtruth"], device_doc["inertial"]
            device_doc["groundtruth_csv"] = gt_name
            device_doc["inertial_csv"] = imu_name
    with atomic_path(path) as tmp:
        tmp.write_text(json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# run record (de)serialization


def write_run_csvs(record: RunRecord, outdir: str | Path) -> list[Path]:
    """Export a run: one trajectory CSV per device plus the collaboration events."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for device_id in sorted(record.tracks):
        track = record.tracks[device_id]
        target = outdir / f"track_{device_id}.csv"
        with atomic_path(target) as tmp, open(tmp, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(TRACK_CSV_HEADER)
            for i in range(len(track.t_ms)):
                writer.writerow(
                    [
                        track.t_ms[i],
                        track.groundtruth[i].lat,
                        track.groundtruth[i].lon,
                        track.pdr[i].lat,
                        track.pdr[i].lon,
                        track.aoe[i].lat,
                        track.aoe[i].lon,
                        track.errors[i],
                    ]
                )
        written.append(target)
    events_path = outdir / "events.csv"
    with atomic_path(events_path) as tmp, open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(EVENTS_CSV_HEADER)
        for e in record.events:
            writer.writerow([e.t_ms, e.id_a, e.id_b, e.ratio_a, int(e.updated_a)])
    written.append(events_path)
    return written


def load_run_record(outdir: str | Path) -> RunRecord:
    """Rebuild a RunRecord from a directory written by :func:`write_run_csvs`."""
    outdir = Path(outdir)
    tracks: dict[str, DeviceTrack] = {}
    for track_path in sorted(outdir.glob("track_*.csv")):
        device_id = track_path.stem[len("track_") :]
        track = DeviceTrack(device_id=device_id)
        with open(track_path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != TRACK_CSV_HEADER:
                raise ValueError(f"{track_path}: unexpected header {reader.fieldnames}")
            for row in reader:
                track.t_ms.append(float(row["t_ms"]))
                track.groundtruth.append(GeoPoint(float(row["gt_lat"]), float(row["gt_lon"])))
                track.pdr.append(GeoPoint(float(row["pdr_lat"]), float(row["pdr_lon"])))
                track.aoe.append(GeoPoint(float(row["aoe_lat"]), float(row["aoe_lon"])))
                track.errors.append(int(row["errors"]))
        track.final_errors = track.errors[-1] if track.errors else 0
        tracks[device_id] = track
    if not tracks:
        raise ValueError(f"no track_*.csv files found in {outdir}")
    events: list[CollabEvent] = []
    events_path = outdir / "events.csv"
    if events_path.exists():
        with open(events_path, newline="") as f:
            reader = csv.DictReader(f)
            for row in reader:
                events.append(
                    CollabEvent(
                        t_ms=float(row["t_ms"]),
                        id_a=row["id_a"],
                        id_b=row["id_b"],
                        ratio_a=float(row["ratio_a"]),
                        updated_a=bool(int(row["updated_a"])),
                    )
                )
    for e in events:
        if e.id_a in tracks:
            tracks[e.id_a].collaboration_count += 1
    return RunRecord(tracks=tracks, events=events)
