"""Trajectory evaluation: Fréchet distance, error quantiles, CDFs, improvement stats.

All ground distances are great-circle meters (same formula as
:func:`cotrack.geodesy.haversine`, evaluated vectorized here). The headline
accuracy summary is the third quantile (75th percentile) of pairwise
localization errors, which is robust to the outliers that collaboration
occasionally produces.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .fileio import atomic_path
from .geodesy import EARTH_RADIUS_M, GeoPoint

if TYPE_CHECKING:  # pragma: no cover
    from .replay import RunRecord

METRICS_CSV_HEADER = ["device_id", "dfd_m", "q3_pdr_m", "q3_aoe_m", "improvement", "collabs"]
CDF_CSV_HEADER = ["error_m", "fraction", "is_q3"]

Trajectory = Sequence[GeoPoint]


def _rad_arrays(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lat = np.radians(np.array([p.lat for p in traj], dtype=float))
    lon = np.radians(np.array([p.lon for p in traj], dtype=float))
    return lat, lon, np.cos(lat)


def _haversine_vec(
    phi_a: np.ndarray,
    lam_a: np.ndarray,
    cos_a: np.ndarray,
    phi_b: np.ndarray,
    lam_b: np.ndarray,
    cos_b: np.ndarray,
) -> np.ndarray:
    h = np.sin((phi_b - phi_a) / 2.0) ** 2 + cos_a * cos_b * np.sin((lam_b - lam_a) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def dfd(p: Trajectory, q: Trajectory) -> float:
    """Discrete Fréchet distance between two trajectories, in meters.

    Dynamic programming over the coupling table, swept along anti-diagonals so
    memory stays O(min(m, n)); equal to the textbook recursive definition
    (the recursion is kept as a test oracle).

    Raises:
        ValueError: if either trajectory is empty.
    """
    if len(p) == 0 or len(q) == 0:
        raise ValueError("trajectories must be non-empty")
    if len(p) > len(q):
        p, q = q, p
    pphi, plam, pcos = _rad_arrays(p)
    qphi, qlam, qcos = _rad_arrays(q)
    m, n = len(p), len(q)

    prev1 = np.full(m, np.inf)  # coupling costs on diagonal k-1, indexed by row
    prev2 = np.full(m, np.inf)  # diagonal k-2
    for k in range(m + n - 1):
        lo = max(0, k - n + 1)
        hi = min(k, m - 1)
        i = np.arange(lo, hi + 1)
        j = k - i
        dd = _haversine_vec(pphi[i], plam[i], pcos[i], qphi[j], qlam[j], qcos[j])
        if k == 0:
            cur_vals = dd
        else:
            up = prev1[i]  # predecessor (i, j-1); inf-padded where invalid
            i_shift = np.maximum(i - 1, 0)
            left = np.where(i > 0, prev1[i_shift], np.inf)  # (i-1, j)
            diag = np.where(i > 0, prev2[i_shift], np.inf)  # (i-1, j-1)
            cur_vals = np.maximum(dd, np.minimum(np.minimum(up, left), diag))
        cur = np.full(m, np.inf)
        cur[lo : hi + 1] = cur_vals
        prev2, prev1 = prev1, cur
    return float(prev1[m - 1])


def localization_errors(estimate: Trajectory, groundtruth: Trajectory) -> list[float]:
    """Element-wise ground distances between two equal-length trajectories.

    Raises:
        ValueError: if the trajectories differ in length or are empty.
    """
    if len(estimate) != len(groundtruth):
        raise ValueError(
            f"trajectory lengths differ: {len(estimate)} vs {len(groundtruth)}"
        )
    if len(estimate) == 0:
        raise ValueError("trajectories must be non-empty")
    ephi, elam, ecos = _rad_arrays(estimate)
    gphi, glam, gcos = _rad_arrays(groundtruth)
    return _haversine_vec(ephi, elam, ecos, gphi, glam, gcos).tolist()


def third_quantile(samples: Sequence[float]) -> float:
    """75th percentile by linear interpolation between closest ranks."""
    if len(samples) == 0:
        raise ValueError("samples must be non-empty")
    return float(np.percentile(np.asarray(samples, dtype=float), 75.0))


@dataclass(frozen=True)
class CdfPoint:
    error_m: float
    fraction: float
    is_q3: bool


def cdf(samples: Sequence[float]) -> list[CdfPoint]:
    """Empirical CDF table over the distinct sample values.

    Each row gives the fraction of samples at or below that error; the last
    fraction is 1.0. The first row whose fraction reaches 0.75 is flagged as
    the third-quantile marker.

    Raises:
        ValueError: if `samples` is empty.
    """
    if len(samples) == 0:
        raise ValueError("samples must be non-empty")
    arr = np.asarray(samples, dtype=float)
    values, counts = np.unique(arr, return_counts=True)
    fractions = np.cumsum(counts) / arr.size
    q3_idx = int(np.searchsorted(fractions, 0.75))
    return [
        CdfPoint(error_m=float(v), fraction=float(f), is_q3=(idx == q3_idx))
        for idx, (v, f) in enumerate(zip(values, fractions))
    ]


@dataclass(frozen=True)
class DeviceMetrics:
    """Per-device evaluation of the collaborative track against PDR and groundtruth."""

    device_id: str
    dfd_pdr_m: float
    dfd_aoe_m: float
    q3_pdr_m: float
    q3_aoe_m: float
    error_samples_m: tuple[float, ...]  # AOE localization errors, sorted ascending
    collaboration_count: int
    improvement: float  # (q3_pdr - q3_aoe) / q3_pdr


@dataclass(frozen=True)
class MetricsReport:
    """Per-device metrics plus aggregate improvement statistics.

    `mean_improvement` averages the per-device relative q3 improvements;
    `pooled_improvement` is the relative change of the q3 computed over all
    devices' errors pooled together. Both views are reported because they can
    differ when device error scales differ.
    """

    devices: tuple[DeviceMetrics, ...]
    mean_improvement: float
    pooled_improvement: float
    q3_improved_count: int
    dfd_improved_count: int

    @property
    def device_count(self) -> int:
        return len(self.devices)


def _relative_improvement(before: float, after: float) -> float:
    if before == 0.0:
        return 0.0
    return (before - after) / before


def improvement_summary(record: "RunRecord") -> MetricsReport:
    """Score a replay: per-device DFD and q3 for both tracks, plus aggregates."""
    devices: list[DeviceMetrics] = []
    pooled_pdr: list[float] = []
    pooled_aoe: list[float] = []
    for device_id in sorted(record.tracks):
        track = record.tracks[device_id]
        err_pdr = localization_errors(track.pdr, track.groundtruth)
        err_aoe = localization_errors(track.aoe, track.groundtruth)
        pooled_pdr.extend(err_pdr)
        pooled_aoe.extend(err_aoe)
        q3_pdr = third_quantile(err_pdr)
        q3_aoe = third_quantile(err_aoe)
        devices.append(
            DeviceMetrics(
                device_id=device_id,
                dfd_pdr_m=dfd(track.pdr, track.groundtruth),
                dfd_aoe_m=dfd(track.aoe, track.groundtruth),
                q3_pdr_m=q3_pdr,
                q3_aoe_m=q3_aoe,
                error_samples_m=tuple(sorted(err_aoe)),
                collaboration_count=track.collaboration_count,
                improvement=_relative_improvement(q3_pdr, q3_aoe),
            )
        )
    mean_improvement = float(np.mean([d.improvement for d in devices])) if devices else 0.0
    pooled_improvement = (
        _relative_improvement(third_quantile(pooled_pdr), third_quantile(pooled_aoe))
        if pooled_pdr
        else 0.0
    )
    return MetricsReport(
        devices=tuple(devices),
        mean_improvement=mean_improvement,
        pooled_improvement=pooled_improvement,
        q3_improved_count=sum(1 for d in devices if d.q3_aoe_m < d.q3_pdr_m),
        dfd_improved_count=sum(1 for d in devices if d.dfd_aoe_m < d.dfd_pdr_m),
    )


def write_metrics_csv(report: MetricsReport, path: str | Path) -> None:
    """Write the per-device summary (dfd_m is the collaborative track's DFD)."""
    with atomic_path(Path(path)) as tmp, open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_CSV_HEADER)
        for d in report.devices:
            writer.writerow(
                [d.device_id, d.dfd_aoe_m, d.q3_pdr_m, d.q3_aoe_m, d.improvement, d.collaboration_count]
            )


def write_cdf_csv(samples: Sequence[float], path: str | Path) -> None:
    """Write one device's error CDF with the third-quantile row flagged."""
    with atomic_path(Path(path)) as tmp, open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CDF_CSV_HEADER)
        for point in cdf(samples):
            writer.writerow([point.error_m, point.fraction, int(point.is_q3)])
