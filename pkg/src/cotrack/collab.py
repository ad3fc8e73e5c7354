"""Accumulation-of-errors (AOE) peer collaboration.

Two devices within detection range exchange their estimated locations and
error counters. Each device then pulls its own estimate along the segment
toward the peer's estimate, by the fraction of the summed error it owns,
provided its error exceeds the lower threshold and the peer's error is still
under the upper threshold. A device that did not move over the last tick
drains one error per exchange, which turns parked devices into reset points.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .geodesy import GeoPoint, intermediate_point


@dataclass(frozen=True)
class DeviceState:
    """The broadcastable device state plus the previous tick's location.

    `errors` grows as the device walks and is the collaboration weight;
    `previous_location` is the estimate at the end of the previous tick and
    feeds the stationarity test.
    """

    location: GeoPoint
    errors: int
    previous_location: GeoPoint

    def __post_init__(self):
        if self.errors < 0:
            raise ValueError("errors counter must be non-negative")


@dataclass(frozen=True)
class CollabConfig:
    """Collaboration thresholds: correct above `lower`, distrust peers above `upper`."""

    lower: int = 40
    upper: int = 80

    def __post_init__(self):
        if not 0 <= self.lower < self.upper:
            raise ValueError(
                f"thresholds must satisfy 0 <= lower < upper, got ({self.lower}, {self.upper})"
            )


def update_guard(a: DeviceState, b: DeviceState, cfg: CollabConfig) -> bool:
    """Whether A may adopt the interpolated location (strict threshold comparisons)."""
    return cfg.lower < a.errors and b.errors < cfg.upper


def aoe_step(a: DeviceState, b: DeviceState, cfg: CollabConfig) -> DeviceState:
    """Run one collaboration exchange from A's point of view; returns the updated A.

    When the summed errors are zero the exchange is a no-op. Otherwise A's
    location may move to the point a.errors/(a.errors+b.errors) of the way
    toward B, and A drains one error if it ends the exchange where it ended
    the previous tick (a location just moved by the exchange does not count
    as stationary). B is never mutated; B runs its own symmetric call.
    """
    sum_errors = a.errors + b.errors
    if sum_errors == 0:
        return a
    ratio = a.errors / sum_errors
    location = a.location
    if update_guard(a, b, cfg):
        location = intermediate_point(a.location, b.location, ratio)
    errors = a.errors
    if a.previous_location == location and errors > 0:
        errors -= 1
    return DeviceState(location=location, errors=errors, previous_location=a.previous_location)


def accumulate_error(state: DeviceState) -> DeviceState:
    """Grow the error counter by one (called once per detected step)."""
    return replace(state, errors=state.errors + 1)
