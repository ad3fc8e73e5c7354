"""Pedestrian dead reckoning: advance a planar position one detected step at a time.

The state lives in a local planar frame anchored at the initial geographic
position. Heading convention throughout: 0 points local east (+x), pi/2 local
north (+y), counterclockwise positive. Each step moves the position by
step_length * (cos(heading), sin(heading)).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math

from .geodesy import (
    FRAME_VALIDITY_RADIUS_M,
    GeoPoint,
    LocalFrame,
    haversine,
    local_frame,
    project,
    unproject,
)
from .inertial import StepEvent


@dataclass(frozen=True)
class PdrState:
    """Dead-reckoning state: planar offset from the anchor plus walk parameters."""

    frame: LocalFrame
    x: float
    y: float
    step_length: float
    heading: float
    steps_taken: int


def init(initial: GeoPoint, step_length: float, initial_heading: float) -> PdrState:
    """Start dead reckoning at a known position with a calibrated step length."""
    if step_length <= 0.0:
        raise ValueError("step_length must be positive")
    return PdrState(
        frame=local_frame(initial),
        x=0.0,
        y=0.0,
        step_length=step_length,
        heading=initial_heading,
        steps_taken=0,
    )


def advance(state: PdrState, step: StepEvent) -> PdrState:
    """Apply one step: position moves by step_length along the step's heading."""
    return replace(
        state,
        x=state.x + state.step_length * math.cos(step.heading),
        y=state.y + state.step_length * math.sin(step.heading),
        steps_taken=state.steps_taken + 1,
    )


def position(state: PdrState) -> GeoPoint:
    """Current estimated position as a geographic point."""
    return unproject(state.frame, state.x, state.y)


def override_position(state: PdrState, p: GeoPoint) -> PdrState:
    """Rebase the planar coordinates onto `p` (the collaboration write-back path).

    Heading, step length and step count are untouched; only the position moves.

    Raises:
        ValueError: if `p` lies outside the frame's validity disc.
    """
    if haversine(state.frame.origin, p) > FRAME_VALIDITY_RADIUS_M:
        raise ValueError("position override outside the local frame's validity disc")
    x, y = project(state.frame, p)
    return replace(state, x=x, y=y)
