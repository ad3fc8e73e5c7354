"""Geographic primitives: great-circle distance, point interpolation, local planar frames.

All positions are WGS-style latitude/longitude pairs in degrees. Distances are
great-circle (spherical) in meters with a mean Earth radius; planar work happens
in an equirectangular frame anchored at a nearby origin, valid within ~10 km.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

# Radius of the disc around a frame origin inside which the planar
# approximation is trusted (indoor scale, with generous margin).
FRAME_VALIDITY_RADIUS_M = 10_000.0


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular projection anchored at `origin` (x east, y north, meters)."""

    origin: GeoPoint
    m_per_deg_lat: float
    m_per_deg_lon: float


def local_frame(origin: GeoPoint) -> LocalFrame:
    """Build a planar frame anchored at `origin`.

    Scale factors are fixed at the origin latitude, which is what bounds the
    frame's validity to a few kilometers around the anchor.
    """
    m_per_deg = EARTH_RADIUS_M * math.pi / 180.0
    return LocalFrame(
        origin=origin,
        m_per_deg_lat=m_per_deg,
        m_per_deg_lon=m_per_deg * math.cos(math.radians(origin.lat)),
    )


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in meters.

    Uses the haversine form 2*R*arcsin(sqrt(sin^2(dphi/2) +
    cos(phi_a)*cos(phi_b)*sin^2(dlambda/2))), numerically stable for the
    short distances this package cares about.
    """
    phi_a = math.radians(a.lat)
    phi_b = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi_a) * math.cos(phi_b) * math.sin(dlam / 2.0) ** 2
    # h can creep above 1 by a few ulp for near-antipodal points
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def intermediate_point(a: GeoPoint, b: GeoPoint, fraction: float) -> GeoPoint:
    """Point on the segment from `a` to `b` at the given fraction of its length.

    Fraction 0 returns `a` and fraction 1 returns `b`, exactly. Interpolation
    is linear in a planar frame anchored at `a`; at indoor distances this is
    indistinguishable from great-circle interpolation (see tests).

    Args:
        a, b: segment endpoints, expected within ~10 km of each other
        fraction: position along the segment, in [0, 1]

    Raises:
        ValueError: if fraction is outside [0, 1].
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    if fraction == 0.0 or a == b:
        return a
    if fraction == 1.0:
        return b
    frame = local_frame(a)
    bx, by = project(frame, b)
    return unproject(frame, fraction * bx, fraction * by)


def project(frame: LocalFrame, p: GeoPoint) -> tuple[float, float]:
    """Project `p` to planar (x east, y north) meters relative to the frame origin."""
    x = (p.lon - frame.origin.lon) * frame.m_per_deg_lon
    y = (p.lat - frame.origin.lat) * frame.m_per_deg_lat
    return x, y


def unproject(frame: LocalFrame, x: float, y: float) -> GeoPoint:
    """Inverse of :func:`project`."""
    return GeoPoint(
        lat=frame.origin.lat + y / frame.m_per_deg_lat,
        lon=frame.origin.lon + x / frame.m_per_deg_lon,
    )
