"""Simulated BLE channel: log-distance path loss, proximity test, payload codec.

The channel model is log-distance path loss with log-normal shadowing:
rssi(d) = p0 - 10 * exponent * log10(d) + noise, with p0 the (negative) RSSI
at the 1 m reference distance. Noise is drawn by the caller so these
functions stay pure and deterministic.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from .errors import PayloadError

DEFAULT_PROXIMITY_CUTOFF_M = 4.0

PAYLOAD_SIZE_BYTES = 20
_PAYLOAD_STRUCT = struct.Struct("<ddi")  # lat, lon as binary64; errors as int32


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path-loss parameters.

    p0_dbm: RSSI at the 1 m reference distance (negative dBm).
    exponent: environment-dependent decay rate.
    noise_sigma_db: standard deviation of the zero-mean Gaussian shadowing term.
    """

    p0_dbm: float = -59.0
    exponent: float = 2.0
    noise_sigma_db: float = 2.0

    def __post_init__(self):
        if self.exponent <= 0.0:
            raise ValueError("path-loss exponent must be positive")
        if self.noise_sigma_db < 0.0:
            raise ValueError("noise_sigma_db must be non-negative")


def rssi_at(model: PathLossModel, distance_m: float, noise_db: float = 0.0) -> float:
    """RSSI observed at a given true distance, with externally drawn noise.

    Raises:
        ValueError: if distance_m is not positive.
    """
    if distance_m <= 0.0:
        raise ValueError("distance must be positive")
    return model.p0_dbm - 10.0 * model.exponent * math.log10(distance_m) + noise_db


def distance_from_rssi(model: PathLossModel, rssi_dbm: float) -> float:
    """Distance estimate inverting the noiseless path-loss relation."""
    return 10.0 ** ((model.p0_dbm - rssi_dbm) / (10.0 * model.exponent))


def in_proximity(
    model: PathLossModel,
    measured_rssi_dbm: float,
    cutoff_m: float = DEFAULT_PROXIMITY_CUTOFF_M,
) -> bool:
    """True when the distance implied by the measured RSSI is strictly below cutoff."""
    return distance_from_rssi(model, measured_rssi_dbm) < cutoff_m


@dataclass(frozen=True)
class AdvertisementPayload:
    """What a device broadcasts: its position estimate and accumulated-error count."""

    lat: float
    lon: float
    errors: int


def encode(payload: AdvertisementPayload) -> bytes:
    """Pack a payload into its 20-byte wire form.

    Layout (little-endian): bytes 0-7 lat (binary64), 8-15 lon (binary64),
    16-19 errors (two's-complement int32).
    """
    try:
        return _PAYLOAD_STRUCT.pack(payload.lat, payload.lon, payload.errors)
    except struct.error as exc:
        raise PayloadError(f"payload not encodable: {exc}") from exc


def decode(data: bytes) -> AdvertisementPayload:
    """Unpack a 20-byte wire payload.

    Raises:
        PayloadError: if `data` is not exactly 20 bytes.
    """
    if len(data) != PAYLOAD_SIZE_BYTES:
        raise PayloadError(
            f"payload must be exactly {PAYLOAD_SIZE_BYTES} bytes, got {len(data)}"
        )
    lat, lon, errors = _PAYLOAD_STRUCT.unpack(data)
    return AdvertisementPayload(lat=lat, lon=lon, errors=errors)
