"""Great-circle distances between WGS84 points."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from marketflow.errors import DimensionError, ValidationError

# IUGG mean Earth radius
EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class GeoPoint:
    id: str
    lat: float
    lon: float

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("point id must be a non-empty string")
        lat, lon = float(self.lat), float(self.lon)
        if not -90.0 <= lat <= 90.0:
            raise ValidationError(f"latitude {lat} of point {self.id!r} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise ValidationError(f"longitude {lon} of point {self.id!r} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


def _haversine(lat1, lon1, lat2, lon2):
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in kilometres."""
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0
    return float(_haversine(a.lat, a.lon, b.lat, b.lon))


def distance_matrix(origins: Sequence[GeoPoint], destinations: Sequence[GeoPoint]) -> np.ndarray:
    """Return the I x J matrix of haversine distances (km).

    Entry ``[i, j]`` is ``haversine_km(origins[i], destinations[j])``.
    """
    if len(origins) == 0 or len(destinations) == 0:
        raise DimensionError("distance_matrix needs at least one origin and one destination")
    olat = np.array([p.lat for p in origins])[:, None]
    olon = np.array([p.lon for p in origins])[:, None]
    dlat = np.array([p.lat for p in destinations])[None, :]
    dlon = np.array([p.lon for p in destinations])[None, :]
    out = _haversine(olat, olon, dlat, dlon)
    # exact zeros for coincident points regardless of rounding
    out[(olat == dlat) & (olon == dlon)] = 0.0
    return out

