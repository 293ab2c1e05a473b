"""Spherical geodesy helpers (sphere radius 6,371,000 m).

Accuracy at trajectory scale (< a few hundred km) is well within the noise
of AIS positioning, so no ellipsoidal model is used.
"""

from math import asin, atan2, cos, degrees, radians, sin, sqrt

EARTH_RADIUS_M = 6_371_000.0

# below this displacement the initial bearing is numerically meaningless
DEGENERATE_DISTANCE_M = 1.0


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two points in meters."""
    phi1, lam1, phi2, lam2 = map(radians, (lat1, lon1, lat2, lon2))
    dphi = phi2 - phi1
    dlam = lam2 - lam1
    a = sin(dphi / 2.0) ** 2 + cos(phi1) * cos(phi2) * sin(dlam / 2.0) ** 2
    return EARTH_RADIUS_M * 2.0 * asin(min(1.0, sqrt(a)))


def bearing(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Initial great-circle bearing from point 1 to point 2, degrees in [0, 360).

    Returns 0.0 when the displacement is below 1 m (degenerate case).
    """
    if haversine(lat1, lon1, lat2, lon2) < DEGENERATE_DISTANCE_M:
        return 0.0
    phi1, lam1, phi2, lam2 = map(radians, (lat1, lon1, lat2, lon2))
    dlam = lam2 - lam1
    y = sin(dlam) * cos(phi2)
    x = cos(phi1) * sin(phi2) - sin(phi1) * cos(phi2) * cos(dlam)
    return degrees(atan2(y, x)) % 360.0


def destination(lat: float, lon: float, bearing_deg: float,
                distance_m: float) -> tuple[float, float]:
    """Point reached from (lat, lon) along an initial bearing for distance_m."""
    delta = distance_m / EARTH_RADIUS_M
    theta = radians(bearing_deg)
    phi1 = radians(lat)
    lam1 = radians(lon)
    phi2 = asin(sin(phi1) * cos(delta) + cos(phi1) * sin(delta) * cos(theta))
    lam2 = lam1 + atan2(sin(theta) * sin(delta) * cos(phi1),
                        cos(delta) - sin(phi1) * sin(phi2))
    lon2 = (degrees(lam2) + 540.0) % 360.0 - 180.0
    if lon2 == -180.0:
        lon2 = 180.0
    return degrees(phi2), lon2
