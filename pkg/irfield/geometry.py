"""Sphere coordinate helpers (degrees, azimuth in [0, 360))."""

from typing import Sequence, Tuple, Union

import numpy as np


def spherical_to_cartesian(azimuth_deg: float, elevation_deg: float, radius: float = 1.0) -> Tuple[float, float, float]:
    """x = r cos(el) cos(az), y = r cos(el) sin(az), z = r sin(el)."""
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    return (
        float(radius * np.cos(el) * np.cos(az)),
        float(radius * np.cos(el) * np.sin(az)),
        float(radius * np.sin(el)),
    )


def cartesian_to_spherical(position: Sequence[float]) -> Tuple[float, float]:
    """Get (azimuth_deg in [0, 360), elevation_deg in [-90, 90]) of a position."""
    x, y, z = (float(v) for v in position)
    az = float(np.rad2deg(np.arctan2(y, x)) % 360.0)
    el = float(np.rad2deg(np.arctan2(z, np.hypot(x, y))))
    return az, el


def chord_distance(
    a: Union[Sequence[float], np.ndarray], b: Union[Sequence[float], np.ndarray]
) -> Union[float, np.ndarray]:
    """Euclidean distance along the last axis; (n, 3) against (3,) gives n distances."""
    dist = np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64), axis=-1)
    return float(dist) if np.ndim(dist) == 0 else dist
