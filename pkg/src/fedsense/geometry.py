"""Spatial layouts: hardcore-thinned UAV point clouds and radar placement.

UAVs live in a rectangular box and must keep a minimum pairwise separation,
which we realize with Matern type-II thinning: uniform parent points get
independent uniform marks and a point is deleted whenever a neighbour
closer than ``d_min`` carries a smaller mark.  The proposal is resampled
until enough points survive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, PackingFailure


@dataclass(frozen=True)
class Position3D:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass
class SceneGeometry:
    """One setting's layout: UAV positions, radar position, and derived ranges."""

    uav_positions: list[Position3D]
    radar_position: Position3D
    distances_m: list[float]
    elevations_deg: list[float]

    @property
    def num_uavs(self) -> int:
        return len(self.uav_positions)


def sample_uav_positions(
    n: int,
    d_min: float,
    bounds: tuple[float, float, float],
    rng: np.random.Generator,
    retry_budget: int = 1000,
) -> list[Position3D]:
    """Draw ``n`` points in the box with all pairwise distances >= ``d_min``.

    Parameters
    ----------
    n : number of points to place (>= 1).
    d_min : hardcore distance in meters.
    bounds : (x_max, y_max, z_max) box extents in meters.
    rng : random stream owning all draws.
    retry_budget : proposals to attempt before giving up.

    Raises
    ------
    PackingFailure
        If the sphere-packing volume bound rules the request out, or the
        retry budget exhausts without ``n`` survivors.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if d_min <= 0:
        raise ValueError(f"need d_min > 0, got {d_min}")
    extents = np.asarray(bounds, dtype=float)
    if n > 1:
        sphere_vol = 4.0 / 3.0 * math.pi * (d_min / 2.0) ** 3
        if n * sphere_vol >= float(np.prod(extents)):
            raise PackingFailure(
                f"{n} spheres of diameter {d_min} m cannot pack into bounds {bounds}"
            )

    lam = 2 * n + 4
    for _ in range(retry_budget):
        n_parents = int(rng.poisson(lam))
        if n_parents < n:
            continue
        pts = rng.random((n_parents, 3)) * extents
        marks = rng.random(n_parents)
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        # survive iff every neighbour inside d_min has a larger mark
        loses = (dist < d_min) & (marks[None, :] < marks[:, None])
        survivors = ~loses.any(axis=1)
        if survivors.sum() >= n:
            order = np.argsort(marks[survivors])[:n]
            chosen = pts[survivors][order]
            return [Position3D(*p) for p in chosen]
    raise PackingFailure(
        f"retry budget {retry_budget} exhausted placing {n} points "
        f"with d_min={d_min} in bounds {bounds}"
    )


def sample_radar_position(
    bounds: tuple[float, float], z_r: float, rng: np.random.Generator
) -> Position3D:
    """Uniform position on the horizontal plane at fixed altitude ``z_r``."""
    if z_r < 0:
        raise ValueError(f"need z_r >= 0, got {z_r}")
    x = rng.uniform(0.0, bounds[0]) if bounds[0] > 0 else 0.0
    y = rng.uniform(0.0, bounds[1]) if bounds[1] > 0 else 0.0
    return Position3D(x, y, float(z_r))


def distance(a: Position3D, b: Position3D) -> float:
    """Euclidean distance in meters."""
    return math.dist((a.x, a.y, a.z), (b.x, b.y, b.z))


def elevation_angle(uav: Position3D, radar: Position3D) -> float:
    """Elevation of the UAV as seen from the radar, in degrees.

    Positive when the UAV is above the radar; +-90 when directly
    above/below.  Raises DegenerateGeometry for coincident points.
    """
    dz = uav.z - radar.z
    horizontal = math.hypot(uav.x - radar.x, uav.y - radar.y)
    if horizontal == 0.0:
        if dz == 0.0:
            raise DegenerateGeometry("elevation undefined for coincident points")
        return 90.0 if dz > 0 else -90.0
    return math.degrees(math.atan2(dz, horizontal))


def sample_scene(
    n: int,
    d_min: float,
    bounds: tuple[float, float, float],
    z_r: float,
    rng: np.random.Generator,
    retry_budget: int = 1000,
) -> SceneGeometry:
    """Sample one complete setting: UAV cloud, radar, distances, elevations."""
    uavs = sample_uav_positions(n, d_min, bounds, rng, retry_budget)
    radar = sample_radar_position((bounds[0], bounds[1]), z_r, rng)
    dists = [distance(u, radar) for u in uavs]
    elevs = [elevation_angle(u, radar) for u in uavs]
    return SceneGeometry(uavs, radar, dists, elevs)
