"""Small-scale geodesic and planar polygon helpers.

Coordinates are WGS84 decimal degrees throughout.  Polygon rings are
``(k, 2)`` arrays of ``(lat, lon)`` vertices without a repeated closing
vertex; closure is implicit.  Rings are assumed to be far from the poles
and the antimeridian, which holds for building footprints in the
continental U.S. and for the synthetic scenarios shipped with this
package.
"""

from __future__ import annotations

import math

import numpy as np

EARTH_RADIUS_M = 6_371_008.8


def as_ring(vertices) -> np.ndarray:
    """Coerce to a float ``(k, 2)`` ring, dropping a repeated closing vertex."""
    arr = np.asarray(vertices, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"ring must be a sequence of (lat, lon) pairs, got shape {arr.shape}")
    if len(arr) >= 2 and np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    return arr


def validate_ring(vertices, name: str = "ring") -> np.ndarray:
    """Check that a ring is a simple closed polygon and return it normalized.

    Raises ``ValueError`` when the ring has fewer than 3 distinct vertices,
    repeats a vertex, or any two non-adjacent edges touch or cross.
    """
    arr = as_ring(vertices)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite vertex coordinates")
    if len(np.unique(arr, axis=0)) < 3:
        raise ValueError(f"{name}: fewer than 3 distinct vertices")
    if len(np.unique(arr, axis=0)) != len(arr):
        raise ValueError(f"{name}: repeated vertex")
    if not _ring_is_simple(arr):
        raise ValueError(f"{name}: self-intersecting polygon")
    return arr


def ring_bbox(ring: np.ndarray) -> tuple[float, float, float, float]:
    """(lat_min, lat_max, lon_min, lon_max) of a ring."""
    arr = np.asarray(ring, dtype=float)
    return (
        float(arr[:, 0].min()),
        float(arr[:, 0].max()),
        float(arr[:, 1].min()),
        float(arr[:, 1].max()),
    )


def local_offset(center: tuple[float, float], east_m: float, north_m: float) -> tuple[float, float]:
    """Point at a metric offset from ``center`` on the local tangent plane."""
    lat0, lon0 = center
    lat = lat0 + math.degrees(north_m / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def regular_geodesic_polygon(center: tuple[float, float], radius_m: float, n_vertices: int = 16) -> np.ndarray:
    """Regular ``n_vertices``-gon approximating a circle of ``radius_m`` around ``center``."""
    if radius_m <= 0:
        raise ValueError(f"radius must be positive, got {radius_m}")
    lat0, lon0 = center
    if not (-90.0 <= lat0 <= 90.0 and -180.0 <= lon0 <= 180.0):
        raise ValueError(f"center out of range: ({lat0}, {lon0})")
    if abs(lat0) > 89.0:
        raise ValueError("polygon construction unsupported above 89 degrees latitude")
    verts = np.empty((n_vertices, 2), dtype=float)
    for k in range(n_vertices):
        theta = 2.0 * math.pi * k / n_vertices
        verts[k] = local_offset(center, radius_m * math.cos(theta), radius_m * math.sin(theta))
    return verts


def inscribed_radius_m(radius_m: float, n_vertices: int = 16) -> float:
    """Radius of the circle inscribed in a regular polygon of circumradius ``radius_m``."""
    return radius_m * math.cos(math.pi / n_vertices)


def point_in_polygon(point: tuple[float, float], ring) -> bool:
    """Even-odd ray-casting membership test; boundary points count as inside.

    ``point`` is ``(lat, lon)`` and ``ring`` a simple closed polygon.  Raises
    ``ValueError`` for rings with fewer than 3 distinct vertices.
    """
    arr = as_ring(ring)
    if len(np.unique(arr, axis=0)) < 3:
        raise ValueError("degenerate ring: fewer than 3 distinct vertices")
    px, py = float(point[0]), float(point[1])
    n = len(arr)
    inside = False
    j = n - 1
    for i in range(n):
        x1, y1 = arr[j]
        x2, y2 = arr[i]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if (
            cross == 0.0
            and min(x1, x2) <= px <= max(x1, x2)
            and min(y1, y2) <= py <= max(y1, y2)
        ):
            return True
        if y1 != y2 and (y1 > py) != (y2 > py):
            xint = (x2 - x1) * (py - y1) / (y2 - y1) + x1
            if px < xint:
                inside = not inside
        j = i
    return inside


def points_in_ring(lats: np.ndarray, lons: np.ndarray, ring) -> np.ndarray:
    """Vectorized ``point_in_polygon`` over parallel coordinate arrays.

    Uses the same per-edge arithmetic as the scalar test so both agree
    bit-for-bit on every input.
    """
    arr = as_ring(ring)
    px = np.asarray(lats, dtype=float)
    py = np.asarray(lons, dtype=float)
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    n = len(arr)
    j = n - 1
    for i in range(n):
        x1, y1 = arr[j]
        x2, y2 = arr[i]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        on_edge |= (
            (cross == 0.0)
            & (px >= min(x1, x2))
            & (px <= max(x1, x2))
            & (py >= min(y1, y2))
            & (py <= max(y1, y2))
        )
        if y1 != y2:
            crosses = (y1 > py) != (y2 > py)
            xint = (x2 - x1) * (py - y1) / (y2 - y1) + x1
            inside ^= crosses & (px < xint)
        j = i
    return inside | on_edge


def _ring_is_simple(arr: np.ndarray) -> bool:
    """True when no two non-adjacent edges of the ring touch or cross."""
    n = len(arr)
    p = arr
    q = np.roll(arr, -1, axis=0)
    # Orientation of point c relative to segment a->b, all pairs at once:
    # d[i, j] = orient(p[i], q[i], p[j]).
    def orient(ax, ay, bx, by, cx, cy):
        return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)

    ax, ay = p[:, 0][:, None], p[:, 1][:, None]
    bx, by = q[:, 0][:, None], q[:, 1][:, None]
    d1 = orient(ax, ay, bx, by, p[:, 0][None, :], p[:, 1][None, :])
    d2 = orient(ax, ay, bx, by, q[:, 0][None, :], q[:, 1][None, :])

    def on_segment(sx1, sy1, sx2, sy2, cx, cy):
        return (
            (cx >= np.minimum(sx1, sx2))
            & (cx <= np.maximum(sx1, sx2))
            & (cy >= np.minimum(sy1, sy2))
            & (cy <= np.maximum(sy1, sy2))
        )

    # Segment pair (i, j) touches or crosses when the endpoints of each
    # straddle the other, or an endpoint lies exactly on the other segment.
    opposite = d1 * d2 < 0
    straddle = opposite & opposite.T
    touch = (
        ((d1 == 0) & on_segment(ax, ay, bx, by, p[:, 0][None, :], p[:, 1][None, :]))
        | ((d2 == 0) & on_segment(ax, ay, bx, by, q[:, 0][None, :], q[:, 1][None, :]))
    )
    bad = straddle | touch | touch.T
    idx = np.arange(n)
    adjacent = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (
        np.abs(idx[:, None] - idx[None, :]) == n - 1
    )
    return not bool(np.any(bad & ~adjacent))
