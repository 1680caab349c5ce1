"""Shared fixtures and independent oracle helpers for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from staffnet.econometrics import AnalysisRow
from staffnet.ingest import Facility
from staffnet.network import FacilityNetwork


def haversine_m(a: tuple[float, float], b: tuple[float, float], radius_m: float = 6_371_000.0) -> float:
    """Great-circle distance oracle, independent of the package's geometry."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * radius_m * math.asin(math.sqrt(h))


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise."""
    pts = sorted(map(tuple, points))
    if len(pts) <= 2:
        raise ValueError("need at least 3 points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def point_in_convex(point, hull: np.ndarray) -> bool:
    """Containment in a CCW convex polygon via cross-product signs (boundary in)."""
    n = len(hull)
    for i in range(n):
        a = hull[i]
        b = hull[(i + 1) % n]
        cross = (b[0] - a[0]) * (point[1] - a[1]) - (b[1] - a[1]) * (point[0] - a[0])
        if cross < 0:
            return False
    return True


def random_connected_network(rng: np.random.Generator, n: int, extra_edges: int, max_weight: int = 4,
                             key: str = "XX") -> FacilityNetwork:
    """Random spanning tree plus extra edges; connected, so the principal
    eigenpair is unique and dense-solver comparisons are well posed."""
    nodes = [f"F{i:03d}" for i in range(n)]
    edges: dict[tuple[str, str], int] = {}
    for i in range(1, n):
        j = int(rng.integers(0, i))
        a, b = sorted((nodes[i], nodes[j]))
        edges[(a, b)] = int(rng.integers(1, max_weight + 1))
    for _ in range(extra_edges):
        i, j = rng.choice(n, size=2, replace=False)
        a, b = sorted((nodes[int(i)], nodes[int(j)]))
        edges[(a, b)] = int(rng.integers(1, max_weight + 1))
    return FacilityNetwork(partition_key=key, nodes=nodes, edges=dict(sorted(edges.items())))


def make_facility(facility_id: str, state: str = "CT", **overrides) -> Facility:
    values = dict(
        facility_id=facility_id,
        name=f"Home {facility_id}",
        state=state,
        county_fips="09001",
        address=f"{facility_id} Main St",
        polygon=np.array([(41.30, -72.93), (41.30, -72.92), (41.31, -72.92), (41.31, -72.93)]),
        beds=100,
        cases=5,
        high_medicaid=False,
        high_black=False,
        urban=True,
        cms_rating=3,
        infection_violation=False,
    )
    values.update(overrides)
    return Facility(**values)


def random_analysis_rows(rng: np.random.Generator, n: int, n_groups: int, fe_level: str = "state") -> list[AnalysisRow]:
    """Random continuous covariates with group structure for FE tests."""
    rows = []
    for i in range(n):
        group = int(rng.integers(0, n_groups))
        rows.append(
            AnalysisRow(
                facility_id=f"F{i:04d}",
                state=f"S{group:02d}" if fe_level == "state" else "ZZ",
                county=f"{group:05d}",
                cases=int(rng.integers(0, 60)),
                degree=float(rng.integers(0, 40)),
                strength=float(rng.integers(0, 60)),
                wand=float(rng.normal(20, 8)),
                eigencentrality=float(rng.random()),
                beds=float(rng.integers(30, 250)),
                high_medicaid=bool(rng.random() < 0.3),
                high_black=bool(rng.random() < 0.2),
                urban=bool(rng.random() < 0.7),
                cms_rating=int(rng.integers(1, 6)),
                infection_violation=bool(rng.random() < 0.5),
            )
        )
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(20240612)
