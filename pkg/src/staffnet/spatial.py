"""Spatial join of pings to facility footprints and visit qualification.

A uniform lat/lon grid index keeps candidate lists short; the actual
membership test is exact ray casting, so results are identical for any
positive cell size.  A device-facility pair qualifies as a staff-like
visit only when the device recorded more than ``TRACE_THRESHOLD`` pings
inside that facility's footprint over the whole study window.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .geometry import point_in_polygon, points_in_ring, ring_bbox
from .ingest import Facility, PingRecord, _text_stream

__all__ = [
    "TRACE_THRESHOLD",
    "SpatialIndex",
    "VisitAssignment",
    "build_index",
    "point_in_polygon",
    "assign_visits",
    "shared_device_fraction",
    "write_assignments",
    "read_assignments",
]

logger = logging.getLogger(__name__)

# A visit qualifies only with strictly more traces than this.
TRACE_THRESHOLD = 2

DEFAULT_CELL_DEG = 0.01

ASSIGNMENT_COLUMNS = ("device_id", "facility_id", "trace_count", "qualifies")

# Grid keys are packed into int64 as row * 2**32 + col; bounding the cell
# size keeps |row|, |col| < 2**31.
_MIN_CELL_DEG = 1e-5
_KEY_BASE = 2**32


@dataclass(frozen=True)
class VisitAssignment:
    """Ping count for one (device, facility) pair over the study window."""

    device_id: str
    facility_id: str
    trace_count: int
    qualifies: bool

    def __post_init__(self):
        if self.trace_count < 1:
            raise ValueError(f"trace_count must be >= 1, got {self.trace_count}")
        if self.qualifies != (self.trace_count > TRACE_THRESHOLD):
            raise ValueError("qualifies flag inconsistent with trace_count")

    @classmethod
    def from_count(cls, device_id: str, facility_id: str, trace_count: int) -> "VisitAssignment":
        return cls(device_id, facility_id, trace_count, trace_count > TRACE_THRESHOLD)


@dataclass
class SpatialIndex:
    """Uniform grid mapping cells to facilities whose bbox touches them."""

    cell_deg: float
    facility_ids: list[str]
    rings: list[np.ndarray]
    bboxes: np.ndarray  # (m, 4): lat_min, lat_max, lon_min, lon_max
    cells: dict[tuple[int, int], list[int]]

    def cell_of(self, lat: float, lon: float) -> tuple[int, int]:
        return (math.floor(lat / self.cell_deg), math.floor(lon / self.cell_deg))

    def candidates(self, lat: float, lon: float) -> list[int]:
        """Positions (into ``facility_ids``) whose bbox cell covers the point.

        Always a superset of the facilities actually containing the point.
        """
        return self.cells.get(self.cell_of(lat, lon), [])


def _bbox_cells(bbox: np.ndarray, cell_deg: float):
    row_lo = math.floor(bbox[0] / cell_deg)
    row_hi = math.floor(bbox[1] / cell_deg)
    col_lo = math.floor(bbox[2] / cell_deg)
    col_hi = math.floor(bbox[3] / cell_deg)
    for row in range(row_lo, row_hi + 1):
        for col in range(col_lo, col_hi + 1):
            yield row, col


def build_index(facilities: Sequence[Facility], cell_deg: float = DEFAULT_CELL_DEG) -> SpatialIndex:
    """Index facility footprints on a uniform grid.

    Parameters
    ----------
    facilities : sequence of Facility
        All must have resolved polygons.
    cell_deg : float
        Grid cell size in degrees; any positive value yields identical
        join results, only candidate list lengths change.
    """
    if not cell_deg > 0:
        raise ValueError(f"cell_deg must be positive, got {cell_deg}")
    if cell_deg < _MIN_CELL_DEG:
        raise ValueError(f"cell_deg below supported minimum {_MIN_CELL_DEG}")
    ids: list[str] = []
    rings: list[np.ndarray] = []
    bboxes = np.empty((len(facilities), 4), dtype=float)
    cells: dict[tuple[int, int], list[int]] = {}
    for pos, facility in enumerate(facilities):
        if facility.polygon is None:
            raise InputError(f"facility {facility.facility_id} has no polygon; resolve it before indexing")
        ring = np.asarray(facility.polygon, dtype=float)
        ids.append(facility.facility_id)
        rings.append(ring)
        bboxes[pos] = ring_bbox(ring)
        for cell in _bbox_cells(bboxes[pos], cell_deg):
            cells.setdefault(cell, []).append(pos)
    return SpatialIndex(cell_deg=cell_deg, facility_ids=ids, rings=rings, bboxes=bboxes, cells=cells)


def _facility_hits(
    positions: Sequence[int],
    index: SpatialIndex,
    sorted_keys: np.ndarray,
    order: np.ndarray,
    lat: np.ndarray,
    lon: np.ndarray,
    codes: np.ndarray,
) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Per-facility unique (device code, ping count) pairs for contained pings."""
    out = []
    for pos in positions:
        bbox = index.bboxes[pos]
        chunks = []
        for row, col in _bbox_cells(bbox, index.cell_deg):
            key = row * _KEY_BASE + col
            lo = np.searchsorted(sorted_keys, key, side="left")
            hi = np.searchsorted(sorted_keys, key, side="right")
            if hi > lo:
                chunks.append(order[lo:hi])
        if not chunks:
            continue
        cand = np.concatenate(chunks)
        clat = lat[cand]
        clon = lon[cand]
        near = (clat >= bbox[0]) & (clat <= bbox[1]) & (clon >= bbox[2]) & (clon <= bbox[3])
        if not near.any():
            continue
        cand = cand[near]
        hit = points_in_ring(lat[cand], lon[cand], index.rings[pos])
        if not hit.any():
            continue
        devices, counts = np.unique(codes[cand[hit]], return_counts=True)
        out.append((pos, devices, counts))
    return out


def assign_visits(
    pings: Iterable[PingRecord],
    index: SpatialIndex,
    facilities: Sequence[Facility],
    threads: int = 1,
) -> list[VisitAssignment]:
    """Count pings per (device, facility) pair and apply the visit rule.

    One assignment is emitted per pair with at least one contained ping;
    ``qualifies`` is true when the count exceeds ``TRACE_THRESHOLD``.  A
    ping inside two overlapping footprints counts toward both.  Output is
    sorted by ``(device_id, facility_id)`` and is invariant to ping order,
    grid cell size, and ``threads``.
    """
    if set(index.facility_ids) != {f.facility_id for f in facilities}:
        raise InputError("spatial index does not cover the supplied facilities")
    records = list(pings)
    if not records:
        return []

    n = len(records)
    lat = np.fromiter((p.latitude for p in records), dtype=float, count=n)
    lon = np.fromiter((p.longitude for p in records), dtype=float, count=n)
    code_of: dict[str, int] = {}
    codes = np.empty(n, dtype=np.int64)
    for i, record in enumerate(records):
        codes[i] = code_of.setdefault(record.device_id, len(code_of))
    device_ids = list(code_of)

    cell = index.cell_deg
    keys = (
        np.floor(lat / cell).astype(np.int64) * _KEY_BASE
        + np.floor(lon / cell).astype(np.int64)
    )
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]

    positions = range(len(index.facility_ids))
    if threads <= 1:
        batches = [_facility_hits(positions, index, sorted_keys, order, lat, lon, codes)]
    else:
        chunk = max(1, math.ceil(len(index.facility_ids) / threads))
        parts = [list(positions[i : i + chunk]) for i in range(0, len(index.facility_ids), chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(
                pool.map(
                    lambda part: _facility_hits(part, index, sorted_keys, order, lat, lon, codes),
                    parts,
                )
            )

    assignments: list[VisitAssignment] = []
    for batch in batches:
        for pos, devices, counts in batch:
            facility_id = index.facility_ids[pos]
            for device_code, count in zip(devices, counts):
                assignments.append(
                    VisitAssignment.from_count(device_ids[device_code], facility_id, int(count))
                )
    assignments.sort(key=lambda a: (a.device_id, a.facility_id))
    return assignments


def shared_device_fraction(assignments: Iterable[VisitAssignment]) -> float:
    """Share of qualifying devices that qualify in two or more facilities."""
    per_device: dict[str, int] = {}
    for assignment in assignments:
        if assignment.qualifies:
            per_device[assignment.device_id] = per_device.get(assignment.device_id, 0) + 1
    if not per_device:
        logger.warning("shared_device_fraction: no qualifying devices; defining fraction as 0")
        return 0.0
    multi = sum(1 for count in per_device.values() if count >= 2)
    return multi / len(per_device)


def write_assignments(assignments: Iterable[VisitAssignment], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ASSIGNMENT_COLUMNS)
        for a in assignments:
            writer.writerow([a.device_id, a.facility_id, a.trace_count, "1" if a.qualifies else "0"])


def read_assignments(source) -> list[VisitAssignment]:
    stream, owns = _text_stream(source)
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != ASSIGNMENT_COLUMNS:
            raise InputError(f"assignment file header mismatch: {header}")
        out = []
        for line in reader:
            if not line:
                continue
            device_id, facility_id, count_text, qualifies_text = line
            out.append(
                VisitAssignment(device_id, facility_id, int(count_text), qualifies_text.strip() == "1")
            )
        return out
    finally:
        if owns:
            stream.close()
