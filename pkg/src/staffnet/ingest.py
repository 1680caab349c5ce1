"""Input parsing and validation: ping streams, facility registries, geocoding.

File formats
------------
Ping file: delimited text with a header row and columns ``device_id``,
``timestamp`` (ISO-8601 UTC or epoch seconds), ``latitude``, ``longitude``.

Facility registry: delimited text with a header row and columns
``facility_id, name, state, county_fips, address, beds, cases,
high_medicaid, high_black, urban, cms_rating, infection_violation,
polygon``.  ``polygon`` is a well-known-text ring (``POLYGON((lon lat,
...))``) or empty; a facility without a polygon must carry an address that
the geocoder can resolve, and receives a regular 16-gon fallback footprint.

Geocoder stub: text file with one ``address<TAB>lat,lon`` entry per line.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import ClassVar, Iterable, Protocol

import numpy as np

from .errors import GeocodeError, InputError
from .geometry import regular_geodesic_polygon, validate_ring

logger = logging.getLogger(__name__)

PING_COLUMNS = ("device_id", "timestamp", "latitude", "longitude")
REGISTRY_COLUMNS = (
    "facility_id",
    "name",
    "state",
    "county_fips",
    "address",
    "beds",
    "cases",
    "high_medicaid",
    "high_black",
    "urban",
    "cms_rating",
    "infection_violation",
    "polygon",
)

DEFAULT_FALLBACK_RADIUS_M = 30.0

_BOOL_TOKENS = {
    "1": True,
    "0": False,
    "true": True,
    "false": False,
    "t": True,
    "f": False,
    "yes": True,
    "no": False,
}


def parse_timestamp(text: str) -> float:
    """Epoch seconds from either a numeric literal or an ISO-8601 string.

    Naive ISO timestamps are interpreted as UTC.
    """
    try:
        return float(text)
    except ValueError:
        pass
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    moment = datetime.fromisoformat(raw)
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.timestamp()


@dataclass(frozen=True)
class StudyWindow:
    """Closed interval of epoch seconds a ping must fall inside."""

    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"window start {self.start} must precede end {self.end}")

    def contains(self, timestamp: float) -> bool:
        return self.start <= timestamp <= self.end


# Six weeks of nationwide visitor restrictions, the default analysis span.
DEFAULT_WINDOW = StudyWindow(
    start=parse_timestamp("2020-03-13T00:00:00Z"),
    end=parse_timestamp("2020-04-23T23:59:59Z"),
)


@dataclass(frozen=True, slots=True)
class PingRecord:
    """One anonymized device location observation."""

    device_id: str
    latitude: float
    longitude: float
    timestamp: float


@dataclass
class ParsedPings:
    """Windowed, deduplicated ping records plus per-file rejection counts."""

    records: list[PingRecord]
    skipped: int
    out_of_window: int
    duplicates: int

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass
class Facility:
    """A care facility: footprint, location keys, and regression covariates.

    Covariates may be ``None`` when the registry row left them blank or
    unparseable; such facilities stay in the network stage but drop out of
    the regression sample.
    """

    facility_id: str
    name: str
    state: str
    county_fips: str
    address: str
    polygon: np.ndarray | None
    beds: int | None
    cases: int | None
    high_medicaid: bool | None
    high_black: bool | None
    urban: bool | None
    cms_rating: int | None
    infection_violation: bool | None

    REQUIRED_COVARIATES: ClassVar[tuple[str, ...]] = (
        "beds",
        "high_medicaid",
        "high_black",
        "urban",
        "cms_rating",
        "infection_violation",
    )

    def missing_covariates(self) -> tuple[str, ...]:
        return tuple(name for name in self.REQUIRED_COVARIATES if getattr(self, name) is None)

    @property
    def covariates_complete(self) -> bool:
        return not self.missing_covariates()

    @property
    def regression_ready(self) -> bool:
        """In the regression sample: all covariates present and cases reported."""
        return self.covariates_complete and self.cases is not None


def _text_stream(source) -> tuple[io.TextIOBase, bool]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            return open(path, "r", encoding="utf-8", newline=""), True
        except OSError as exc:
            raise InputError(f"cannot read input file {path}: {exc}") from exc
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _header_index(header: list[str], required: Iterable[str], what: str) -> dict[str, int]:
    positions = {name.strip(): i for i, name in enumerate(header)}
    missing = [c for c in required if c not in positions]
    if missing:
        raise InputError(f"{what} header missing columns: {', '.join(missing)}")
    return positions


def parse_pings(source, window: StudyWindow = DEFAULT_WINDOW) -> ParsedPings:
    """Parse a ping stream into validated, windowed, deduplicated records.

    Malformed lines (wrong arity, unparseable fields, out-of-range
    coordinates) are counted and skipped; records outside ``window`` and
    exact duplicate ``(device_id, timestamp, lat, lon)`` tuples are counted
    separately.  Output is sorted by ``(device_id, timestamp, lat, lon)``
    so results do not depend on input order or sharding.

    Parameters
    ----------
    source : path or open text/byte stream
        Line-delimited ping records with a header row.
    window : StudyWindow
        Closed timestamp interval to keep.

    Returns
    -------
    ParsedPings
    """
    stream, owns = _text_stream(source)
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            return ParsedPings([], 0, 0, 0)
        positions = _header_index(header, PING_COLUMNS, "ping file")
        i_dev = positions["device_id"]
        i_ts = positions["timestamp"]
        i_lat = positions["latitude"]
        i_lon = positions["longitude"]
        rows: list[tuple[str, float, float, float]] = []
        skipped = 0
        out_of_window = 0
        for line in reader:
            if not line:
                continue
            try:
                device = line[i_dev].strip()
                ts = parse_timestamp(line[i_ts])
                lat = float(line[i_lat])
                lon = float(line[i_lon])
            except (IndexError, ValueError):
                skipped += 1
                continue
            if not device or math.isnan(ts):
                skipped += 1
                continue
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                skipped += 1
                continue
            if not window.contains(ts):
                out_of_window += 1
                continue
            rows.append((device, ts, lat, lon))
    finally:
        if owns:
            stream.close()

    rows.sort()
    records: list[PingRecord] = []
    duplicates = 0
    previous = None
    for row in rows:
        if row == previous:
            duplicates += 1
            continue
        previous = row
        records.append(
            PingRecord(device_id=row[0], timestamp=row[1], latitude=row[2], longitude=row[3])
        )
    if skipped:
        logger.warning("ping parse: skipped %d malformed line(s)", skipped)
    return ParsedPings(records, skipped, out_of_window, duplicates)


def _parse_bool(text: str) -> bool:
    token = text.strip().lower()
    if token not in _BOOL_TOKENS:
        raise ValueError(f"not a boolean: {text!r}")
    return _BOOL_TOKENS[token]


def _covariate(raw: str, caster, predicate=lambda v: True):
    """Parse an optional covariate cell; blank or invalid becomes None."""
    text = raw.strip()
    if not text:
        return None, False
    try:
        value = caster(text)
    except ValueError:
        return None, True
    if not predicate(value):
        return None, True
    return value, False


def parse_wkt_ring(text: str) -> np.ndarray:
    """Parse ``POLYGON((lon lat, ...))`` into a ``(k, 2)`` (lat, lon) ring."""
    raw = text.strip()
    upper = raw.upper()
    if not upper.startswith("POLYGON"):
        raise ValueError(f"not a WKT polygon: {text[:40]!r}")
    body = raw[len("POLYGON"):].strip()
    if not (body.startswith("((") and body.endswith("))")):
        raise ValueError(f"malformed WKT polygon: {text[:40]!r}")
    pairs = []
    for token in body[2:-2].split(","):
        parts = token.split()
        if len(parts) != 2:
            raise ValueError(f"malformed WKT vertex: {token!r}")
        lon, lat = float(parts[0]), float(parts[1])
        pairs.append((lat, lon))
    if len(pairs) >= 2 and pairs[0] == pairs[-1]:
        pairs.pop()
    return np.asarray(pairs, dtype=float)


def format_wkt_ring(ring: np.ndarray) -> str:
    """Serialize a (lat, lon) ring as WKT, repeating the closing vertex."""
    arr = np.asarray(ring, dtype=float)
    verts = arr.tolist()
    if verts[0] != verts[-1]:
        verts.append(verts[0])
    body = ", ".join(f"{lon!r} {lat!r}" for lat, lon in verts)
    return f"POLYGON(({body}))"


def load_facilities(source) -> list[Facility]:
    """Load and validate a facility registry.

    Structural problems (duplicate ids, bad state/county codes, invalid
    polygons, rows with neither polygon nor address) are fatal.  Blank or
    unparseable covariates are tolerated: the facility is kept for network
    construction, flagged out of the regression sample, and a warning is
    logged.

    Parameters
    ----------
    source : path or open text/byte stream
        Registry rows in the documented format.

    Returns
    -------
    list of Facility, in input order.
    """
    stream, owns = _text_stream(source)
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            return []
        positions = _header_index(header, REGISTRY_COLUMNS, "facility registry")
        facilities: list[Facility] = []
        seen: set[str] = set()
        for lineno, line in enumerate(reader, start=2):
            if not line:
                continue
            if len(line) < len(header):
                raise InputError(f"registry line {lineno}: expected {len(header)} fields, got {len(line)}")
            cell = {name: line[positions[name]] for name in REGISTRY_COLUMNS}
            facility_id = cell["facility_id"].strip()
            if not facility_id:
                raise InputError(f"registry line {lineno}: empty facility_id")
            if facility_id in seen:
                raise InputError(f"duplicate facility_id {facility_id!r}")
            seen.add(facility_id)
            state = cell["state"].strip().upper()
            if len(state) != 2 or not state.isalpha():
                raise InputError(f"facility {facility_id}: invalid state code {cell['state']!r}")
            county = cell["county_fips"].strip()
            if len(county) != 5 or not county.isdigit():
                raise InputError(f"facility {facility_id}: invalid county_fips {cell['county_fips']!r}")
            address = cell["address"].strip()
            polygon_text = cell["polygon"].strip()
            if polygon_text:
                try:
                    polygon = validate_ring(parse_wkt_ring(polygon_text), name=f"facility {facility_id} polygon")
                except ValueError as exc:
                    raise InputError(str(exc)) from exc
            else:
                polygon = None
                if not address:
                    raise InputError(f"facility {facility_id}: neither polygon nor address supplied")

            invalid: list[str] = []
            beds, bad = _covariate(cell["beds"], int, lambda v: v >= 1)
            invalid += ["beds"] if bad else []
            cases, bad = _covariate(cell["cases"], int, lambda v: v >= 0)
            invalid += ["cases"] if bad else []
            high_medicaid, bad = _covariate(cell["high_medicaid"], _parse_bool)
            invalid += ["high_medicaid"] if bad else []
            high_black, bad = _covariate(cell["high_black"], _parse_bool)
            invalid += ["high_black"] if bad else []
            urban, bad = _covariate(cell["urban"], _parse_bool)
            invalid += ["urban"] if bad else []
            cms_rating, bad = _covariate(cell["cms_rating"], int, lambda v: 1 <= v <= 5)
            invalid += ["cms_rating"] if bad else []
            infection_violation, bad = _covariate(cell["infection_violation"], _parse_bool)
            invalid += ["infection_violation"] if bad else []
            if invalid:
                logger.warning("facility %s: unparseable value(s) for %s, treated as missing",
                               facility_id, ", ".join(invalid))

            facility = Facility(
                facility_id=facility_id,
                name=cell["name"].strip(),
                state=state,
                county_fips=county,
                address=address,
                polygon=polygon,
                beds=beds,
                cases=cases,
                high_medicaid=high_medicaid,
                high_black=high_black,
                urban=urban,
                cms_rating=cms_rating,
                infection_violation=infection_violation,
            )
            facilities.append(facility)
        incomplete = [f for f in facilities if not f.covariates_complete]
        if incomplete:
            fields = sorted({name for f in incomplete for name in f.missing_covariates()})
            logger.warning(
                "%d facility(ies) missing covariate(s) [%s], e.g. %s; kept for network "
                "construction, excluded from the regression sample",
                len(incomplete),
                ", ".join(fields),
                incomplete[0].facility_id,
            )
        return facilities
    finally:
        if owns:
            stream.close()


class GeocoderClient(Protocol):
    """Anything that maps a street address to (lat, lon)."""

    def lookup(self, address: str) -> tuple[float, float]: ...


class StubGeocoder:
    """File-backed geocoder used in place of a live service.

    Records the number of ``lookup`` calls so caching behaviour is
    observable in tests.
    """

    def __init__(self, entries: dict[str, tuple[float, float]]):
        self._entries = dict(entries)
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "StubGeocoder":
        entries: dict[str, tuple[float, float]] = {}
        stream, owns = _text_stream(path)
        try:
            for lineno, line in enumerate(stream, start=1):
                text = line.rstrip("\n")
                if not text.strip() or text.lstrip().startswith("#"):
                    continue
                if "\t" not in text:
                    raise InputError(f"geocoder stub line {lineno}: expected 'address<TAB>lat,lon'")
                address, coords = text.split("\t", 1)
                try:
                    lat_text, lon_text = coords.split(",", 1)
                    entries[address.strip()] = (float(lat_text), float(lon_text))
                except ValueError as exc:
                    raise InputError(f"geocoder stub line {lineno}: bad coordinates {coords!r}") from exc
        finally:
            if owns:
                stream.close()
        return cls(entries)

    def lookup(self, address: str) -> tuple[float, float]:
        self.calls += 1
        try:
            return self._entries[address]
        except KeyError:
            raise GeocodeError(address) from None


class CachingGeocoder:
    """Memoizing wrapper so repeated addresses hit the inner client once."""

    def __init__(self, client: GeocoderClient):
        self._client = client
        self._cache: dict[str, tuple[float, float]] = {}

    def lookup(self, address: str) -> tuple[float, float]:
        if address not in self._cache:
            self._cache[address] = self._client.lookup(address)
        return self._cache[address]


def geocode(address: str, client: GeocoderClient) -> tuple[float, float]:
    """Resolve an address through ``client``, validating the response range."""
    lat, lon = client.lookup(address)
    lat, lon = float(lat), float(lon)
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise GeocodeError(address, f"out-of-range response ({lat}, {lon})")
    return lat, lon


def polygon_from_point(center: tuple[float, float], radius_m: float) -> np.ndarray:
    """Regular 16-gon approximating a geodesic circle around ``center``.

    Fallback footprint for facilities with a geocoded point but no rooftop
    ring; the emitted ring contains ``center``.
    """
    return regular_geodesic_polygon(center, radius_m, n_vertices=16)


def resolve_polygons(
    facilities: Iterable[Facility],
    client: GeocoderClient,
    radius_m: float = DEFAULT_FALLBACK_RADIUS_M,
) -> int:
    """Fill missing facility polygons by geocoding their addresses.

    Repeated addresses reach ``client`` once per call thanks to an internal
    cache.  Returns the number of facilities resolved.
    """
    cached = CachingGeocoder(client)
    resolved = 0
    for facility in facilities:
        if facility.polygon is not None:
            continue
        lat, lon = geocode(facility.address, cached)
        facility.polygon = polygon_from_point((lat, lon), radius_m)
        resolved += 1
    return resolved


def write_pings(records: Iterable[PingRecord], path) -> None:
    """Write records in the ping file format (timestamps as epoch seconds)."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PING_COLUMNS)
        for record in records:
            ts = record.timestamp
            ts_text = repr(int(ts)) if float(ts).is_integer() else repr(ts)
            writer.writerow([record.device_id, ts_text, repr(record.latitude), repr(record.longitude)])


def write_facilities(facilities: Iterable[Facility], path) -> None:
    """Write facilities in the registry format, serializing polygons as WKT."""

    def cell(value):
        if value is None:
            return ""
        if isinstance(value, bool):
            return "1" if value else "0"
        return str(value)

    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REGISTRY_COLUMNS)
        for fac in facilities:
            writer.writerow(
                [
                    fac.facility_id,
                    fac.name,
                    fac.state,
                    fac.county_fips,
                    fac.address,
                    cell(fac.beds),
                    cell(fac.cases),
                    cell(fac.high_medicaid),
                    cell(fac.high_black),
                    cell(fac.urban),
                    cell(fac.cms_rating),
                    cell(fac.infection_violation),
                    format_wkt_ring(fac.polygon) if fac.polygon is not None else "",
                ]
            )
