"""Ping parsing, registry loading, geocoding, and fallback footprints."""

import io
import math

import numpy as np
import pytest

from conftest import haversine_m
from staffnet.errors import GeocodeError, InputError
from staffnet.geometry import point_in_polygon
from staffnet.ingest import (
    CachingGeocoder,
    Facility,
    StubGeocoder,
    StudyWindow,
    format_wkt_ring,
    geocode,
    load_facilities,
    parse_pings,
    parse_timestamp,
    parse_wkt_ring,
    polygon_from_point,
    resolve_polygons,
    write_facilities,
    write_pings,
)

WINDOW = StudyWindow(1_000.0, 2_000.0)

PING_HEADER = "device_id,timestamp,latitude,longitude\n"


def pings_stream(*rows: str) -> io.StringIO:
    return io.StringIO(PING_HEADER + "".join(row + "\n" for row in rows))


class TestParsePings:
    def test_window_filter(self):
        parsed = parse_pings(
            pings_stream("d1,1100,41.0,-72.0", "d1,1200,41.0,-72.0", "d2,1900,40.5,-71.5", "d2,2500,40.5,-71.5"),
            WINDOW,
        )
        assert len(parsed.records) == 3
        assert parsed.skipped == 0
        assert parsed.out_of_window == 1

    def test_empty_file(self):
        parsed = parse_pings(io.StringIO(""), WINDOW)
        assert parsed.records == []
        assert parsed.skipped == 0

    def test_latitude_out_of_bounds_skipped(self):
        parsed = parse_pings(pings_stream("d1,1100,91.0,-72.0"), WINDOW)
        assert parsed.records == []
        assert parsed.skipped == 1

    def test_malformed_lines_counted_not_fatal(self):
        parsed = parse_pings(
            pings_stream("d1,1100,41.0,-72.0", "d2,not-a-time,41.0,-72.0", "d3,1100", ",1100,41.0,-72.0"),
            WINDOW,
        )
        assert len(parsed.records) == 1
        assert parsed.skipped == 3

    def test_exact_duplicates_removed(self):
        parsed = parse_pings(
            pings_stream("d1,1100,41.0,-72.0", "d1,1100,41.0,-72.0", "d1,1100,41.0,-72.5"),
            WINDOW,
        )
        assert len(parsed.records) == 2
        assert parsed.duplicates == 1

    def test_output_sorted_and_order_invariant(self):
        rows = ["d2,1500,41.0,-72.0", "d1,1500,41.0,-72.0", "d1,1100,41.0,-72.0"]
        a = parse_pings(pings_stream(*rows), WINDOW)
        b = parse_pings(pings_stream(*reversed(rows)), WINDOW)
        assert a.records == b.records
        assert [r.device_id for r in a.records] == ["d1", "d1", "d2"]
        assert a.records[0].timestamp <= a.records[1].timestamp

    def test_windowing_idempotent(self, tmp_path):
        parsed = parse_pings(
            pings_stream("d1,1100,41.0,-72.0", "d2,1900,40.5,-71.5", "d3,2500,40.0,-71.0"),
            WINDOW,
        )
        out = tmp_path / "clean.csv"
        write_pings(parsed.records, out)
        again = parse_pings(out, WINDOW)
        assert again.records == parsed.records
        assert again.out_of_window == 0
        assert again.skipped == 0

    def test_iso_and_epoch_timestamps(self):
        iso = parse_timestamp("2020-03-13T00:00:00Z")
        assert iso == parse_timestamp("2020-03-13T00:00:00+00:00")
        assert parse_timestamp("1584057600") == iso
        parsed = parse_pings(
            io.StringIO(PING_HEADER + "d1,2020-03-13T00:00:10Z,41.0,-72.0\n"),
            StudyWindow(iso, iso + 60),
        )
        assert len(parsed.records) == 1

    def test_header_missing_column_fatal(self):
        with pytest.raises(InputError, match="missing columns"):
            parse_pings(io.StringIO("device_id,timestamp,latitude\nd1,1100,41.0\n"), WINDOW)

    def test_unreadable_source_fatal(self, tmp_path):
        missing = tmp_path / "nope.csv"
        with pytest.raises(InputError, match="nope.csv"):
            parse_pings(missing, WINDOW)


REGISTRY_HEADER = (
    "facility_id,name,state,county_fips,address,beds,cases,high_medicaid,"
    "high_black,urban,cms_rating,infection_violation,polygon\n"
)

SQUARE_WKT = "POLYGON((-72.93 41.30, -72.92 41.30, -72.92 41.31, -72.93 41.31, -72.93 41.30))"


def registry_stream(*rows: str) -> io.StringIO:
    return io.StringIO(REGISTRY_HEADER + "".join(row + "\n" for row in rows))


def registry_row(facility_id: str, **overrides) -> str:
    cells = {
        "facility_id": facility_id,
        "name": "Home",
        "state": "CT",
        "county_fips": "09001",
        "address": "1 Main St",
        "beds": "120",
        "cases": "4",
        "high_medicaid": "0",
        "high_black": "1",
        "urban": "1",
        "cms_rating": "4",
        "infection_violation": "0",
        "polygon": f'"{SQUARE_WKT}"',
    }
    cells.update(overrides)
    return ",".join(cells.values())


class TestLoadFacilities:
    def test_two_valid_rows(self):
        facilities = load_facilities(registry_stream(registry_row("A"), registry_row("B")))
        assert [f.facility_id for f in facilities] == ["A", "B"]
        assert all(f.covariates_complete for f in facilities)
        assert facilities[0].polygon.shape == (4, 2)

    def test_duplicate_id_fatal_names_id(self):
        with pytest.raises(InputError, match="A"):
            load_facilities(registry_stream(registry_row("A"), registry_row("A")))

    def test_missing_rating_flagged_not_fatal(self, caplog):
        with caplog.at_level("WARNING"):
            facilities = load_facilities(registry_stream(registry_row("A", cms_rating="")))
        assert len(facilities) == 1
        assert facilities[0].cms_rating is None
        assert not facilities[0].covariates_complete
        assert not facilities[0].regression_ready
        assert "cms_rating" in caplog.text

    def test_missing_cases_allowed(self):
        facilities = load_facilities(registry_stream(registry_row("A", cases="")))
        assert facilities[0].cases is None
        assert facilities[0].covariates_complete
        assert not facilities[0].regression_ready

    def test_id_multiset_preserved(self):
        ids = ["C", "A", "B", "D"]
        facilities = load_facilities(registry_stream(*[registry_row(i) for i in ids]))
        assert [f.facility_id for f in facilities] == ids

    def test_invalid_polygon_fatal(self):
        bowtie = '"POLYGON((0 0, 1 1, 1 0, 0 1, 0 0))"'
        with pytest.raises(InputError, match="self-intersecting"):
            load_facilities(registry_stream(registry_row("A", polygon=bowtie)))

    def test_no_polygon_no_address_fatal(self):
        with pytest.raises(InputError, match="neither polygon nor address"):
            load_facilities(registry_stream(registry_row("A", polygon="", address="")))

    def test_bad_state_fatal(self):
        with pytest.raises(InputError, match="state"):
            load_facilities(registry_stream(registry_row("A", state="Connecticut")))

    def test_unparseable_covariate_becomes_missing(self, caplog):
        with caplog.at_level("WARNING"):
            facilities = load_facilities(registry_stream(registry_row("A", beds="0")))
        assert facilities[0].beds is None
        assert "beds" in caplog.text

    def test_roundtrip_through_writer(self, tmp_path):
        facilities = load_facilities(registry_stream(registry_row("A"), registry_row("B", cases="")))
        out = tmp_path / "registry.csv"
        write_facilities(facilities, out)
        again = load_facilities(out)
        assert [f.facility_id for f in again] == ["A", "B"]
        assert again[1].cases is None
        assert np.array_equal(again[0].polygon, facilities[0].polygon)


class TestGeocode:
    def test_stub_lookup(self):
        stub = StubGeocoder({"1 Main St": (41.30, -72.93)})
        assert geocode("1 Main St", stub) == (41.30, -72.93)

    def test_cache_hits_client_once(self):
        stub = StubGeocoder({"1 Main St": (41.30, -72.93)})
        cached = CachingGeocoder(stub)
        assert geocode("1 Main St", cached) == geocode("1 Main St", cached)
        assert stub.calls == 1

    def test_miss_carries_address(self):
        stub = StubGeocoder({})
        with pytest.raises(GeocodeError) as err:
            geocode("2 Elm St", stub)
        assert err.value.address == "2 Elm St"

    def test_pure_function_of_address_and_stub_contents(self):
        entries = {"1 Main St": (41.30, -72.93)}
        results = {geocode("1 Main St", StubGeocoder(dict(entries))) for _ in range(3)}
        assert results == {(41.30, -72.93)}

    def test_out_of_range_response_rejected(self):
        stub = StubGeocoder({"bad": (95.0, 10.0)})
        with pytest.raises(GeocodeError, match="out-of-range"):
            geocode("bad", stub)

    def test_stub_file_parsing(self, tmp_path):
        path = tmp_path / "stub.txt"
        path.write_text("# comment\n1 Main St, New Haven, CT\t41.3,-72.93\n", encoding="utf-8")
        stub = StubGeocoder.from_file(path)
        assert stub.lookup("1 Main St, New Haven, CT") == (41.3, -72.93)

    def test_resolve_polygons_caches_and_fills(self):
        stub = StubGeocoder({"1 Main St": (41.30, -72.93)})
        facilities = load_facilities(
            registry_stream(
                registry_row("A", polygon="", address="1 Main St"),
                registry_row("B", polygon="", address="1 Main St"),
            )
        )
        resolved = resolve_polygons(facilities, stub, radius_m=30.0)
        assert resolved == 2
        assert stub.calls == 1
        assert all(f.polygon is not None for f in facilities)


class TestPolygonFromPoint:
    CENTER = (41.31, -72.92)

    def test_contains_center_and_has_16_vertices(self):
        ring = polygon_from_point(self.CENTER, 30.0)
        assert ring.shape == (16, 2)
        assert point_in_polygon(self.CENTER, ring)

    def test_nonpositive_radius_rejected(self):
        with pytest.raises(ValueError):
            polygon_from_point(self.CENTER, 0.0)
        with pytest.raises(ValueError):
            polygon_from_point(self.CENTER, -5.0)

    def test_vertex_distances_match_radius(self):
        # Independent haversine check: every vertex within 1% of 30 m.
        ring = polygon_from_point(self.CENTER, 30.0)
        for vertex in ring:
            distance = haversine_m(self.CENTER, tuple(vertex))
            assert math.isclose(distance, 30.0, rel_tol=0.01)

    def test_wkt_roundtrip(self):
        ring = polygon_from_point(self.CENTER, 30.0)
        again = parse_wkt_ring(format_wkt_ring(ring))
        assert np.array_equal(again, ring)
