"""Network construction, adjacency views, and exports."""

from itertools import combinations
from xml.etree import ElementTree

import numpy as np
import pytest

from conftest import make_facility, random_connected_network
from staffnet.errors import InputError
from staffnet.network import (
    EdgeObservation,
    FacilityNetwork,
    adjacency_view,
    build_networks,
    graphml_document,
    read_edge_list,
    write_dot,
    write_edge_list,
    write_graphml,
)
from staffnet.spatial import VisitAssignment


def qualifying(device: str, facility: str) -> VisitAssignment:
    return VisitAssignment(device, facility, 3, True)


def facilities_in(states: dict[str, list[str]]):
    return [make_facility(fid, state=state) for state, ids in states.items() for fid in ids]


class TestBuildNetworks:
    def test_single_shared_device_single_edge(self):
        facs = facilities_in({"CT": ["A", "B"]})
        build = build_networks([qualifying("d1", "A"), qualifying("d1", "B")], facs)
        assert build.networks["CT"].edges == {("A", "B"): 1}

    def test_two_devices_weight_two(self):
        facs = facilities_in({"CT": ["A", "B"]})
        assignments = [qualifying(d, f) for d in ("d1", "d2") for f in ("A", "B")]
        build = build_networks(assignments, facs)
        assert build.networks["CT"].edges == {("A", "B"): 2}

    def test_non_qualifying_visits_make_no_edge(self):
        facs = facilities_in({"CT": ["A", "B"]})
        assignments = [qualifying("d1", "A"), VisitAssignment("d1", "B", 2, False)]
        build = build_networks(assignments, facs)
        assert build.networks["CT"].edges == {}

    def test_unknown_facility_fatal(self):
        facs = facilities_in({"CT": ["A"]})
        with pytest.raises(InputError, match="ZZZ"):
            build_networks([qualifying("d1", "ZZZ")], facs)

    def test_all_facilities_become_nodes(self):
        facs = facilities_in({"CT": ["A", "B", "C"], "NY": ["X"]})
        build = build_networks([qualifying("d1", "A"), qualifying("d1", "B")], facs)
        assert build.networks["CT"].nodes == ["A", "B", "C"]
        assert build.networks["NY"].nodes == ["X"]
        assert build.networks["NY"].edges == {}

    def test_cross_state_pair_reported_not_edged(self):
        facs = facilities_in({"CT": ["A"], "NY": ["X"]})
        build = build_networks([qualifying("d1", "A"), qualifying("d1", "X")], facs)
        assert build.networks["CT"].edges == {}
        assert build.networks["NY"].edges == {}
        assert build.cross_partition == [EdgeObservation("d1", "A", "X")]

    def test_spanning_device_still_forms_within_state_pairs(self):
        # A device spanning states keeps its within-state pair as an edge;
        # only the cross-state pairs move to the report.
        facs = facilities_in({"CT": ["A", "B"], "NY": ["X"]})
        assignments = [qualifying("d1", "A"), qualifying("d1", "B"), qualifying("d1", "X")]
        build = build_networks(assignments, facs)
        assert build.networks["CT"].edges == {("A", "B"): 1}
        assert len(build.cross_partition) == 2

    def test_national_partition_keeps_cross_state_edges(self):
        facs = facilities_in({"CT": ["A"], "NY": ["X"]})
        build = build_networks([qualifying("d1", "A"), qualifying("d1", "X")], facs, partition="national")
        assert list(build.networks) == ["ALL"]
        assert build.networks["ALL"].edges == {("A", "X"): 1}
        assert build.cross_partition == []

    def test_edge_mass_equals_pair_count(self, rng):
        # Sum of weights == sum over devices of C(q_d, 2) restricted to
        # within-state pairs, checked by brute force.
        states = {"CT": [f"C{i}" for i in range(6)], "NY": [f"N{i}" for i in range(5)]}
        facs = facilities_in(states)
        state_of = {f.facility_id: f.state for f in facs}
        assignments = []
        device_sets = {}
        for d in range(40):
            ids = [f.facility_id for f in facs]
            chosen = rng.choice(ids, size=int(rng.integers(1, 5)), replace=False)
            device_sets[f"d{d}"] = sorted(chosen)
            assignments.extend(qualifying(f"d{d}", fid) for fid in chosen)
        build = build_networks(assignments, facs)
        total_weight = sum(w for net in build.networks.values() for w in net.edges.values())
        expected = sum(
            1
            for quals in device_sets.values()
            for a, b in combinations(quals, 2)
            if state_of[a] == state_of[b]
        )
        assert total_weight == expected

    def test_device_relabeling_invariance(self, rng):
        facs = facilities_in({"CT": [f"C{i}" for i in range(6)]})
        assignments = []
        for d in range(25):
            for fid in rng.choice([f.facility_id for f in facs], size=2, replace=False):
                assignments.append(qualifying(f"d{d}", fid))
        base = build_networks(assignments, facs).networks["CT"].edges
        relabeled = [
            VisitAssignment(f"device-{hash(a.device_id) % 1_000_003}", a.facility_id, a.trace_count, a.qualifies)
            for a in assignments
        ]
        assert build_networks(relabeled, facs).networks["CT"].edges == base

    def test_duplicate_assignments_for_pair_count_once(self):
        facs = facilities_in({"CT": ["A", "B"]})
        assignments = [qualifying("d1", "A"), qualifying("d1", "A"), qualifying("d1", "B")]
        build = build_networks(assignments, facs)
        assert build.networks["CT"].edges == {("A", "B"): 1}


class TestAdjacencyView:
    def test_triangle_all_ones(self):
        net = FacilityNetwork("CT", ["A", "B", "C"], {("A", "B"): 1, ("A", "C"): 1, ("B", "C"): 1})
        a, w = adjacency_view(net)
        expected = np.ones((3, 3)) - np.eye(3)
        assert np.array_equal(a, expected)
        assert np.array_equal(w, expected)

    def test_empty_network_zero_matrices(self):
        net = FacilityNetwork("CT", ["A", "B", "C", "D"], {})
        a, w = adjacency_view(net)
        assert not a.any() and not w.any()
        assert a.shape == (4, 4)

    def test_adjacency_is_weight_indicator(self, rng):
        net = random_connected_network(rng, 20, extra_edges=15)
        a, w = adjacency_view(net)
        assert np.array_equal(a, (w > 0).astype(float))
        assert np.array_equal(a, a.T)
        assert np.array_equal(w, w.T)
        assert not np.diag(a).any()

    def test_invalid_edges_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            FacilityNetwork("CT", ["A"], {("A", "A"): 1})
        with pytest.raises(ValueError, match="unknown node"):
            FacilityNetwork("CT", ["A"], {("A", "B"): 1})
        with pytest.raises(ValueError, match="not ordered"):
            FacilityNetwork("CT", ["A", "B"], {("B", "A"): 1})
        with pytest.raises(ValueError, match="weight"):
            FacilityNetwork("CT", ["A", "B"], {("A", "B"): 0})


class TestExports:
    def test_edge_list_roundtrip(self, tmp_path, rng):
        networks = {
            "CT": random_connected_network(rng, 8, extra_edges=4, key="CT"),
            "NY": random_connected_network(rng, 5, extra_edges=2, key="NY"),
        }
        path = tmp_path / "edges.csv"
        write_edge_list(networks, path)
        loaded = read_edge_list(path)
        assert loaded == {key: net.edges for key, net in networks.items()}

    def test_graphml_structure(self, tmp_path):
        net = FacilityNetwork("CT", ["A", "B", "C"], {("A", "B"): 2})
        path = tmp_path / "net.graphml"
        write_graphml(net, path)
        ns = {"g": "http://graphml.graphdrawing.org/xmlns"}
        root = ElementTree.parse(path).getroot()
        nodes = [el.get("id") for el in root.findall(".//g:node", ns)]
        assert nodes == ["A", "B", "C"]
        edges = root.findall(".//g:edge", ns)
        assert [(e.get("source"), e.get("target")) for e in edges] == [("A", "B")]
        assert edges[0].find("g:data", ns).text == "2"
        graph = root.find("g:graph", ns)
        assert graph.get("edgedefault") == "undirected"

    def test_graphml_bytes_deterministic(self):
        net = FacilityNetwork("CT", ["A", "B"], {("A", "B"): 1})
        doc1 = ElementTree.tostring(graphml_document(net).getroot())
        doc2 = ElementTree.tostring(graphml_document(net).getroot())
        assert doc1 == doc2

    def test_dot_lists_isolated_nodes_and_edges(self, tmp_path):
        net = FacilityNetwork("CT", ["A", "B", "C"], {("A", "B"): 3})
        path = tmp_path / "net.dot"
        write_dot(net, path)
        text = path.read_text(encoding="utf-8")
        assert '"A" -- "B" [weight=3];' in text
        assert '"C";' in text
        assert text.startswith('graph "CT"')
