"""Undirected weighted facility networks from qualifying visit assignments.

Nodes are all registry facilities of a partition (a state, or the whole
country under the national option), so isolated facilities keep explicit
zero-degree rows downstream.  An edge (i, j) carries the number of
distinct devices qualifying in both i and j.  Facility pairs spanning two
states cannot form an edge in any state network; they are returned in a
separate cross-partition report rather than silently dropped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence
from xml.etree import ElementTree

import numpy as np

from .errors import InputError
from .ingest import Facility, _text_stream
from .spatial import VisitAssignment

NATIONAL_KEY = "ALL"

EDGE_COLUMNS = ("state", "facility_i", "facility_j", "weight")


@dataclass(frozen=True)
class EdgeObservation:
    """One device qualifying in two facilities."""

    device_id: str
    facility_i: str
    facility_j: str

    def __post_init__(self):
        if self.facility_i == self.facility_j:
            raise ValueError("edge endpoints must differ")


@dataclass
class FacilityNetwork:
    """Per-partition undirected weighted graph over facilities.

    ``edges`` maps unordered id pairs, stored with ``i < j``, to positive
    integer weights.
    """

    partition_key: str
    nodes: list[str]
    edges: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        known = set(self.nodes)
        for (a, b), weight in self.edges.items():
            if a == b:
                raise ValueError(f"self-loop on {a}")
            if not a < b:
                raise ValueError(f"edge key ({a}, {b}) not ordered")
            if a not in known or b not in known:
                raise ValueError(f"edge ({a}, {b}) references unknown node")
            if weight < 1:
                raise ValueError(f"edge ({a}, {b}) has non-positive weight {weight}")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node_positions(self) -> dict[str, int]:
        return {fid: i for i, fid in enumerate(self.nodes)}


@dataclass
class NetworkBuild:
    """Partition networks plus the cross-partition device report."""

    networks: dict[str, FacilityNetwork]
    cross_partition: list[EdgeObservation]


def _edge_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


def build_networks(
    assignments: Iterable[VisitAssignment],
    facilities: Sequence[Facility],
    partition: str = "by_state",
) -> NetworkBuild:
    """Build one weighted network per partition from qualifying assignments.

    Edge weight w_ij is the number of distinct devices with a qualifying
    visit in both i and j.  Under ``by_state``, each within-state pair of a
    device's qualifying facilities contributes to that state's network and
    each cross-state pair goes to the cross-partition report; under
    ``national`` a single network keyed ``ALL`` receives every pair.

    Raises
    ------
    InputError
        If an assignment references a facility absent from the registry.
    """
    if partition not in ("by_state", "national"):
        raise ValueError(f"unknown partition mode {partition!r}")
    facility_state = {f.facility_id: f.state for f in facilities}

    per_device: dict[str, list[str]] = {}
    for assignment in assignments:
        if assignment.facility_id not in facility_state:
            raise InputError(f"assignment references unknown facility {assignment.facility_id!r}")
        if assignment.qualifies:
            per_device.setdefault(assignment.device_id, []).append(assignment.facility_id)

    if partition == "national":
        keys = {f.facility_id: NATIONAL_KEY for f in facilities}
        node_groups: dict[str, list[str]] = {NATIONAL_KEY: sorted(facility_state)}
    else:
        keys = facility_state
        node_groups = {}
        for fid in sorted(facility_state):
            node_groups.setdefault(facility_state[fid], []).append(fid)

    edge_weights: dict[str, dict[tuple[str, str], int]] = {k: {} for k in node_groups}
    cross: list[EdgeObservation] = []
    for device_id in sorted(per_device):
        qualifying = sorted(set(per_device[device_id]))
        for a, b in combinations(qualifying, 2):
            if keys[a] == keys[b]:
                group = edge_weights[keys[a]]
                key = _edge_key(a, b)
                group[key] = group.get(key, 0) + 1
            else:
                cross.append(EdgeObservation(device_id, *_edge_key(a, b)))

    networks = {
        key: FacilityNetwork(
            partition_key=key,
            nodes=node_groups[key],
            edges=dict(sorted(edge_weights[key].items())),
        )
        for key in sorted(node_groups)
    }
    return NetworkBuild(networks=networks, cross_partition=cross)


def adjacency_view(net: FacilityNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Dense symmetric (A, W): 0/1 adjacency and integer weights, zero diagonal."""
    n = net.n_nodes
    positions = net.node_positions()
    a = np.zeros((n, n), dtype=float)
    w = np.zeros((n, n), dtype=float)
    for (fi, fj), weight in net.edges.items():
        i, j = positions[fi], positions[fj]
        a[i, j] = a[j, i] = 1.0
        w[i, j] = w[j, i] = float(weight)
    return a, w


def write_edge_list(networks: dict[str, FacilityNetwork], path) -> None:
    """Delimited edge list over all partitions, sorted for determinism."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(EDGE_COLUMNS)
        for key in sorted(networks):
            for (fi, fj), weight in sorted(networks[key].edges.items()):
                writer.writerow([key, fi, fj, weight])


def read_edge_list(source) -> dict[str, dict[tuple[str, str], int]]:
    """Edge weights per partition key, as written by ``write_edge_list``."""
    stream, owns = _text_stream(source)
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            return {}
        if tuple(h.strip() for h in header) != EDGE_COLUMNS:
            raise InputError(f"edge list header mismatch: {header}")
        out: dict[str, dict[tuple[str, str], int]] = {}
        for line in reader:
            if not line:
                continue
            key, fi, fj, weight = line
            out.setdefault(key, {})[_edge_key(fi, fj)] = int(weight)
        return out
    finally:
        if owns:
            stream.close()


def write_cross_partition(observations: Iterable[EdgeObservation], facilities: Sequence[Facility], path) -> None:
    states = {f.facility_id: f.state for f in facilities}
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["device_id", "facility_i", "state_i", "facility_j", "state_j"])
        rows = sorted(observations, key=lambda o: (o.device_id, o.facility_i, o.facility_j))
        for obs in rows:
            writer.writerow(
                [obs.device_id, obs.facility_i, states[obs.facility_i], obs.facility_j, states[obs.facility_j]]
            )


def graphml_document(net: FacilityNetwork) -> ElementTree.ElementTree:
    """GraphML tree with edge weights as an integer attribute."""
    root = ElementTree.Element("graphml", {"xmlns": "http://graphml.graphdrawing.org/xmlns"})
    ElementTree.SubElement(
        root,
        "key",
        {"id": "weight", "for": "edge", "attr.name": "weight", "attr.type": "int"},
    )
    graph = ElementTree.SubElement(root, "graph", {"id": net.partition_key, "edgedefault": "undirected"})
    for fid in net.nodes:
        ElementTree.SubElement(graph, "node", {"id": fid})
    for (fi, fj), weight in sorted(net.edges.items()):
        edge = ElementTree.SubElement(graph, "edge", {"source": fi, "target": fj})
        data = ElementTree.SubElement(edge, "data", {"key": "weight"})
        data.text = str(weight)
    tree = ElementTree.ElementTree(root)
    ElementTree.indent(tree)
    return tree


def write_graphml(net: FacilityNetwork, path) -> None:
    graphml_document(net).write(path, encoding="utf-8", xml_declaration=True)


def write_dot(net: FacilityNetwork, path) -> None:
    """Graphviz export for external layout and rendering."""
    lines = [f'graph "{net.partition_key}" {{']
    degree: dict[str, int] = {fid: 0 for fid in net.nodes}
    for fi, fj in net.edges:
        degree[fi] += 1
        degree[fj] += 1
    for fid in net.nodes:
        if degree[fid] == 0:
            lines.append(f'  "{fid}";')
    for (fi, fj), weight in sorted(net.edges.items()):
        lines.append(f'  "{fi}" -- "{fj}" [weight={weight}];')
    lines.append("}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
