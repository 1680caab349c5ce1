"""Synthetic scenarios with exact ground truth, plus brute-force oracles.

Facilities are laid out on a coarse grid (one block per synthetic state)
so footprints never overlap.  Staff devices are planted with qualifying
ping bursts in one facility, or two for a configurable share, giving an
exact co-employment edge list; casual visits (one or two pings) and noise
devices exercise the qualification threshold without touching the truth.
Case counts are drawn from a known inverse-hyperbolic-sine-linear model so
the regression stage has a recoverable planted surface.

Randomness comes from numpy's seeded PCG64 generator, with fixed
sub-streams for structure, case noise, and ping placement, so a seed pins
every output byte.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from string import ascii_uppercase
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import econometrics
from .errors import InputError
from .geometry import EARTH_RADIUS_M, inscribed_radius_m
from .ingest import DEFAULT_WINDOW, Facility, StudyWindow, polygon_from_point, write_facilities
from .metrics import NetworkMetrics, write_metrics
from .network import EdgeObservation, FacilityNetwork, write_cross_partition, write_edge_list
from .spatial import TRACE_THRESHOLD, VisitAssignment, write_assignments

ORACLE_NODE_CAP = 200
ORACLE_ROW_CAP = 200
ORACLE_GROUP_CAP = 10

# Planted coefficients for every design column of the default full spec.
DEFAULT_TRUE_BETAS: dict[str, float] = {
    "degree": 0.012,
    "strength": 0.006,
    "wand": 0.009,
    "eigencentrality": 0.5,
    "beds": 0.009,
    "beds_sq": -5e-6,
    "high_medicaid": 0.10,
    "high_black": 0.5,
    "cms_rating_1": 0.03,
    "cms_rating_2": 0.06,
    "cms_rating_3": 0.11,
    "cms_rating_4": 0.01,
    "infection_violation": -0.07,
    "urban": 0.6,
}

_STATE_CODES = ["".join(pair) for pair in product(ascii_uppercase, repeat=2)]

# Facility grid layout: state blocks far apart, facilities 0.02 deg apart,
# footprints under 100 m, so no two footprints can overlap.
_BASE_LAT = 30.0
_BASE_LON = -120.0
_STATE_LAT_STEP = 1.5
_STATE_LON_STEP = 5.0
_STATES_PER_ROW = 6
_FACILITY_SPACING_DEG = 0.02


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for one synthetic scenario; every draw is fixed by ``seed``."""

    seed: int = 42
    n_states: int = 5
    facilities_per_state: int = 40
    counties_per_state: int = 5
    n_staff: int = 5000
    multi_facility_share: float = 0.07
    cross_state_fraction: float = 0.0
    pings_per_visit_min: int = 3
    pings_per_visit_max: int = 8
    casual_visit_share: float = 0.10
    noise_device_share: float = 0.05
    address_only_share: float = 0.10
    missing_cases_share: float = 0.0
    missing_rating_share: float = 0.0
    polygon_radius_m: float = 40.0
    fallback_radius_m: float = 30.0
    base_intercept: float = 2.0
    state_effect_sd: float = 0.3
    noise_sd: float = 0.5
    true_betas: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_TRUE_BETAS))
    window: StudyWindow = DEFAULT_WINDOW

    def __post_init__(self):
        if not 1 <= self.n_states <= 60:
            raise InputError(f"n_states must be in [1, 60], got {self.n_states}")
        if not 1 <= self.facilities_per_state <= ORACLE_NODE_CAP:
            raise InputError(
                f"facilities_per_state must be in [1, {ORACLE_NODE_CAP}], got {self.facilities_per_state}"
            )
        if self.counties_per_state < 1:
            raise InputError("counties_per_state must be >= 1")
        if self.n_staff < 1:
            raise InputError("n_staff must be >= 1")
        for name in (
            "multi_facility_share",
            "cross_state_fraction",
            "casual_visit_share",
            "noise_device_share",
            "address_only_share",
            "missing_cases_share",
            "missing_rating_share",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {value}")
        if self.multi_facility_share > 0 and self.facilities_per_state < 2:
            raise InputError("multi-facility staff need at least 2 facilities per state")
        if self.multi_facility_share > 0 and self.cross_state_fraction > 0 and self.n_states < 2:
            raise InputError("cross-state staff need at least 2 states")
        if self.pings_per_visit_min <= TRACE_THRESHOLD:
            raise InputError(
                f"pings_per_visit_min must exceed the qualification threshold {TRACE_THRESHOLD}"
            )
        if self.pings_per_visit_max < self.pings_per_visit_min:
            raise InputError("pings_per_visit_max must be >= pings_per_visit_min")
        if self.polygon_radius_m <= 0 or self.fallback_radius_m <= 0:
            raise InputError("footprint radii must be positive")
        if self.noise_sd < 0 or self.state_effect_sd < 0:
            raise InputError("noise_sd and state_effect_sd must be non-negative")
        missing = [n for n in _design_names() if n not in self.true_betas]
        if missing:
            raise InputError(f"true_betas missing coefficients: {', '.join(missing)}")


def _design_names() -> tuple[str, ...]:
    full = econometrics.RegressionSpec(
        network_regressors=econometrics.NETWORK_REGRESSORS, fe_level="state"
    )
    return full.columns


@dataclass
class Scenario:
    """A fully materialized synthetic world and its ground truth."""

    config: ScenarioConfig
    states: list[str]
    facilities: list[Facility]
    centers: np.ndarray  # (n_fac, 2) footprint centers
    true_rings: list[np.ndarray]
    stub_entries: dict[str, tuple[float, float]]
    # Planted visits: (device_id, facility position, ping count).
    visits: list[tuple[str, int, int]]
    multi_device_count: int
    truth_networks: dict[str, FacilityNetwork]
    truth_cross: list[EdgeObservation]
    truth_metrics: list[NetworkMetrics]
    design_names: tuple[str, ...]
    design: np.ndarray
    state_effects: np.ndarray
    y_star: np.ndarray
    cases: np.ndarray

    @property
    def shared_fraction_truth(self) -> float:
        return self.multi_device_count / self.config.n_staff

    def truth_assignments(self) -> list[VisitAssignment]:
        rows = [
            VisitAssignment.from_count(device, self.facilities[pos].facility_id, count)
            for device, pos, count in self.visits
        ]
        rows.sort(key=lambda a: (a.device_id, a.facility_id))
        return rows

    def analysis_rows(self, cases: np.ndarray | None = None) -> list[econometrics.AnalysisRow]:
        """Regression rows from the truth tables, optionally with fresh cases."""
        metric_of = {m.facility_id: m for m in self.truth_metrics}
        rows = []
        for pos, fac in enumerate(self.facilities):
            if not fac.covariates_complete:
                continue
            if cases is None:
                if fac.cases is None:
                    continue
                case_count = int(fac.cases)
            else:
                case_count = int(cases[pos])
            m = metric_of[fac.facility_id]
            rows.append(
                econometrics.AnalysisRow(
                    facility_id=fac.facility_id,
                    state=fac.state,
                    county=fac.county_fips,
                    cases=case_count,
                    degree=float(m.degree),
                    strength=float(m.strength),
                    wand=float(m.wand),
                    eigencentrality=float(m.eigencentrality),
                    beds=float(fac.beds),
                    high_medicaid=bool(fac.high_medicaid),
                    high_black=bool(fac.high_black),
                    urban=bool(fac.urban),
                    cms_rating=int(fac.cms_rating),
                    infection_violation=bool(fac.infection_violation),
                )
            )
        return rows


def _facility_center(state_idx: int, local_idx: int, per_row: int) -> tuple[float, float]:
    lat0 = _BASE_LAT + (state_idx // _STATES_PER_ROW) * _STATE_LAT_STEP
    lon0 = _BASE_LON + (state_idx % _STATES_PER_ROW) * _STATE_LON_STEP
    return (
        lat0 + (local_idx // per_row) * _FACILITY_SPACING_DEG,
        lon0 + (local_idx % per_row) * _FACILITY_SPACING_DEG,
    )


def oracle_metrics(nodes: Sequence[str], edges: Mapping[tuple[str, str], int]) -> dict[str, NetworkMetrics]:
    """Brute-force centrality via dense matrices and a dense eigensolver.

    Independent of the metrics module: degree/strength/neighbor averages
    are dense row sums and the eigenvector comes from ``numpy.linalg.eigh``.
    Capped at ``ORACLE_NODE_CAP`` nodes.
    """
    n = len(nodes)
    if n > ORACLE_NODE_CAP:
        raise ValueError(f"oracle_metrics capped at {ORACLE_NODE_CAP} nodes, got {n}")
    position = {fid: i for i, fid in enumerate(nodes)}
    a = np.zeros((n, n))
    w = np.zeros((n, n))
    for (fi, fj), weight in edges.items():
        i, j = position[fi], position[fj]
        if i == j:
            raise ValueError(f"self-loop on {fi}")
        a[i, j] = a[j, i] = 1.0
        w[i, j] = w[j, i] = float(weight)
    deg = a.sum(axis=1)
    strg = w.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        wand = np.where(strg > 0, (w @ deg) / strg, 0.0)

    if a.any():
        eigenvalues, eigenvectors = np.linalg.eigh(a)
        principal = eigenvectors[:, -1]
        anchor = int(np.argmax(np.abs(principal)))
        if principal[anchor] < 0:
            principal = -principal
        # Entries off the dominant component are exactly zero in exact
        # arithmetic; clip the solver's sign noise there.
        principal = np.maximum(principal, 0.0)
        principal[deg == 0] = 0.0
        peak = principal.max()
        centrality = principal / peak if peak > 0 else principal
    else:
        centrality = np.zeros(n)

    state = ""
    return {
        fid: NetworkMetrics(
            facility_id=fid,
            state=state,
            degree=int(deg[position[fid]]),
            strength=int(strg[position[fid]]),
            wand=float(wand[position[fid]]),
            eigencentrality=float(centrality[position[fid]]),
        )
        for fid in nodes
    }


@dataclass
class OracleFit:
    """Coefficients from the explicit dummy-variable regression."""

    coefficients: dict[str, float]
    dropped: tuple[str, ...]


def oracle_fe_ols(rows: Sequence[econometrics.AnalysisRow], spec: econometrics.RegressionSpec) -> OracleFit:
    """Fixed effects by explicit group dummies, solved directly via lstsq.

    The equivalence-theorem oracle for the within estimator.  Capped at
    ``ORACLE_ROW_CAP`` rows and ``ORACLE_GROUP_CAP`` groups.
    """
    if len(rows) > ORACLE_ROW_CAP:
        raise ValueError(f"oracle_fe_ols capped at {ORACLE_ROW_CAP} rows, got {len(rows)}")
    x, y, groups, names = econometrics.build_design(rows, spec)
    labels, codes = np.unique(np.asarray(groups), return_inverse=True)
    if len(labels) > ORACLE_GROUP_CAP:
        raise ValueError(f"oracle_fe_ols capped at {ORACLE_GROUP_CAP} groups, got {len(labels)}")
    dummies = np.zeros((len(rows), len(labels)))
    dummies[np.arange(len(rows)), codes] = 1.0
    design = np.hstack([dummies, x])
    all_names = tuple(f"_group_{label}" for label in labels) + names
    kept, dropped = econometrics._rank_filter(design, all_names)
    solution, *_ = np.linalg.lstsq(design[:, kept], y, rcond=None)
    coefficients = {
        all_names[idx]: float(b) for idx, b in zip(kept, solution) if not all_names[idx].startswith("_group_")
    }
    return OracleFit(
        coefficients=coefficients,
        dropped=tuple(name for name in dropped if not name.startswith("_group_")),
    )


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Materialize facilities, staff visits, ground truth, and case counts."""
    rng = np.random.default_rng([config.seed, 0])
    n_states = config.n_states
    fps = config.facilities_per_state
    n_fac = n_states * fps
    per_row = math.ceil(math.sqrt(fps))
    states = _STATE_CODES[:n_states]

    centers = np.empty((n_fac, 2))
    state_idx = np.repeat(np.arange(n_states), fps)
    for pos in range(n_fac):
        centers[pos] = _facility_center(int(state_idx[pos]), pos % fps, per_row)

    address_only = rng.random(n_fac) < config.address_only_share
    beds = rng.integers(30, 251, n_fac)
    high_medicaid = rng.random(n_fac) < 0.30
    high_black = rng.random(n_fac) < 0.15
    urban = rng.random(n_fac) < 0.70
    cms_rating = rng.integers(1, 6, n_fac)
    infection_violation = rng.random(n_fac) < 0.75
    county_local = rng.integers(0, config.counties_per_state, n_fac)
    missing_rating = rng.random(n_fac) < config.missing_rating_share
    missing_cases = rng.random(n_fac) < config.missing_cases_share

    # Staff plan, fully vectorized so large scenarios stay fast.
    n_staff = config.n_staff
    staff_state = rng.integers(0, n_states, n_staff)
    primary_local = rng.integers(0, fps, n_staff)
    multi = rng.random(n_staff) < config.multi_facility_share
    cross = multi & (rng.random(n_staff) < config.cross_state_fraction)
    in_state_multi = multi & ~cross
    second_local = (primary_local + rng.integers(1, max(fps, 2), n_staff)) % fps
    cross_state = (staff_state + rng.integers(1, max(n_states, 2), n_staff)) % n_states
    cross_local = rng.integers(0, fps, n_staff)
    casual = rng.random(n_staff) < config.casual_visit_share
    casual_local = (primary_local + rng.integers(1, max(fps, 2), n_staff)) % fps
    if fps < 2:
        casual[:] = False
    # A casual stop must not duplicate an employment in the same facility.
    casual &= ~(in_state_multi & (casual_local == second_local))

    primary_pos = staff_state * fps + primary_local
    second_pos = np.where(cross, cross_state * fps + cross_local, staff_state * fps + second_local)
    casual_pos = staff_state * fps + casual_local

    pings_primary = rng.integers(config.pings_per_visit_min, config.pings_per_visit_max + 1, n_staff)
    pings_second = rng.integers(config.pings_per_visit_min, config.pings_per_visit_max + 1, n_staff)
    pings_casual = rng.integers(1, TRACE_THRESHOLD + 1, n_staff)

    visits: list[tuple[str, int, int]] = []
    multi_count = 0
    for i in range(n_staff):
        device = f"D{i:06d}"
        visits.append((device, int(primary_pos[i]), int(pings_primary[i])))
        if multi[i]:
            visits.append((device, int(second_pos[i]), int(pings_second[i])))
            multi_count += 1
        if casual[i]:
            visits.append((device, int(casual_pos[i]), int(pings_casual[i])))

    # Ground-truth networks from co-employment pairs.
    edge_weights: dict[str, dict[tuple[str, str], int]] = {s: {} for s in states}
    cross_obs: list[EdgeObservation] = []
    facility_ids = [f"F{pos:05d}" for pos in range(n_fac)]
    for i in np.flatnonzero(multi):
        a = facility_ids[int(primary_pos[i])]
        b = facility_ids[int(second_pos[i])]
        key = (a, b) if a < b else (b, a)
        if cross[i]:
            cross_obs.append(EdgeObservation(f"D{i:06d}", *key))
        else:
            group = edge_weights[states[int(staff_state[i])]]
            group[key] = group.get(key, 0) + 1
    truth_networks = {
        state: FacilityNetwork(
            partition_key=state,
            nodes=[facility_ids[pos] for pos in range(n_fac) if states[int(state_idx[pos])] == state],
            edges=dict(sorted(edge_weights[state].items())),
        )
        for state in states
    }

    truth_metrics: list[NetworkMetrics] = []
    for state in states:
        net = truth_networks[state]
        oracle = oracle_metrics(net.nodes, net.edges)
        for fid in net.nodes:
            row = oracle[fid]
            truth_metrics.append(
                NetworkMetrics(fid, state, row.degree, row.strength, row.wand, row.eigencentrality)
            )
    truth_metrics.sort(key=lambda m: (m.state, m.facility_id))
    metric_of = {m.facility_id: m for m in truth_metrics}

    # Planted regression surface.
    names = _design_names()
    design = np.empty((n_fac, len(names)))
    for pos in range(n_fac):
        m = metric_of[facility_ids[pos]]
        values = {
            "degree": float(m.degree),
            "strength": float(m.strength),
            "wand": m.wand,
            "eigencentrality": m.eigencentrality,
            "beds": float(beds[pos]),
            "beds_sq": float(beds[pos]) ** 2,
            "high_medicaid": float(high_medicaid[pos]),
            "high_black": float(high_black[pos]),
            "cms_rating_1": float(cms_rating[pos] == 1),
            "cms_rating_2": float(cms_rating[pos] == 2),
            "cms_rating_3": float(cms_rating[pos] == 3),
            "cms_rating_4": float(cms_rating[pos] == 4),
            "infection_violation": float(infection_violation[pos]),
            "urban": float(urban[pos]),
        }
        design[pos] = [values[name] for name in names]

    betas = np.array([config.true_betas[name] for name in names])
    state_effects = config.base_intercept + rng.normal(0.0, config.state_effect_sd, n_states)
    rng_cases = np.random.default_rng([config.seed, 1])
    epsilon = rng_cases.normal(0.0, config.noise_sd, n_fac)
    y_star = design @ betas + state_effects[state_idx] + epsilon
    cases = np.maximum(np.rint(np.sinh(y_star)), 0.0).astype(np.int64)

    facilities: list[Facility] = []
    true_rings: list[np.ndarray] = []
    stub_entries: dict[str, tuple[float, float]] = {}
    for pos in range(n_fac):
        state = states[int(state_idx[pos])]
        address = f"{pos} Grid Road, {state}"
        radius = config.fallback_radius_m if address_only[pos] else config.polygon_radius_m
        ring = polygon_from_point((centers[pos, 0], centers[pos, 1]), radius)
        true_rings.append(ring)
        if address_only[pos]:
            stub_entries[address] = (float(centers[pos, 0]), float(centers[pos, 1]))
        facilities.append(
            Facility(
                facility_id=facility_ids[pos],
                name=f"Care Center {pos:05d}",
                state=state,
                county_fips=f"{int(state_idx[pos]):02d}{int(county_local[pos]):03d}",
                address=address,
                polygon=None if address_only[pos] else ring,
                beds=int(beds[pos]),
                cases=None if missing_cases[pos] else int(cases[pos]),
                high_medicaid=bool(high_medicaid[pos]),
                high_black=bool(high_black[pos]),
                urban=bool(urban[pos]),
                cms_rating=None if missing_rating[pos] else int(cms_rating[pos]),
                infection_violation=bool(infection_violation[pos]),
            )
        )

    return Scenario(
        config=config,
        states=states,
        facilities=facilities,
        centers=centers,
        true_rings=true_rings,
        stub_entries=stub_entries,
        visits=visits,
        multi_device_count=multi_count,
        truth_networks=truth_networks,
        truth_cross=cross_obs,
        truth_metrics=truth_metrics,
        design_names=names,
        design=design,
        state_effects=state_effects,
        y_star=y_star,
        cases=cases,
    )


def simulate_cases(scenario: Scenario, replication: int) -> np.ndarray:
    """Redraw case counts from the planted model with fresh noise only."""
    rng = np.random.default_rng([scenario.config.seed, 1, replication])
    betas = np.array([scenario.config.true_betas[name] for name in scenario.design_names])
    state_idx = np.repeat(
        np.arange(scenario.config.n_states), scenario.config.facilities_per_state
    )
    epsilon = rng.normal(0.0, scenario.config.noise_sd, len(scenario.facilities))
    y_star = scenario.design @ betas + scenario.state_effects[state_idx] + epsilon
    return np.maximum(np.rint(np.sinh(y_star)), 0.0).astype(np.int64)


def _ping_arrays(scenario: Scenario, rng) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    """Device ids plus timestamp/lat/lon arrays for every synthetic ping."""
    config = scenario.config
    counts = np.fromiter((v[2] for v in scenario.visits), dtype=np.int64, count=len(scenario.visits))
    fac_pos = np.fromiter((v[1] for v in scenario.visits), dtype=np.int64, count=len(scenario.visits))
    visit_idx = np.repeat(np.arange(len(scenario.visits)), counts)
    total = int(counts.sum())

    center = scenario.centers
    radius = np.where(
        [fac.polygon is None for fac in scenario.facilities],
        config.fallback_radius_m,
        config.polygon_radius_m,
    )
    # Stay strictly inside the 16-gon: within 90% of its inscribed circle.
    safe_radius = 0.9 * inscribed_radius_m(radius, 16)

    ping_fac = fac_pos[visit_idx]
    r = safe_radius[ping_fac] * np.sqrt(rng.random(total))
    theta = rng.random(total) * 2.0 * math.pi
    north = r * np.sin(theta)
    east = r * np.cos(theta)
    lat0 = center[ping_fac, 0]
    lon0 = center[ping_fac, 1]
    lat = lat0 + np.degrees(north / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(east / (EARTH_RADIUS_M * np.cos(np.radians(lat0))))
    devices = [scenario.visits[i][0] for i in visit_idx]

    # Noise devices ping between facility grid points, far from any footprint.
    n_noise = int(round(config.noise_device_share * config.n_staff))
    if n_noise:
        noise_counts = rng.integers(1, 6, n_noise)
        noise_total = int(noise_counts.sum())
        noise_idx = np.repeat(np.arange(n_noise), noise_counts)
        noise_state = rng.integers(0, config.n_states, n_noise)
        per_row = math.ceil(math.sqrt(config.facilities_per_state))
        anchor = np.array(
            [_facility_center(int(s), int(rng.integers(0, config.facilities_per_state)), per_row)
             for s in noise_state]
        )
        jitter = (rng.random((noise_total, 2)) - 0.5) * 0.006
        noise_lat = anchor[noise_idx, 0] + _FACILITY_SPACING_DEG / 2 + jitter[:, 0]
        noise_lon = anchor[noise_idx, 1] + _FACILITY_SPACING_DEG / 2 + jitter[:, 1]
        lat = np.concatenate([lat, noise_lat])
        lon = np.concatenate([lon, noise_lon])
        devices.extend(f"N{i:06d}" for i in noise_idx)
        total += noise_total

    timestamps = rng.integers(int(config.window.start), int(config.window.end) + 1, total)
    shuffle = rng.permutation(total)
    devices = [devices[i] for i in shuffle]
    return devices, timestamps[shuffle], lat[shuffle], lon[shuffle]


def write_scenario(scenario: Scenario, out_dir) -> dict[str, Path]:
    """Write pipeline inputs, ground-truth files, and a ready pipeline config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "registry": out / "registry.csv",
        "pings": out / "pings.csv",
        "geocoder_stub": out / "geocoder_stub.txt",
        "assignments_truth": out / "assignments.truth.csv",
        "edges_truth": out / "edges.truth.csv",
        "cross_truth": out / "cross_partition.truth.csv",
        "metrics_truth": out / "metrics.truth.csv",
        "analysis_truth": out / "analysis.truth.csv",
        "betas_truth": out / "betas.truth.csv",
        "stats_truth": out / "stats.truth.csv",
        "pipeline_config": out / "pipeline.cfg",
    }

    write_facilities(scenario.facilities, paths["registry"])

    with open(paths["geocoder_stub"], "w", encoding="utf-8") as handle:
        for address in sorted(scenario.stub_entries):
            lat, lon = scenario.stub_entries[address]
            handle.write(f"{address}\t{lat!r},{lon!r}\n")

    rng_pings = np.random.default_rng([scenario.config.seed, 2])
    devices, timestamps, lat, lon = _ping_arrays(scenario, rng_pings)
    ts_list = timestamps.tolist()
    lat_list = lat.tolist()
    lon_list = lon.tolist()
    with open(paths["pings"], "w", encoding="utf-8", newline="") as handle:
        handle.write("device_id,timestamp,latitude,longitude\n")
        for i, device in enumerate(devices):
            handle.write(f"{device},{ts_list[i]},{lat_list[i]!r},{lon_list[i]!r}\n")

    write_assignments(scenario.truth_assignments(), paths["assignments_truth"])
    write_edge_list(scenario.truth_networks, paths["edges_truth"])
    write_cross_partition(scenario.truth_cross, scenario.facilities, paths["cross_truth"])
    write_metrics(scenario.truth_metrics, paths["metrics_truth"])

    with open(paths["analysis_truth"], "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["facility_id", "state", "county_fips", "cases", "y_star", *scenario.design_names])
        for pos, fac in enumerate(scenario.facilities):
            writer.writerow(
                [
                    fac.facility_id,
                    fac.state,
                    fac.county_fips,
                    int(scenario.cases[pos]),
                    repr(float(scenario.y_star[pos])),
                    *[repr(float(v)) for v in scenario.design[pos]],
                ]
            )

    with open(paths["betas_truth"], "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["term", "value"])
        for name in scenario.design_names:
            writer.writerow([name, repr(float(scenario.config.true_betas[name]))])
        for state, effect in zip(scenario.states, scenario.state_effects):
            writer.writerow([f"state_effect_{state}", repr(float(effect))])

    with open(paths["stats_truth"], "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["key", "value"])
        writer.writerow(["n_facilities", len(scenario.facilities)])
        writer.writerow(["n_staff", scenario.config.n_staff])
        writer.writerow(["multi_device_count", scenario.multi_device_count])
        writer.writerow(["shared_fraction_truth", repr(scenario.shared_fraction_truth)])
        writer.writerow(["n_pings", len(devices)])
        writer.writerow(["n_cross_partition_devices", len(scenario.truth_cross)])

    with open(paths["pipeline_config"], "w", encoding="utf-8") as handle:
        handle.write(f"pings = {paths['pings']}\n")
        handle.write(f"registry = {paths['registry']}\n")
        handle.write(f"geocoder_stub = {paths['geocoder_stub']}\n")
        handle.write(f"out_dir = {out}\n")
        handle.write(f"fallback_radius_m = {scenario.config.fallback_radius_m!r}\n")
        handle.write(f"window_start = {scenario.config.window.start!r}\n")
        handle.write(f"window_end = {scenario.config.window.end!r}\n")

    return paths


def generate(config: ScenarioConfig, out_dir) -> tuple[Scenario, dict[str, Path]]:
    """Build a scenario and write every input and truth file under ``out_dir``."""
    scenario = build_scenario(config)
    paths = write_scenario(scenario, out_dir)
    return scenario, paths
