"""staffnet: facility contact networks from device location pings.

Pipeline stages: ingest raw pings and a facility registry, spatially join
pings to facility footprints, build per-state weighted contact networks,
compute centrality metrics, and fit fixed-effects regressions of case
counts on network connectivity, including a zeroed-network counterfactual.
A synthetic-scenario generator with exact ground truth makes every stage
verifiable end to end.
"""

from .errors import ConvergenceError, GeocodeError, InputError, PipelineError
from .ingest import (
    DEFAULT_WINDOW,
    Facility,
    PingRecord,
    StubGeocoder,
    StudyWindow,
    geocode,
    load_facilities,
    parse_pings,
    polygon_from_point,
)
from .spatial import SpatialIndex, VisitAssignment, assign_visits, build_index, point_in_polygon, shared_device_fraction
from .network import FacilityNetwork, adjacency_view, build_networks
from .metrics import (
    EigenSolution,
    NetworkMetrics,
    degree,
    degree_distribution_by_case_status,
    eigenvector_centrality,
    metrics_table,
    strength,
    two_sample_t,
    weighted_avg_neighbor_degree,
)
from .econometrics import (
    AnalysisRow,
    RegressionResult,
    RegressionSpec,
    build_design,
    counterfactual_reduction,
    fit_spec,
    ihs,
    ols,
    semi_elasticity,
    within_transform,
)
from .synth import Scenario, ScenarioConfig, build_scenario, generate, oracle_fe_ols, oracle_metrics

__version__ = "0.1.0"

__all__ = [
    "AnalysisRow",
    "ConvergenceError",
    "DEFAULT_WINDOW",
    "EigenSolution",
    "Facility",
    "FacilityNetwork",
    "GeocodeError",
    "InputError",
    "NetworkMetrics",
    "PingRecord",
    "PipelineError",
    "RegressionResult",
    "RegressionSpec",
    "Scenario",
    "ScenarioConfig",
    "SpatialIndex",
    "StubGeocoder",
    "StudyWindow",
    "VisitAssignment",
    "adjacency_view",
    "assign_visits",
    "build_design",
    "build_index",
    "build_networks",
    "build_scenario",
    "counterfactual_reduction",
    "degree",
    "degree_distribution_by_case_status",
    "eigenvector_centrality",
    "fit_spec",
    "generate",
    "geocode",
    "ihs",
    "load_facilities",
    "metrics_table",
    "ols",
    "oracle_fe_ols",
    "oracle_metrics",
    "parse_pings",
    "point_in_polygon",
    "polygon_from_point",
    "semi_elasticity",
    "shared_device_fraction",
    "strength",
    "two_sample_t",
    "weighted_avg_neighbor_degree",
    "within_transform",
]
