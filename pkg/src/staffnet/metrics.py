"""Network centrality measures, group comparisons, and summary tables.

Degree, strength, and weighted average neighbor degree are direct sums
over the edge map.  Eigenvector centrality comes from power iteration on
the binary adjacency matrix (weights deliberately ignored) and is
max-normalized within each partition so values range over [0, 1].
Isolated facilities receive zero for every measure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ConvergenceError, InputError
from .ingest import Facility, _text_stream
from .network import FacilityNetwork

DEFAULT_EIGEN_TOL = 1e-12
DEFAULT_EIGEN_MAX_ITER = 10_000
DEFAULT_EIGEN_RESIDUAL_TOL = 1e-10

DEFAULT_HIST_BIN_WIDTH = 5

METRICS_COLUMNS = ("facility_id", "state", "degree", "strength", "wand", "eigencentrality")

STATE_SUMMARY_COLUMNS = (
    "state",
    "n_facilities",
    "n_with_case_data",
    "cases_mean",
    "cases_sd",
    "degree_mean",
    "degree_sd",
    "strength_mean",
    "strength_sd",
    "wand_mean",
    "wand_sd",
    "eigencentrality_mean",
    "eigencentrality_sd",
)


@dataclass(frozen=True)
class NetworkMetrics:
    """Per-facility centrality row."""

    facility_id: str
    state: str
    degree: int
    strength: int
    wand: float
    eigencentrality: float


@dataclass
class EigenSolution:
    """Converged principal eigenpair of a partition's adjacency matrix."""

    eigenvalue: float
    vector: np.ndarray  # non-negative, unit 2-norm (before max-normalization)
    iterations: int
    residual: float


def degree(net: FacilityNetwork) -> dict[str, int]:
    """Number of neighbors per facility."""
    out = {fid: 0 for fid in net.nodes}
    for fi, fj in net.edges:
        out[fi] += 1
        out[fj] += 1
    return out


def strength(net: FacilityNetwork) -> dict[str, int]:
    """Total edge weight per facility."""
    out = {fid: 0 for fid in net.nodes}
    for (fi, fj), weight in net.edges.items():
        out[fi] += weight
        out[fj] += weight
    return out


def weighted_avg_neighbor_degree(net: FacilityNetwork) -> dict[str, float]:
    """Mean neighbor degree weighted by edge weight; 0 for isolated nodes."""
    deg = degree(net)
    strg = strength(net)
    acc = {fid: 0.0 for fid in net.nodes}
    for (fi, fj), weight in net.edges.items():
        acc[fi] += weight * deg[fj]
        acc[fj] += weight * deg[fi]
    return {fid: (acc[fid] / strg[fid] if strg[fid] > 0 else 0.0) for fid in net.nodes}


def eigenvector_centrality(
    net: FacilityNetwork,
    tol: float = DEFAULT_EIGEN_TOL,
    max_iter: int = DEFAULT_EIGEN_MAX_ITER,
    residual_tol: float = DEFAULT_EIGEN_RESIDUAL_TOL,
) -> tuple[EigenSolution, dict[str, float]]:
    """Principal eigenvector of the binary adjacency matrix by power iteration.

    Iterates on A + I so the dominant eigenvalue is strictly separated even
    on bipartite components; eigenvectors are unchanged and the reported
    eigenvalue is shifted back.  Convergence requires both a successive-
    iterate difference below ``tol`` (infinity norm) and a residual
    ``max|Av - lambda v|`` below ``residual_tol``.  The returned map is
    rescaled so the largest value in the partition is exactly 1; isolated
    facilities get exactly 0.  Networks without edges yield all zeros.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations do not reach both tolerances.
    """
    n = net.n_nodes
    if n == 0:
        return EigenSolution(0.0, np.zeros(0), 0, 0.0), {}
    if not net.edges:
        return EigenSolution(0.0, np.zeros(n), 0, 0.0), {fid: 0.0 for fid in net.nodes}

    positions = net.node_positions()
    pairs = sorted(net.edges)
    ui = np.fromiter((positions[a] for a, _ in pairs), dtype=np.int64, count=len(pairs))
    uj = np.fromiter((positions[b] for _, b in pairs), dtype=np.int64, count=len(pairs))
    degrees = np.bincount(ui, minlength=n) + np.bincount(uj, minlength=n)

    x = np.full(n, 1.0 / math.sqrt(n))
    prev_diff = math.inf
    mu = 0.0
    residual = math.inf
    for iteration in range(max_iter + 1):
        y = x.copy()  # (A + I) x
        np.add.at(y, ui, x[uj])
        np.add.at(y, uj, x[ui])
        mu = float(x @ y)
        # With ||x|| = 1 and lambda = mu - 1, this equals max|Ax - lambda x|.
        residual = float(np.max(np.abs(y - mu * x)))
        if residual <= residual_tol and prev_diff <= tol:
            solution = EigenSolution(mu - 1.0, x, iteration, residual)
            break
        if iteration == max_iter:
            raise ConvergenceError(
                f"power iteration did not converge in {max_iter} iterations "
                f"(residual {residual:.3e})",
                residual=residual,
                iterations=max_iter,
            )
        x_next = y / np.linalg.norm(y)
        prev_diff = float(np.max(np.abs(x_next - x)))
        x = x_next

    values = solution.vector.copy()
    values[degrees == 0] = 0.0  # zero-degree nodes carry no principal-eigenvector mass
    peak = float(values.max())
    scaled = values / peak if peak > 0 else values
    return solution, {fid: float(scaled[positions[fid]]) for fid in net.nodes}


def compute_metrics(
    net: FacilityNetwork,
    tol: float = DEFAULT_EIGEN_TOL,
    max_iter: int = DEFAULT_EIGEN_MAX_ITER,
) -> list[NetworkMetrics]:
    """All four measures for one partition, in node order."""
    deg = degree(net)
    strg = strength(net)
    wand = weighted_avg_neighbor_degree(net)
    _, eigen = eigenvector_centrality(net, tol=tol, max_iter=max_iter)
    return [
        NetworkMetrics(
            facility_id=fid,
            state=net.partition_key,
            degree=deg[fid],
            strength=strg[fid],
            wand=wand[fid],
            eigencentrality=eigen[fid],
        )
        for fid in net.nodes
    ]


def metrics_table(
    networks: Mapping[str, FacilityNetwork],
    tol: float = DEFAULT_EIGEN_TOL,
    max_iter: int = DEFAULT_EIGEN_MAX_ITER,
) -> list[NetworkMetrics]:
    """One row per facility across all partitions, sorted by (state, id)."""
    rows: list[NetworkMetrics] = []
    for key in sorted(networks):
        rows.extend(compute_metrics(networks[key], tol=tol, max_iter=max_iter))
    rows.sort(key=lambda r: (r.state, r.facility_id))
    return rows


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if arr.size > 1 else math.nan
    return mean, sd


def two_sample_t(group_a: Sequence[float], group_b: Sequence[float]) -> tuple[float, float]:
    """Welch two-sample t statistic and two-sided p-value.

    Degrees of freedom follow Welch-Satterthwaite.  Both groups need at
    least two observations.  Groups with zero pooled variance yield
    ``(0.0, 1.0)`` when the means agree and an infinite statistic with
    p = 0 otherwise.
    """
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least 2 observations")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    var_a, var_b = float(a.var(ddof=1)), float(b.var(ddof=1))
    se_sq = var_a / a.size + var_b / b.size
    if se_sq == 0.0:
        if mean_a == mean_b:
            return 0.0, 1.0
        return math.copysign(math.inf, mean_a - mean_b), 0.0
    t_stat = (mean_a - mean_b) / math.sqrt(se_sq)
    df = se_sq**2 / (
        (var_a / a.size) ** 2 / (a.size - 1) + (var_b / b.size) ** 2 / (b.size - 1)
    )
    p_value = 2.0 * float(stats.t.sf(abs(t_stat), df))
    return t_stat, p_value


@dataclass
class DegreeDistribution:
    """Degree histograms for facilities with and without reported cases."""

    bin_edges: list[int]  # len bins + 1; bin i covers [edges[i], edges[i+1])
    with_cases: list[int]
    without_cases: list[int]
    mean_with: float
    mean_without: float
    n_with: int
    n_without: int


def degree_distribution_by_case_status(
    metrics: Iterable[NetworkMetrics],
    facilities: Sequence[Facility],
    bin_width: int = DEFAULT_HIST_BIN_WIDTH,
) -> DegreeDistribution:
    """Histogram the degree distribution by any-cases status.

    Facilities with no reported case count are excluded.  Both groups share
    bins of ``bin_width`` covering 0 through the maximum observed degree.
    """
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    cases = {f.facility_id: f.cases for f in facilities}
    with_cases: list[int] = []
    without_cases: list[int] = []
    for row in metrics:
        count = cases.get(row.facility_id)
        if count is None:
            continue
        (with_cases if count > 0 else without_cases).append(row.degree)
    max_degree = max(with_cases + without_cases, default=0)
    n_bins = max_degree // bin_width + 1
    edges = [i * bin_width for i in range(n_bins + 1)]
    hist_with = [0] * n_bins
    hist_without = [0] * n_bins
    for value in with_cases:
        hist_with[value // bin_width] += 1
    for value in without_cases:
        hist_without[value // bin_width] += 1
    return DegreeDistribution(
        bin_edges=edges,
        with_cases=hist_with,
        without_cases=hist_without,
        mean_with=float(np.mean(with_cases)) if with_cases else math.nan,
        mean_without=float(np.mean(without_cases)) if without_cases else math.nan,
        n_with=len(with_cases),
        n_without=len(without_cases),
    )


def state_summary(
    metrics: Iterable[NetworkMetrics],
    facilities: Sequence[Facility],
) -> list[dict[str, object]]:
    """Per-state means and standard deviations of cases and the four measures."""
    cases = {f.facility_id: f.cases for f in facilities}
    by_state: dict[str, list[NetworkMetrics]] = {}
    for row in metrics:
        by_state.setdefault(row.state, []).append(row)
    out = []
    for state in sorted(by_state):
        rows = by_state[state]
        case_values = [cases[r.facility_id] for r in rows if cases.get(r.facility_id) is not None]
        cases_mean, cases_sd = _mean_sd(case_values)
        summary: dict[str, object] = {
            "state": state,
            "n_facilities": len(rows),
            "n_with_case_data": len(case_values),
            "cases_mean": cases_mean,
            "cases_sd": cases_sd,
        }
        for field_name in ("degree", "strength", "wand", "eigencentrality"):
            mean, sd = _mean_sd([getattr(r, field_name) for r in rows])
            summary[f"{field_name}_mean"] = mean
            summary[f"{field_name}_sd"] = sd
        out.append(summary)
    return out


def _format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if value.is_integer():
            return repr(value)
        return repr(value)
    return str(value)


def write_metrics(rows: Iterable[NetworkMetrics], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.facility_id,
                    row.state,
                    row.degree,
                    row.strength,
                    repr(row.wand),
                    repr(row.eigencentrality),
                ]
            )


def read_metrics(source) -> list[NetworkMetrics]:
    stream, owns = _text_stream(source)
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != METRICS_COLUMNS:
            raise InputError(f"metrics file header mismatch: {header}")
        rows = []
        for line in reader:
            if not line:
                continue
            fid, state, deg, strg, wand, eigen = line
            rows.append(NetworkMetrics(fid, state, int(deg), int(strg), float(wand), float(eigen)))
        return rows
    finally:
        if owns:
            stream.close()


def write_state_summary(summaries: Iterable[dict[str, object]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(STATE_SUMMARY_COLUMNS)
        for summary in summaries:
            writer.writerow([_format_number(summary[c]) for c in STATE_SUMMARY_COLUMNS])
