"""Fixed-effects regressions of transformed case counts on network measures.

The estimator is the within transform (group demeaning absorbs the fixed
effects and the intercept) followed by least squares through a QR
decomposition with a sequential rank filter, so collinear columns are
dropped by name instead of poisoning the solve.  Standard errors are
classical, with degrees of freedom charged for the absorbed group means.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .ingest import Facility
from .metrics import NetworkMetrics

logger = logging.getLogger(__name__)

NETWORK_REGRESSORS = ("degree", "strength", "wand", "eigencentrality")

# Ordered significance markers; thresholds are strict upper bounds.
STAR_LEVELS = ((1e-4, "***"), (1e-3, "**"), (1e-2, "*"), (5e-2, "+"))

RESULTS_COLUMNS = ("column", "term", "estimate", "std_error", "p_value", "stars")


def ihs(x):
    """Inverse hyperbolic sine, ln(x + sqrt(1 + x^2)); ihs(0) = 0."""
    return np.arcsinh(x)


def significance_stars(p_value: float) -> str:
    if math.isnan(p_value):
        return ""
    for threshold, marker in STAR_LEVELS:
        if p_value < threshold:
            return marker
    return ""


@dataclass(frozen=True)
class RegressionSpec:
    """One regression column: dependent form, regressors, and FE level.

    Controls are fixed: beds, beds squared, the high-Medicaid and
    high-Black shares, CMS rating dummies for 1-4 stars (5 omitted), the
    infection-violation indicator, and urban status.  Urban is dropped
    automatically under county fixed effects because it has no
    within-county variation.
    """

    network_regressors: tuple[str, ...]
    dependent: str = "ihs_cases"
    fe_level: str = "state"
    label: str = ""

    def __post_init__(self):
        if self.dependent not in ("ihs_cases", "any_cases_binary"):
            raise ValueError(f"unknown dependent {self.dependent!r}")
        if self.fe_level not in ("state", "county"):
            raise ValueError(f"unknown fe_level {self.fe_level!r}")
        if not self.network_regressors:
            raise ValueError("at least one network regressor is required")
        unknown = [r for r in self.network_regressors if r not in NETWORK_REGRESSORS]
        if unknown:
            raise ValueError(f"unknown network regressor(s): {', '.join(unknown)}")
        if len(set(self.network_regressors)) != len(self.network_regressors):
            raise ValueError("duplicate network regressor")

    @property
    def control_columns(self) -> tuple[str, ...]:
        controls = [
            "beds",
            "beds_sq",
            "high_medicaid",
            "high_black",
            "cms_rating_1",
            "cms_rating_2",
            "cms_rating_3",
            "cms_rating_4",
            "infection_violation",
        ]
        if self.fe_level == "state":
            controls.append("urban")
        return tuple(controls)

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(self.network_regressors) + self.control_columns


@dataclass(frozen=True)
class AnalysisRow:
    """Joined per-facility record feeding one regression."""

    facility_id: str
    state: str
    county: str
    cases: int
    degree: float
    strength: float
    wand: float
    eigencentrality: float
    beds: float
    high_medicaid: bool
    high_black: bool
    urban: bool
    cms_rating: int
    infection_violation: bool


@dataclass
class RegressionResult:
    """Coefficients, classical standard errors, and fit statistics."""

    names: tuple[str, ...]
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    p_values: dict[str, float]
    dropped: tuple[str, ...]
    n_obs: int
    df_resid: int
    dof_absorbed: int
    rss: float
    r2: float
    within_r2: float
    f_stat: float
    f_stat_full: float
    residuals: np.ndarray
    spec: RegressionSpec | None = None


def build_analysis_rows(
    facilities: Sequence[Facility],
    metrics: Iterable[NetworkMetrics],
) -> list[AnalysisRow]:
    """Join facility covariates with network metrics for the regression sample.

    Facilities missing any covariate or a case count are excluded here;
    they already contributed to the network stage.
    """
    by_id = {m.facility_id: m for m in metrics}
    rows = []
    for fac in facilities:
        if not fac.regression_ready:
            continue
        m = by_id.get(fac.facility_id)
        if m is None:
            continue
        rows.append(
            AnalysisRow(
                facility_id=fac.facility_id,
                state=fac.state,
                county=fac.county_fips,
                cases=int(fac.cases),
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


def _column_value(row: AnalysisRow, name: str) -> float:
    if name == "beds_sq":
        return row.beds**2
    if name.startswith("cms_rating_"):
        return 1.0 if row.cms_rating == int(name.rsplit("_", 1)[1]) else 0.0
    value = getattr(row, name)
    if isinstance(value, bool):
        return 1.0 if value else 0.0
    return float(value)


def build_design(
    rows: Sequence[AnalysisRow],
    spec: RegressionSpec,
) -> tuple[np.ndarray, np.ndarray, list[str], tuple[str, ...]]:
    """Design matrix, dependent vector, group labels, and column names.

    Columns are ordered network regressors first, then controls.  The
    intercept is absorbed by the within transform rather than included.
    """
    if not rows:
        raise ValueError("no rows in regression sample")
    names = spec.columns
    x = np.empty((len(rows), len(names)), dtype=float)
    for j, name in enumerate(names):
        for i, row in enumerate(rows):
            x[i, j] = _column_value(row, name)
    cases = np.fromiter((row.cases for row in rows), dtype=float, count=len(rows))
    if spec.dependent == "ihs_cases":
        y = ihs(cases)
    else:
        y = (cases > 0).astype(float)
    groups = [row.state if spec.fe_level == "state" else row.county for row in rows]
    return x, y, groups, names


def within_transform(
    x: np.ndarray,
    y: np.ndarray,
    groups: Sequence[str],
) -> tuple[np.ndarray, np.ndarray]:
    """Subtract group means from every column of ``x`` and from ``y``."""
    _, codes = np.unique(np.asarray(groups), return_inverse=True)
    counts = np.bincount(codes).astype(float)

    def demean(column: np.ndarray) -> np.ndarray:
        means = np.bincount(codes, weights=column) / counts
        return column - means[codes]

    x_t = np.column_stack([demean(x[:, j]) for j in range(x.shape[1])]) if x.size else x.copy()
    return x_t, demean(np.asarray(y, dtype=float))


def _rank_filter(
    x: np.ndarray,
    names: Sequence[str],
    rel_tol: float = 1e-9,
) -> tuple[list[int], list[str]]:
    """Greedy left-to-right selection of a full-rank column subset.

    A column is dropped when it has (numerically) no variation or when its
    component orthogonal to the already-kept columns is negligible
    relative to its own norm.
    """
    norms = np.sqrt((x**2).sum(axis=0))
    scale = float(norms.max()) if norms.size else 0.0
    kept: list[int] = []
    dropped: list[str] = []
    for j in range(x.shape[1]):
        if norms[j] <= 1e-12 * max(scale, 1.0):
            dropped.append(names[j])
            continue
        r = np.linalg.qr(x[:, kept + [j]], mode="r")
        if abs(r[-1, -1]) > rel_tol * norms[j]:
            kept.append(j)
        else:
            dropped.append(names[j])
    return kept, dropped


def ols(
    x: np.ndarray,
    y: np.ndarray,
    dof_absorbed: int,
    names: Sequence[str] | None = None,
    total_ss: float | None = None,
) -> RegressionResult:
    """Least squares on (demeaned) data via QR, with classical inference.

    Parameters
    ----------
    x, y : demeaned design matrix and dependent vector.
    dof_absorbed : number of absorbed group means, charged against the
        residual degrees of freedom.
    names : column names for reporting; defaults to x0, x1, ...
    total_ss : total sum of squares of the raw dependent around its grand
        mean, enabling the full-model R-squared and F statistic; without it
        both fall back to their within-regression versions.
    """
    n, k_all = x.shape
    if names is None:
        names = tuple(f"x{j}" for j in range(k_all))
    kept, dropped = _rank_filter(x, names)
    if dropped:
        logger.warning("ols: dropped rank-deficient column(s): %s", ", ".join(dropped))
    if not kept:
        raise ValueError("design matrix has no usable columns")
    x_kept = x[:, kept]
    kept_names = tuple(names[j] for j in kept)
    k = len(kept)

    q, r = np.linalg.qr(x_kept)
    coef = np.linalg.solve(r, q.T @ y)
    residuals = y - x_kept @ coef
    rss = float(residuals @ residuals)
    df_resid = n - k - dof_absorbed

    r_inv = np.linalg.solve(r, np.eye(k))
    xtx_inv_diag = (r_inv**2).sum(axis=1)
    sigma_sq = rss / df_resid if df_resid > 0 else math.nan
    with np.errstate(invalid="ignore"):
        se = np.sqrt(sigma_sq * xtx_inv_diag)

    p_values = {}
    for name, b, s in zip(kept_names, coef, se):
        if math.isnan(s) or df_resid <= 0:
            p_values[name] = math.nan
        elif s == 0.0:
            p_values[name] = math.nan if b == 0.0 else 0.0
        else:
            p_values[name] = 2.0 * float(stats.t.sf(abs(b / s), df_resid))

    within_ss = float(y @ y)  # demeaned y has (group-)mean zero
    within_r2 = 1.0 - rss / within_ss if within_ss > 0 else math.nan
    if total_ss is not None and total_ss > 0:
        r2 = 1.0 - rss / total_ss
    else:
        r2 = within_r2

    def f_statistic(explained: float, model_df: int) -> float:
        if df_resid <= 0 or model_df <= 0:
            return math.nan
        if rss == 0.0:
            return math.inf
        return (explained / model_df) / (rss / df_resid)

    f_within = f_statistic(within_ss - rss, k)
    if total_ss is not None and total_ss > 0:
        f_full = f_statistic(total_ss - rss, k + max(dof_absorbed - 1, 0))
    else:
        f_full = f_within

    return RegressionResult(
        names=kept_names,
        coefficients={name: float(b) for name, b in zip(kept_names, coef)},
        std_errors={name: float(s) for name, s in zip(kept_names, se)},
        p_values=p_values,
        dropped=tuple(dropped),
        n_obs=n,
        df_resid=df_resid,
        dof_absorbed=dof_absorbed,
        rss=rss,
        r2=r2,
        within_r2=within_r2,
        f_stat=f_within,
        f_stat_full=f_full,
        residuals=residuals,
    )


def fit_spec(rows: Sequence[AnalysisRow], spec: RegressionSpec) -> RegressionResult:
    """Build, demean, and fit one specification."""
    x, y, groups, names = build_design(rows, spec)
    x_t, y_t = within_transform(x, y, groups)
    n_groups = len(set(groups))
    total_ss = float(((y - y.mean()) ** 2).sum())
    result = ols(x_t, y_t, dof_absorbed=n_groups, names=names, total_ss=total_ss)
    result.spec = spec
    return result


def default_ihs_adjustment(beta: float, delta: float) -> float:
    """Proportional change implied by an IHS-model coefficient: e^(b*d) - 1."""
    return math.expm1(beta * delta)


def semi_elasticity(
    beta: float,
    delta: float,
    adjust: Callable[[float, float], float] = default_ihs_adjustment,
) -> float:
    """Percent change in the dependent for a ``delta`` change in a regressor.

    ``adjust`` maps ``(beta, delta)`` to a proportional change and is
    pluggable so alternative published adjustment conventions can be
    swapped in; the default is exact for a log-like dependent.
    """
    return 100.0 * adjust(beta, delta)


def counterfactual_reduction(result: RegressionResult, rows: Sequence[AnalysisRow]) -> float:
    """Percent drop in predicted total cases with network regressors zeroed.

    Fitted values keep the estimated fixed effects and controls; only the
    network terms are removed.  Predictions are mapped back to case counts
    through sinh before summing.
    """
    spec = result.spec
    if spec is None:
        raise ValueError("result carries no specification")
    if spec.dependent != "ihs_cases":
        raise ValueError("counterfactual requires the IHS dependent")
    if not any(name in result.coefficients for name in spec.network_regressors):
        raise ValueError("specification has no fitted network regressors")

    x, y, groups, names = build_design(rows, spec)
    beta = np.array([result.coefficients.get(name, 0.0) for name in names])
    _, codes = np.unique(np.asarray(groups), return_inverse=True)
    counts = np.bincount(codes).astype(float)
    # Group effects recovered from the within fit: alpha_g = mean_g(y - X b).
    alpha = np.bincount(codes, weights=y - x @ beta) / counts
    fitted = x @ beta + alpha[codes]

    x_zero = x.copy()
    for j, name in enumerate(names):
        if name in spec.network_regressors:
            x_zero[:, j] = 0.0
    counterfactual = x_zero @ beta + alpha[codes]

    fitted_cases = np.sinh(fitted)
    counterfactual_cases = np.sinh(counterfactual)
    total = float(fitted_cases.sum())
    if total <= 0:
        raise ValueError("fitted case total is non-positive; counterfactual undefined")
    return 100.0 * (1.0 - float(counterfactual_cases.sum()) / total)


def write_results_csv(results: Sequence[RegressionResult], path) -> None:
    """One row per coefficient with stars, then a fit-statistics block."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RESULTS_COLUMNS)
        for idx, result in enumerate(results, start=1):
            label = result.spec.label if result.spec and result.spec.label else f"({idx})"
            for name in result.names:
                p = result.p_values[name]
                writer.writerow(
                    [
                        label,
                        name,
                        repr(result.coefficients[name]),
                        repr(result.std_errors[name]),
                        "" if math.isnan(p) else repr(p),
                        significance_stars(p),
                    ]
                )
            for dropped in result.dropped:
                writer.writerow([label, dropped, "dropped", "", "", ""])
            writer.writerow([label, "n_obs", result.n_obs, "", "", ""])
            writer.writerow([label, "f_stat", repr(result.f_stat), "", "", ""])
            writer.writerow([label, "f_stat_full", repr(result.f_stat_full), "", "", ""])
            writer.writerow([label, "r2", repr(result.r2), "", "", ""])
            writer.writerow([label, "within_r2", repr(result.within_r2), "", "", ""])


def format_results_table(results: Sequence[RegressionResult], title: str) -> str:
    """Fixed-width text table: estimates with stars over standard errors."""
    labels = [
        result.spec.label if result.spec and result.spec.label else f"({idx})"
        for idx, result in enumerate(results, start=1)
    ]
    term_order: list[str] = []
    for result in results:
        for name in result.names:
            if name not in term_order:
                term_order.append(name)

    width = 16
    name_width = max([len(t) for t in term_order] + [len("within_r2")]) + 2
    lines = [title, "=" * (name_width + width * len(results))]
    lines.append("".join([" " * name_width] + [label.rjust(width) for label in labels]))
    for term in term_order:
        est_cells, se_cells = [], []
        for result in results:
            if term in result.coefficients:
                stars = significance_stars(result.p_values[term])
                est_cells.append(f"{result.coefficients[term]:.4g}{stars}".rjust(width))
                se_cells.append(f"({result.std_errors[term]:.4g})".rjust(width))
            else:
                est_cells.append(" ".rjust(width))
                se_cells.append(" ".rjust(width))
        lines.append(term.ljust(name_width) + "".join(est_cells))
        lines.append(" " * name_width + "".join(se_cells))
    lines.append("-" * (name_width + width * len(results)))
    for stat, fmt in (
        ("n_obs", "d"),
        ("f_stat", ".4g"),
        ("r2", ".4g"),
        ("within_r2", ".4g"),
    ):
        cells = [format(getattr(result, stat), fmt).rjust(width) for result in results]
        lines.append(stat.ljust(name_width) + "".join(cells))
    lines.append(
        "Significance: + p<0.05, * p<0.01, ** p<0.001, *** p<0.0001; classical SEs in parentheses."
    )
    return "\n".join(lines) + "\n"
