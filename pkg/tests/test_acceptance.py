"""Acceptance suite: one test per exit criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; the full-scale throughput and determinism runs make this module the
slow part of the suite (a few minutes total).
"""

import csv
import math
import time

import numpy as np
import pytest

from conftest import convex_hull, point_in_convex, random_connected_network
from staffnet.cli import main as cli_main
from staffnet.econometrics import (
    NETWORK_REGRESSORS,
    RegressionSpec,
    build_analysis_rows,
    build_design,
    default_ihs_adjustment,
    fit_spec,
    ihs,
    ols,
    semi_elasticity,
    within_transform,
)
from staffnet.ingest import load_facilities, parse_pings
from staffnet.metrics import compute_metrics, eigenvector_centrality, read_metrics
from staffnet.network import adjacency_view, read_edge_list
from staffnet.spatial import build_index, assign_visits, point_in_polygon
from staffnet.synth import (
    ScenarioConfig,
    build_scenario,
    generate,
    oracle_fe_ols,
    oracle_metrics,
    simulate_cases,
)

from conftest import random_analysis_rows


def report(criterion: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{status}] {criterion}{suffix}")
    assert passed, f"{criterion}{suffix}"


@pytest.fixture(scope="module")
def e2e_run(tmp_path_factory):
    """Seeded mid-size scenario pushed through the whole CLI pipeline."""
    out = tmp_path_factory.mktemp("e2e")
    config = ScenarioConfig(
        seed=42,
        n_states=5,
        facilities_per_state=30,
        n_staff=6000,
        missing_cases_share=0.05,
        missing_rating_share=0.05,
    )
    scenario, paths = generate(config, out)
    assert cli_main(["all", "--out-dir", str(out)]) == 0
    return scenario, out


def test_metric_oracle_equivalence_and_residuals():
    # Two criteria measured over the same 100 seeded random graphs:
    # exact degree/strength, 1e-8 neighbor averages and eigenvectors vs the
    # dense oracle, and a 1e-10 residual for every converged eigenpair.
    rng = np.random.default_rng(1234)
    start = time.time()
    worst_eigen = 0.0
    worst_residual = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 51))
        net = random_connected_network(rng, n, extra_edges=int(rng.integers(0, 2 * n)))
        rows = compute_metrics(net)
        oracle = oracle_metrics(net.nodes, net.edges)
        solution, _ = eigenvector_centrality(net)
        a, _ = adjacency_view(net)
        residual = float(np.max(np.abs(a @ solution.vector - solution.eigenvalue * solution.vector)))
        worst_residual = max(worst_residual, residual, solution.residual)
        for row in rows:
            expected = oracle[row.facility_id]
            assert row.degree == expected.degree
            assert row.strength == expected.strength
            assert abs(row.wand - expected.wand) <= 1e-8
            worst_eigen = max(worst_eigen, abs(row.eigencentrality - expected.eigencentrality))
    elapsed = time.time() - start
    report(
        "metric-oracle equivalence on 100 random graphs",
        worst_eigen <= 1e-8 and elapsed < 10.0,
        f"max eigenvector deviation {worst_eigen:.2e}, {elapsed:.1f}s",
    )
    report(
        "eigen residual bound 1e-10 on every converged solution",
        worst_residual <= 1e-10,
        f"max residual {worst_residual:.2e}",
    )


def test_fixed_effects_equivalence():
    rng = np.random.default_rng(97)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(40, 201))
        groups = int(rng.integers(2, 11))
        rows = random_analysis_rows(rng, n, groups)
        spec = RegressionSpec(network_regressors=NETWORK_REGRESSORS)
        result = fit_spec(rows, spec)
        oracle = oracle_fe_ols(rows, spec)
        assert set(result.coefficients) == set(oracle.coefficients)
        for name, value in oracle.coefficients.items():
            worst = max(worst, abs(result.coefficients[name] - value))
    report(
        "within-transform OLS equals dummy-variable OLS on 50 instances",
        worst <= 1e-8,
        f"max coefficient gap {worst:.2e}",
    )


def test_planted_coefficient_recovery():
    config = ScenarioConfig(seed=42, n_states=20, facilities_per_state=100, n_staff=40_000)
    scenario = build_scenario(config)
    assert len(scenario.facilities) >= 2000
    rows = scenario.analysis_rows(cases=scenario.cases)
    spec = RegressionSpec(network_regressors=NETWORK_REGRESSORS)
    x, y0, groups, names = build_design(rows, spec)
    x_t, _ = within_transform(x, y0, groups)
    n_groups = len(set(groups))

    n_reps = 500
    hits = {name: 0 for name in names}
    beta_hat_degree = None
    for rep in range(n_reps):
        cases = simulate_cases(scenario, rep)
        y = ihs(cases.astype(float))
        _, y_t = within_transform(x, y, groups)
        result = ols(x_t, y_t, dof_absorbed=n_groups, names=names)
        assert not result.dropped
        if beta_hat_degree is None:
            beta_hat_degree = result.coefficients["degree"]
        for name in result.names:
            error = abs(result.coefficients[name] - config.true_betas[name])
            if error <= 3 * result.std_errors[name]:
                hits[name] += 1
    coverage = {name: hits[name] / n_reps for name in names}
    worst = min(coverage.values())
    report(
        "planted coefficients inside 3 SEs in >= 99% of 500 replications",
        worst >= 0.99,
        f"minimum per-coefficient coverage {worst:.3f}",
    )

    # Reported semi-elasticities round-trip through the default adjustment.
    delta = 10.0
    percent = semi_elasticity(beta_hat_degree, delta)
    exact = percent == 100.0 * default_ihs_adjustment(beta_hat_degree, delta)
    inverted = math.log1p(percent / 100.0) / delta
    report(
        "semi-elasticity round-trips beta*delta through the default adjustment",
        exact and abs(inverted - beta_hat_degree) <= 1e-12 * max(1.0, abs(beta_hat_degree)),
        f"{beta_hat_degree:.4f} over +{delta:g} -> {percent:.2f}%",
    )


def test_end_to_end_ground_truth(e2e_run):
    scenario, out = e2e_run

    produced_edges = read_edge_list(out / "edges.csv")
    truth_edges = read_edge_list(out / "edges.truth.csv")
    report(
        "pipeline edge lists equal generator truth exactly",
        produced_edges == truth_edges,
        f"{sum(len(e) for e in truth_edges.values())} edges",
    )

    stats = dict(
        line.split(",", 1)
        for line in (out / "visit_stats.csv").read_text().strip().splitlines()[1:]
    )
    fraction = float(stats["shared_device_fraction"])
    report(
        "shared-device fraction within 0.01 of the configured share",
        abs(fraction - scenario.config.multi_facility_share) <= 0.01,
        f"observed {fraction:.4f} vs configured {scenario.config.multi_facility_share}",
    )

    # Counterfactual from artifacts vs a plain-loop recomputation.
    reported = None
    for line in (out / "counterfactual.csv").read_text().strip().splitlines()[1:]:
        key, value = line.split(",", 1)
        if key == "reduction_percent":
            reported = float(value)
    facilities = load_facilities(out / "facilities_clean.csv")
    rows = build_analysis_rows(facilities, read_metrics(out / "metrics.csv"))
    spec = RegressionSpec(network_regressors=("wand", "eigencentrality"), label="counterfactual")
    result = fit_spec(rows, spec)
    coef = result.coefficients

    def column_value(row, name):
        if name == "beds_sq":
            return row.beds**2
        if name.startswith("cms_rating_"):
            return 1.0 if row.cms_rating == int(name[-1]) else 0.0
        return float(getattr(row, name))

    states = sorted({r.state for r in rows})
    alpha = {}
    for state in states:
        members = [r for r in rows if r.state == state]
        alpha[state] = sum(
            float(ihs(float(r.cases))) - sum(coef[n] * column_value(r, n) for n in result.names)
            for r in members
        ) / len(members)
    fitted = sum(
        math.sinh(alpha[r.state] + sum(coef[n] * column_value(r, n) for n in result.names))
        for r in rows
    )
    zeroed = sum(
        math.sinh(
            alpha[r.state]
            + sum(coef[n] * column_value(r, n) for n in result.names if n not in ("wand", "eigencentrality"))
        )
        for r in rows
    )
    brute = 100.0 * (1.0 - zeroed / fitted)
    report(
        "counterfactual matches row-wise brute force to 0.1pp",
        reported is not None and abs(reported - brute) <= 0.1,
        f"reported {reported:.3f}% vs brute force {brute:.3f}%",
    )

    # Refit with every planted regressor: the CLI output recovers the plants.
    assert cli_main([
        "regress", "--out-dir", str(out), "--regression-columns", ",".join(NETWORK_REGRESSORS),
    ]) == 0
    estimates, errors = {}, {}
    with open(out / "regression_main.csv", encoding="utf-8") as handle:
        for line in csv.DictReader(handle):
            if line["column"] == "(1)" and line["std_error"]:
                estimates[line["term"]] = float(line["estimate"])
                errors[line["term"]] = float(line["std_error"])
    worst_z = max(
        abs(estimates[name] - scenario.config.true_betas[name]) / errors[name] for name in estimates
    )
    report(
        "end-to-end regression recovers the planted coefficients",
        len(estimates) == 14 and worst_z <= 3.0,
        f"max |estimate - plant| = {worst_z:.2f} SEs over {len(estimates)} terms",
    )


def test_ihs_identities():
    zero_exact = ihs(0.0) == 0.0
    grid = np.logspace(-6, 6, 400)
    roundtrip = np.sinh(ihs(grid))
    worst = float(np.max(np.abs(roundtrip - grid) / grid))
    report(
        "ihs(0) = 0 exactly and sinh(ihs(x)) = x to 1e-12 on a log grid",
        zero_exact and worst <= 1e-12,
        f"max relative error {worst:.2e}",
    )


def test_spatial_correctness(e2e_run):
    rng = np.random.default_rng(4321)
    trials = 0
    agreed = True
    while trials < 10_000:
        cloud = rng.normal(size=(int(rng.integers(5, 20)), 2))
        hull = convex_hull(cloud)
        for _ in range(25):
            point = tuple(rng.normal(scale=1.5, size=2))
            if point_in_polygon(point, hull) != point_in_convex(point, hull):
                agreed = False
            trials += 1
    report(
        "point-in-polygon agrees with the convex-containment oracle on 10,000 trials",
        agreed,
        f"{trials} trials",
    )

    scenario, out = e2e_run
    window = scenario.config.window
    parsed = parse_pings(out / "pings_clean.csv", window)
    facilities = load_facilities(out / "facilities_clean.csv")
    results = []
    for cell in (0.005, 0.01, 0.05):
        index = build_index(facilities, cell_deg=cell)
        results.append(assign_visits(parsed.records, index, facilities))
    report(
        "visit assignments invariant to grid cell size",
        results[0] == results[1] == results[2],
        f"{len(results[0])} assignments at cells 0.005/0.01/0.05 deg",
    )


def test_throughput_million_pings(tmp_path):
    out = tmp_path / "throughput"
    config = ScenarioConfig(seed=42, n_states=10, facilities_per_state=100, n_staff=168_000)
    generate(config, out)
    with open(out / "pings.csv", "r", encoding="utf-8") as handle:
        n_pings = sum(1 for _ in handle) - 1
    assert n_pings >= 1_000_000
    start = time.time()
    assert cli_main(["ingest", "--out-dir", str(out)]) == 0
    assert cli_main(["match", "--out-dir", str(out)]) == 0
    elapsed = time.time() - start
    report(
        "1M pings x 1,000 facilities through ingest+match in under 60 s",
        elapsed < 60.0,
        f"{n_pings:,} pings in {elapsed:.1f}s",
    )


def test_pipeline_determinism(tmp_path):
    config_args = [
        "--synth-seed", "99",
        "--synth-n-states", "3",
        "--synth-facilities-per-state", "15",
        "--synth-n-staff", "1200",
    ]
    contents = {}
    for label, threads in (("a", "1"), ("b", "4")):
        out = tmp_path / label
        assert cli_main(["synth", "--out-dir", str(out), *config_args]) == 0
        assert cli_main(["all", "--out-dir", str(out), "--threads", threads]) == 0
        contents[label] = {
            p.relative_to(out): p.read_bytes()
            for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "pipeline.cfg"
        }
    same_names = set(contents["a"]) == set(contents["b"])
    identical = same_names and all(contents["a"][k] == contents["b"][k] for k in contents["a"])
    report(
        "byte-identical artifacts across runs and thread counts",
        identical,
        f"{len(contents['a'])} files compared",
    )
