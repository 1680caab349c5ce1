"""Pipeline orchestration: subcommands over file-mediated stage boundaries.

Each stage reads its predecessor's artifacts from ``out_dir`` and writes
its own, so stages are independently runnable and resumable.  Re-running a
stage on unchanged inputs reproduces its outputs byte for byte: writers
sort their rows, format floats with ``repr``, and embed no timestamps.

Configuration is a flat ``key = value`` text file; every key can also be
supplied as a command-line flag of the same name (dashes for
underscores), with flags taking precedence.

Exit codes: 0 success, 1 internal error, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import econometrics, metrics, network, spatial, synth
from .errors import InputError, PipelineError
from .ingest import (
    Facility,
    StubGeocoder,
    StudyWindow,
    load_facilities,
    parse_pings,
    parse_timestamp,
    resolve_polygons,
    write_facilities,
    write_pings,
)

logger = logging.getLogger(__name__)

COMMANDS = ("ingest", "match", "network", "metrics", "regress", "counterfactual", "synth", "all")

PIPELINE_STAGES = ("ingest", "match", "network", "metrics", "regress", "counterfactual")

_DEFAULT_REGRESSION_COLUMNS = "degree;strength;wand;eigencentrality;wand,eigencentrality"

# key -> (parser, default, help)
CONFIG_OPTIONS: dict[str, tuple] = {
    "pings": (str, "", "raw ping file (defaults to <out_dir>/pings.csv)"),
    "registry": (str, "", "facility registry file (defaults to <out_dir>/registry.csv)"),
    "geocoder_stub": (str, "", "address stub file (defaults to <out_dir>/geocoder_stub.txt)"),
    "out_dir": (str, "out", "artifact directory"),
    "window_start": (str, "2020-03-13T00:00:00Z", "study window start (ISO-8601 or epoch seconds)"),
    "window_end": (str, "2020-04-23T23:59:59Z", "study window end (ISO-8601 or epoch seconds)"),
    "cell_deg": (float, spatial.DEFAULT_CELL_DEG, "spatial index cell size in degrees"),
    "fallback_radius_m": (float, 30.0, "footprint radius for geocoded-point facilities"),
    "partition": (str, "by_state", "network partition: by_state or national"),
    "threads": (int, 1, "worker threads for the spatial join"),
    "eigen_tol": (float, metrics.DEFAULT_EIGEN_TOL, "power-iteration successive-difference tolerance"),
    "eigen_max_iter": (int, metrics.DEFAULT_EIGEN_MAX_ITER, "power-iteration iteration cap"),
    "hist_bin_width": (int, metrics.DEFAULT_HIST_BIN_WIDTH, "degree histogram bin width"),
    "hub_count": (int, 6, "facilities in the hub table"),
    "regression_columns": (str, _DEFAULT_REGRESSION_COLUMNS,
                           "semicolon-separated regressor sets, comma-separated within a set"),
    "run_binary": (bool, True, "also fit the any-cases linear probability variant"),
    "run_county": (bool, True, "also fit the county fixed-effects variant"),
    "alt_cases": (str, "", "optional facility_id,cases file for an alternate-outcome variant"),
    "counterfactual_columns": (str, "wand,eigencentrality",
                               "regressors for the zeroed-network counterfactual"),
    "synth_seed": (int, 42, "scenario seed"),
    "synth_n_states": (int, 5, "synthetic states"),
    "synth_facilities_per_state": (int, 40, "facilities per synthetic state"),
    "synth_counties_per_state": (int, 5, "counties per synthetic state"),
    "synth_n_staff": (int, 5000, "staff devices"),
    "synth_multi_share": (float, 0.07, "share of staff working in two facilities"),
    "synth_cross_fraction": (float, 0.0, "share of multi-facility staff spanning states"),
    "synth_pings_min": (int, 3, "minimum pings per qualifying visit"),
    "synth_pings_max": (int, 8, "maximum pings per qualifying visit"),
    "synth_casual_share": (float, 0.10, "share of staff with a sub-threshold casual visit"),
    "synth_noise_share": (float, 0.05, "noise devices as a share of staff"),
    "synth_address_only_share": (float, 0.10, "facilities needing geocoding instead of a polygon"),
    "synth_missing_cases_share": (float, 0.0, "facilities with unreported cases"),
    "synth_missing_rating_share": (float, 0.0, "facilities with a missing CMS rating"),
    "synth_noise_sd": (float, 0.5, "noise s.d. of the planted case model"),
}

STAGE_OUTPUTS = {
    "ingest": ["pings_clean.csv", "facilities_clean.csv", "ingest_report.csv"],
    "match": ["assignments.csv", "visit_stats.csv"],
    "network": ["edges.csv", "cross_partition.csv", "graphml", "dot"],
    "metrics": [
        "metrics.csv",
        "state_summary.csv",
        "overall_summary.csv",
        "degree_distribution.csv",
        "group_comparison.csv",
        "hub_metrics.csv",
    ],
    "regress": [
        "regression_main.csv",
        "regression_main.txt",
        "regression_binary.csv",
        "regression_binary.txt",
        "regression_county.csv",
        "regression_county.txt",
        "regression_altcases.csv",
        "regression_altcases.txt",
    ],
    "counterfactual": ["counterfactual.csv"],
    "synth": [
        "registry.csv",
        "pings.csv",
        "geocoder_stub.txt",
        "assignments.truth.csv",
        "edges.truth.csv",
        "cross_partition.truth.csv",
        "metrics.truth.csv",
        "analysis.truth.csv",
        "betas.truth.csv",
        "stats.truth.csv",
        "pipeline.cfg",
    ],
}


def _parse_bool_text(text: str) -> bool:
    token = text.strip().lower()
    if token in ("1", "true", "yes", "t"):
        return True
    if token in ("0", "false", "no", "f"):
        return False
    raise InputError(f"not a boolean: {text!r}")


def read_config_file(path: Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; unknown keys fatal."""
    values: dict[str, str] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_OPTIONS:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


class PipelineConfig:
    """Typed configuration resolved from defaults, a config file, and flags."""

    def __init__(self, file_values: dict[str, str], flag_values: dict[str, str | None]):
        for key, (caster, default, _) in CONFIG_OPTIONS.items():
            raw = flag_values.get(key)
            if raw is None:
                raw = file_values.get(key)
            if raw is None:
                value = default
            else:
                try:
                    value = _parse_bool_text(raw) if caster is bool else caster(raw)
                except InputError:
                    raise
                except (TypeError, ValueError) as exc:
                    raise InputError(f"bad value for {key}: {raw!r}") from exc
            setattr(self, key, value)
        if self.partition not in ("by_state", "national"):
            raise InputError(f"partition must be by_state or national, got {self.partition!r}")
        if self.threads < 1:
            raise InputError("threads must be >= 1")

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def window(self) -> StudyWindow:
        try:
            start = parse_timestamp(self.window_start)
            end = parse_timestamp(self.window_end)
        except ValueError as exc:
            raise InputError(f"bad study window: {exc}") from exc
        try:
            return StudyWindow(start, end)
        except ValueError as exc:
            raise InputError(str(exc)) from exc

    def input_path(self, key: str, default_name: str) -> Path:
        configured = getattr(self, key)
        path = Path(configured) if configured else self.out / default_name
        if not path.exists():
            raise InputError(f"missing input file for {key}: {path}")
        return path

    def artifact(self, name: str) -> Path:
        path = self.out / name
        if not path.exists():
            raise InputError(f"missing pipeline artifact {path}; run the producing stage first")
        return path


def _write_kv(path: Path, rows: list[tuple[str, object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["key", "value"])
        for key, value in rows:
            writer.writerow([key, value])


def _regression_column_sets(text: str) -> list[tuple[str, ...]]:
    sets = []
    for chunk in text.split(";"):
        names = tuple(name.strip() for name in chunk.split(",") if name.strip())
        if names:
            sets.append(names)
    if not sets:
        raise InputError("regression_columns specifies no regressor sets")
    return sets


def stage_ingest(cfg: PipelineConfig) -> None:
    pings_path = cfg.input_path("pings", "pings.csv")
    registry_path = cfg.input_path("registry", "registry.csv")
    window = cfg.window()

    parsed = parse_pings(pings_path, window)
    facilities = load_facilities(registry_path)
    geocoded = 0
    if any(f.polygon is None for f in facilities):
        stub_path = cfg.input_path("geocoder_stub", "geocoder_stub.txt")
        client = StubGeocoder.from_file(stub_path)
        geocoded = resolve_polygons(facilities, client, cfg.fallback_radius_m)

    write_pings(parsed.records, cfg.out / "pings_clean.csv")
    write_facilities(facilities, cfg.out / "facilities_clean.csv")
    incomplete = sum(1 for f in facilities if not f.covariates_complete)
    _write_kv(
        cfg.out / "ingest_report.csv",
        [
            ("pings_kept", len(parsed.records)),
            ("pings_skipped", parsed.skipped),
            ("pings_out_of_window", parsed.out_of_window),
            ("pings_duplicate", parsed.duplicates),
            ("facilities", len(facilities)),
            ("facilities_geocoded", geocoded),
            ("facilities_covariate_incomplete", incomplete),
        ],
    )
    logger.info(
        "ingest: %d pings kept (%d skipped, %d outside window, %d duplicates), %d facilities",
        len(parsed.records), parsed.skipped, parsed.out_of_window, parsed.duplicates, len(facilities),
    )


def stage_match(cfg: PipelineConfig) -> None:
    window = cfg.window()
    parsed = parse_pings(cfg.artifact("pings_clean.csv"), window)
    facilities = load_facilities(cfg.artifact("facilities_clean.csv"))
    index = spatial.build_index(facilities, cfg.cell_deg)
    assignments = spatial.assign_visits(parsed.records, index, facilities, threads=cfg.threads)
    spatial.write_assignments(assignments, cfg.out / "assignments.csv")

    qualifying: dict[str, int] = {}
    for assignment in assignments:
        if assignment.qualifies:
            qualifying[assignment.device_id] = qualifying.get(assignment.device_id, 0) + 1
    multi = sum(1 for n in qualifying.values() if n >= 2)
    fraction = spatial.shared_device_fraction(assignments)
    _write_kv(
        cfg.out / "visit_stats.csv",
        [
            ("assignments", len(assignments)),
            ("qualifying_devices", len(qualifying)),
            ("multi_facility_devices", multi),
            ("shared_device_fraction", repr(fraction)),
        ],
    )
    logger.info("match: %d assignments, shared-device fraction %.4f", len(assignments), fraction)


def stage_network(cfg: PipelineConfig) -> None:
    assignments = spatial.read_assignments(cfg.artifact("assignments.csv"))
    facilities = load_facilities(cfg.artifact("facilities_clean.csv"))
    build = network.build_networks(assignments, facilities, cfg.partition)
    network.write_edge_list(build.networks, cfg.out / "edges.csv")
    network.write_cross_partition(build.cross_partition, facilities, cfg.out / "cross_partition.csv")
    graphml_dir = cfg.out / "graphml"
    dot_dir = cfg.out / "dot"
    graphml_dir.mkdir(parents=True, exist_ok=True)
    dot_dir.mkdir(parents=True, exist_ok=True)
    for key in sorted(build.networks):
        net = build.networks[key]
        network.write_graphml(net, graphml_dir / f"net_{key}.graphml")
        network.write_dot(net, dot_dir / f"net_{key}.dot")
    total_edges = sum(len(n.edges) for n in build.networks.values())
    logger.info(
        "network: %d partition(s), %d edge(s), %d cross-partition device pair(s)",
        len(build.networks), total_edges, len(build.cross_partition),
    )


def _networks_from_artifacts(cfg: PipelineConfig, facilities: list[Facility]) -> dict[str, network.FacilityNetwork]:
    edge_map = network.read_edge_list(cfg.artifact("edges.csv"))
    if cfg.partition == "national":
        nodes = sorted(f.facility_id for f in facilities)
        return {
            network.NATIONAL_KEY: network.FacilityNetwork(
                network.NATIONAL_KEY, nodes, dict(sorted(edge_map.get(network.NATIONAL_KEY, {}).items()))
            )
        }
    by_state: dict[str, list[str]] = {}
    for fac in sorted(facilities, key=lambda f: f.facility_id):
        by_state.setdefault(fac.state, []).append(fac.facility_id)
    return {
        state: network.FacilityNetwork(state, ids, dict(sorted(edge_map.get(state, {}).items())))
        for state, ids in sorted(by_state.items())
    }


def _overall_summary_rows(facilities: list[Facility], rows: list[metrics.NetworkMetrics]):
    metric_of = {m.facility_id: m for m in rows}

    def sample_stats(sample: list[Facility]) -> dict[str, str]:
        def pct(name):
            values = [getattr(f, name) for f in sample if getattr(f, name) is not None]
            return repr(100.0 * sum(values) / len(values)) if values else ""

        def mean_sd(values):
            if not values:
                return "", ""
            arr = np.asarray(values, dtype=float)
            sd = repr(float(arr.std(ddof=1))) if arr.size > 1 else ""
            return repr(float(arr.mean())), sd

        beds_mean, beds_sd = mean_sd([f.beds for f in sample if f.beds is not None])
        cms_mean, cms_sd = mean_sd([f.cms_rating for f in sample if f.cms_rating is not None])
        stats = {
            "n": str(len(sample)),
            "pct_high_black": pct("high_black"),
            "pct_high_medicaid": pct("high_medicaid"),
            "pct_urban": pct("urban"),
            "pct_infection_violation": pct("infection_violation"),
            "beds_mean": beds_mean,
            "beds_sd": beds_sd,
            "cms_rating_mean": cms_mean,
            "cms_rating_sd": cms_sd,
        }
        for field_name in ("degree", "strength", "wand", "eigencentrality"):
            values = [getattr(metric_of[f.facility_id], field_name) for f in sample if f.facility_id in metric_of]
            mean, sd = mean_sd(values)
            stats[f"{field_name}_mean"] = mean
            stats[f"{field_name}_sd"] = sd
        return stats

    network_sample = sample_stats(facilities)
    regression_sample = sample_stats([f for f in facilities if f.regression_ready])
    return [
        (variable, regression_sample[variable], network_sample[variable])
        for variable in network_sample
    ]


def stage_metrics(cfg: PipelineConfig) -> None:
    facilities = load_facilities(cfg.artifact("facilities_clean.csv"))
    networks = _networks_from_artifacts(cfg, facilities)
    rows = metrics.metrics_table(networks, tol=cfg.eigen_tol, max_iter=cfg.eigen_max_iter)
    metrics.write_metrics(rows, cfg.out / "metrics.csv")
    metrics.write_state_summary(metrics.state_summary(rows, facilities), cfg.out / "state_summary.csv")

    distribution = metrics.degree_distribution_by_case_status(rows, facilities, cfg.hist_bin_width)
    with open(cfg.out / "degree_distribution.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_lo", "bin_hi", "with_cases", "without_cases"])
        for i, (lo, hi) in enumerate(zip(distribution.bin_edges, distribution.bin_edges[1:])):
            writer.writerow([lo, hi, distribution.with_cases[i], distribution.without_cases[i]])

    cases_of = {f.facility_id: f.cases for f in facilities}
    with open(cfg.out / "group_comparison.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "mean_with_cases", "mean_without_cases", "welch_t", "p_value"])
        for field_name in ("degree", "strength", "wand", "eigencentrality"):
            with_cases, without_cases = [], []
            for row in rows:
                count = cases_of.get(row.facility_id)
                if count is None:
                    continue
                (with_cases if count > 0 else without_cases).append(float(getattr(row, field_name)))
            mean_with = repr(float(np.mean(with_cases))) if with_cases else ""
            mean_without = repr(float(np.mean(without_cases))) if without_cases else ""
            if len(with_cases) >= 2 and len(without_cases) >= 2:
                t_stat, p_value = metrics.two_sample_t(with_cases, without_cases)
                writer.writerow([field_name, mean_with, mean_without, repr(t_stat), repr(p_value)])
            else:
                writer.writerow([field_name, mean_with, mean_without, "", ""])

    metric_of = {m.facility_id: m for m in rows}
    best_per_state: dict[str, Facility] = {}
    for fac in facilities:
        if fac.cases is None or fac.facility_id not in metric_of:
            continue
        current = best_per_state.get(fac.state)
        if current is None or (fac.cases, current.facility_id) > (current.cases, fac.facility_id):
            best_per_state[fac.state] = fac
    hubs = sorted(best_per_state.values(), key=lambda f: (-f.cases, f.facility_id))[: cfg.hub_count]
    with open(cfg.out / "hub_metrics.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["facility_id", "state", "cases", "degree", "strength", "wand", "eigencentrality"])
        for fac in hubs:
            m = metric_of[fac.facility_id]
            writer.writerow(
                [fac.facility_id, fac.state, fac.cases, m.degree, m.strength, repr(m.wand), repr(m.eigencentrality)]
            )

    with open(cfg.out / "overall_summary.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["variable", "regression_sample", "network_sample"])
        for row in _overall_summary_rows(facilities, rows):
            writer.writerow(row)
    logger.info("metrics: %d facility rows over %d partition(s)", len(rows), len(networks))


def _analysis_rows(cfg: PipelineConfig) -> list[econometrics.AnalysisRow]:
    facilities = load_facilities(cfg.artifact("facilities_clean.csv"))
    rows = metrics.read_metrics(cfg.artifact("metrics.csv"))
    return econometrics.build_analysis_rows(facilities, rows)


def _alt_case_rows(cfg: PipelineConfig, rows: list[econometrics.AnalysisRow]) -> list[econometrics.AnalysisRow]:
    path = Path(cfg.alt_cases)
    if not path.exists():
        raise InputError(f"missing input file for alt_cases: {path}")
    alt: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("facility_id", "cases"):
            raise InputError(f"alt_cases header must be facility_id,cases: {header}")
        for line in reader:
            if not line:
                continue
            alt[line[0]] = int(line[1])
    return [
        dataclasses.replace(row, cases=alt[row.facility_id])
        for row in rows
        if row.facility_id in alt
    ]


def _fit_suite(
    rows: list[econometrics.AnalysisRow],
    column_sets: list[tuple[str, ...]],
    dependent: str,
    fe_level: str,
) -> list[econometrics.RegressionResult]:
    results = []
    for i, columns in enumerate(column_sets, start=1):
        spec = econometrics.RegressionSpec(
            network_regressors=columns, dependent=dependent, fe_level=fe_level, label=f"({i})"
        )
        results.append(econometrics.fit_spec(rows, spec))
    return results


def stage_regress(cfg: PipelineConfig) -> None:
    rows = _analysis_rows(cfg)
    if not rows:
        raise InputError("regression sample is empty: no facility has complete covariates and cases")
    column_sets = _regression_column_sets(cfg.regression_columns)

    suites: list[tuple[str, str, str, list[econometrics.AnalysisRow]]] = [
        ("regression_main", "ihs_cases", "state", rows)
    ]
    if cfg.run_binary:
        suites.append(("regression_binary", "any_cases_binary", "state", rows))
    if cfg.run_county:
        suites.append(("regression_county", "ihs_cases", "county", rows))
    if cfg.alt_cases:
        suites.append(("regression_altcases", "ihs_cases", "state", _alt_case_rows(cfg, rows)))

    titles = {
        "regression_main": "Case counts (IHS) on network connectivity, state fixed effects",
        "regression_binary": "Any-cases indicator on network connectivity, state fixed effects",
        "regression_county": "Case counts (IHS) on network connectivity, county fixed effects",
        "regression_altcases": "Alternate case data (IHS) on network connectivity, state fixed effects",
    }
    for name, dependent, fe_level, sample in suites:
        if not sample:
            raise InputError(f"{name}: empty sample")
        results = _fit_suite(sample, column_sets, dependent, fe_level)
        econometrics.write_results_csv(results, cfg.out / f"{name}.csv")
        (cfg.out / f"{name}.txt").write_text(
            econometrics.format_results_table(results, titles[name]), encoding="utf-8"
        )
        logger.info("regress: wrote %s (%d columns, n=%d)", name, len(results), len(sample))


def stage_counterfactual(cfg: PipelineConfig) -> None:
    rows = _analysis_rows(cfg)
    if not rows:
        raise InputError("regression sample is empty: no facility has complete covariates and cases")
    columns = tuple(
        name.strip() for name in cfg.counterfactual_columns.split(",") if name.strip()
    )
    try:
        spec = econometrics.RegressionSpec(
            network_regressors=columns, dependent="ihs_cases", fe_level="state", label="counterfactual"
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result = econometrics.fit_spec(rows, spec)
    try:
        reduction = econometrics.counterfactual_reduction(result, rows)
    except ValueError as exc:
        raise InputError(f"counterfactual not computable: {exc}") from exc
    kv: list[tuple[str, object]] = [
        ("network_regressors", " ".join(columns)),
        ("n_obs", result.n_obs),
        ("reduction_percent", repr(reduction)),
    ]
    for name in columns:
        if name in result.coefficients:
            beta = result.coefficients[name]
            kv.append((f"coefficient_{name}", repr(beta)))
            kv.append((f"semi_elasticity_{name}_per10", repr(econometrics.semi_elasticity(beta, 10.0))))
    _write_kv(cfg.out / "counterfactual.csv", kv)
    logger.info("counterfactual: zeroing %s cuts predicted cases by %.2f%%", ", ".join(columns), reduction)


def stage_synth(cfg: PipelineConfig) -> None:
    config = synth.ScenarioConfig(
        seed=cfg.synth_seed,
        n_states=cfg.synth_n_states,
        facilities_per_state=cfg.synth_facilities_per_state,
        counties_per_state=cfg.synth_counties_per_state,
        n_staff=cfg.synth_n_staff,
        multi_facility_share=cfg.synth_multi_share,
        cross_state_fraction=cfg.synth_cross_fraction,
        pings_per_visit_min=cfg.synth_pings_min,
        pings_per_visit_max=cfg.synth_pings_max,
        casual_visit_share=cfg.synth_casual_share,
        noise_device_share=cfg.synth_noise_share,
        address_only_share=cfg.synth_address_only_share,
        missing_cases_share=cfg.synth_missing_cases_share,
        missing_rating_share=cfg.synth_missing_rating_share,
        fallback_radius_m=cfg.fallback_radius_m,
        noise_sd=cfg.synth_noise_sd,
        window=cfg.window(),
    )
    scenario, paths = synth.generate(config, cfg.out)
    logger.info(
        "synth: %d facilities, %d staff devices, inputs at %s",
        len(scenario.facilities), config.n_staff, paths["pings"].parent,
    )


STAGE_FUNCTIONS = {
    "ingest": stage_ingest,
    "match": stage_match,
    "network": stage_network,
    "metrics": stage_metrics,
    "regress": stage_regress,
    "counterfactual": stage_counterfactual,
    "synth": stage_synth,
}


def _remove_stage_outputs(cfg: PipelineConfig, stage: str) -> None:
    for name in STAGE_OUTPUTS.get(stage, []):
        path = cfg.out / name
        if path.is_dir():
            shutil.rmtree(path, ignore_errors=True)
        elif path.exists():
            path.unlink()


def run_stage(cfg: PipelineConfig, stage: str) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        STAGE_FUNCTIONS[stage](cfg)
    except Exception:
        _remove_stage_outputs(cfg, stage)
        raise


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staffnet",
        description="Facility contact networks from location pings: spatial join, "
        "centrality metrics, and fixed-effects case regressions.",
    )
    parser.add_argument("command", choices=COMMANDS, help="pipeline stage to run ('all' chains them)")
    parser.add_argument("--config", help="flat key = value configuration file")
    for key, (_, default, help_text) in CONFIG_OPTIONS.items():
        parser.add_argument(
            f"--{key.replace('_', '-')}",
            dest=key,
            default=None,
            metavar="V",
            help=f"{help_text} (default: {default!r})",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    stage = "config"
    try:
        file_values = read_config_file(Path(args.config)) if args.config else {}
        flag_values = {key: getattr(args, key) for key in CONFIG_OPTIONS}
        cfg = PipelineConfig(file_values, flag_values)
        stages = PIPELINE_STAGES if args.command == "all" else (args.command,)
        for stage in stages:
            run_stage(cfg, stage)
        return 0
    except InputError as exc:
        print(f"staffnet: input error in stage '{stage}': {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"staffnet: stage '{stage}' failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit nonzero
        print(f"staffnet: internal error in stage '{stage}': {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
