"""Batch front-end: generate synthetic cohorts, run scheme grids from a JSON
config, and rebuild report tables from stored results.

Commands
    lesionsurv gen -c config.json      write lesions.csv / outcomes.csv
    lesionsurv run -c config.json      run the grid, write results
    lesionsurv report -d DIR -r LABEL  rebuild summary + delta matrix

Exit codes: 0 success, 1 validation error (bad config/arguments/inputs),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .aggregation import RISK_AGG_KINDS, ROI_STRATEGY_KINDS, RiskAggregator
from .cohort import Cohort, IngestionError, load_lesions, load_outcomes, write_lesions, write_outcomes
from .evaluation import kaplan_meier, logrank_test
from .harness import (
    DEFAULT_CORRELATION_THRESHOLD,
    Scheme,
    SchemeResult,
    make_partitions,
    run_grid,
    summarize,
)
from .heterogeneity import (
    DEFAULT_MINKOWSKI_P,
    METRIC_KINDS,
    Metric,
    patient_heterogeneity,
    roi_count_groups,
    tercile_stratify,
)
from .survival import MODEL_NAMES, ModelSpec
from .synthgen import GenSpec, generate

log = logging.getLogger("lesionsurv")

#: strategy tokens accepted in configs; bare "all_roi" expands to all four
#: risk aggregators
ALL_ROI_TOKENS = tuple(f"all_roi_{k}" for k in RISK_AGG_KINDS)
BASE_TOKENS = tuple(k for k in ROI_STRATEGY_KINDS if k != "all_roi")
STRATEGY_TOKENS = BASE_TOKENS + ("all_roi",) + ALL_ROI_TOKENS


def parse_strategy_token(token: str) -> list[tuple[str, RiskAggregator | None]]:
    if token in BASE_TOKENS:
        return [(token, None)]
    if token == "all_roi":
        return [("all_roi", RiskAggregator(k)) for k in RISK_AGG_KINDS]
    if token in ALL_ROI_TOKENS:
        return [("all_roi", RiskAggregator(token[len("all_roi_"):]))]
    raise ValueError(f"unknown strategy token '{token}' (expected one of {STRATEGY_TOKENS})")


@dataclass(frozen=True)
class RunConfig:
    lesions: str | None
    outcomes: str | None
    generate: GenSpec | None
    strategies: tuple[str, ...]
    models: tuple[str, ...]
    n_iterations: int
    seed: int
    reference: str
    output_dir: str
    minkowski_p: float = DEFAULT_MINKOWSKI_P
    correlation_threshold: float = DEFAULT_CORRELATION_THRESHOLD
    model_params: tuple[tuple[str, object], ...] = ()

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {
            "lesions", "outcomes", "generate", "strategies", "models",
            "n_iterations", "seed", "reference", "output_dir", "minkowski_p",
            "correlation_threshold", "model_params",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")

        gen = GenSpec.from_dict(raw["generate"]) if raw.get("generate") else None
        lesions = raw.get("lesions")
        outcomes = raw.get("outcomes")
        if gen is not None and (lesions or outcomes):
            raise ValueError("config must give either 'generate' or CSV paths, not both")
        if gen is None and not (lesions and outcomes):
            raise ValueError("config needs 'generate' or both 'lesions' and 'outcomes'")

        strategies = tuple(raw.get("strategies", ()))
        models = tuple(raw.get("models", ()))
        if not strategies or not models:
            raise ValueError("config needs at least one strategy and one model")
        for tok in strategies:
            parse_strategy_token(tok)
        for name in models:
            if name not in MODEL_NAMES:
                raise ValueError(f"unknown model '{name}' (expected one of {MODEL_NAMES})")

        n_iterations = int(raw.get("n_iterations", 1000))
        if n_iterations < 1:
            raise ValueError("n_iterations must be positive")
        if "seed" not in raw:
            raise ValueError("config needs a 'seed'")
        if "output_dir" not in raw:
            raise ValueError("config needs an 'output_dir'")

        config = cls(
            lesions=lesions,
            outcomes=outcomes,
            generate=gen,
            strategies=strategies,
            models=models,
            n_iterations=n_iterations,
            seed=int(raw["seed"]),
            reference=str(raw.get("reference", "")),
            output_dir=str(raw["output_dir"]),
            minkowski_p=float(raw.get("minkowski_p", DEFAULT_MINKOWSKI_P)),
            correlation_threshold=float(
                raw.get("correlation_threshold", DEFAULT_CORRELATION_THRESHOLD)
            ),
            model_params=tuple(sorted((raw.get("model_params") or {}).items())),
        )
        labels = [s.label for s in config.schemes()]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate schemes in grid")
        if config.reference and config.reference not in labels:
            raise ValueError(f"reference scheme '{config.reference}' not in the grid")
        return config

    def model_spec(self, name: str) -> ModelSpec:
        return ModelSpec.from_name(name, **dict(self.model_params))

    def schemes(self) -> list[Scheme]:
        out = []
        for token in self.strategies:
            for kind, agg in parse_strategy_token(token):
                for name in self.models:
                    out.append(Scheme(kind, self.model_spec(name), agg))
        return out


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return RunConfig.from_dict(json.load(fh))


def _sanitize(label: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "__" for c in label)


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


def _write_csv(path: str, header: list[str], rows: list[list]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_cohort(config: RunConfig) -> Cohort:
    if config.generate is not None:
        return generate(config.generate)
    cohort = load_lesions(config.lesions)
    return load_outcomes(config.outcomes, cohort)


def cmd_gen(config_path: str) -> int:
    config = load_config(config_path)
    if config.generate is None:
        raise ValueError("gen needs a 'generate' block in the config")
    cohort = generate(config.generate)
    os.makedirs(config.output_dir, exist_ok=True)
    write_lesions(cohort, os.path.join(config.output_dir, "lesions.csv"))
    write_outcomes(cohort, os.path.join(config.output_dir, "outcomes.csv"))
    manifest = {
        "command": "gen",
        "gen_spec": config.generate.to_dict(),
        "files": ["lesions.csv", "outcomes.csv"],
        "n_patients": cohort.n_patients,
        "n_lesions": cohort.n_lesions,
    }
    with open(os.path.join(config.output_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %d patients / %d lesions to %s", cohort.n_patients,
             cohort.n_lesions, config.output_dir)
    return 0


def _iteration_rows(result: SchemeResult) -> list[list]:
    rows = []
    for i, c in enumerate(result.c_indices):
        failed = int(math.isnan(c))
        rows.append([result.label, i, "" if failed else repr(float(c)), failed])
    return rows


def _summary_rows(results, reference) -> tuple[list[list], list[dict]]:
    table = summarize(results, reference)
    csv_rows = []
    json_rows = []
    for row in table:
        csv_rows.append([
            row.label, _fmt(row.median), _fmt(row.delta_median), _fmt(row.cohens_d),
            row.band, row.stars, _fmt(row.c_min), _fmt(row.c_max),
            row.n_below_half, row.n_failed,
        ])
        json_rows.append({
            "label": row.label,
            "median": None if math.isnan(row.median) else row.median,
            "delta_median": None if math.isnan(row.delta_median) else row.delta_median,
            "cohens_d": None if math.isnan(row.cohens_d) else row.cohens_d,
            "band": row.band,
            "stars": row.stars,
            "c_min": None if math.isnan(row.c_min) else row.c_min,
            "c_max": None if math.isnan(row.c_max) else row.c_max,
            "n_below_half": row.n_below_half,
            "n_failed": row.n_failed,
        })
    return csv_rows, json_rows

SUMMARY_HEADER = [
    "label", "median", "delta_median", "cohens_d", "band", "stars",
    "c_min", "c_max", "n_below_half", "n_failed",
]


def _write_km_files(cohort: Cohort, out_dir: str, minkowski_p: float) -> tuple[list[str], dict]:
    """Kaplan-Meier CSVs for ROI-count groups and per-metric heterogeneity
    terciles on the full cohort, plus log-rank results across each split."""
    files: list[str] = []
    logrank_report: dict = {}

    def km_group(tag: str, groups: dict):
        results = {}
        for name, members in sorted(groups.items()):
            if not members:
                continue
            curve = kaplan_meier(members)
            fname = f"km_{tag}_{_sanitize(name)}.csv"
            _write_csv(
                os.path.join(out_dir, fname),
                ["time", "at_risk", "events", "survival"],
                [[repr(t), r, d, repr(s)] for t, r, d, s in curve.to_rows()],
            )
            files.append(fname)
            results[name] = len(members)
        nonempty = [m for m in groups.values() if m]
        entry = {"group_sizes": {k: len(v) for k, v in sorted(groups.items()) if v}}
        if len(nonempty) >= 2:
            try:
                stat, df, p = logrank_test(nonempty)
                entry["logrank"] = {"statistic": stat, "df": df, "p_value": p}
            except ValueError as exc:
                entry["logrank"] = None
                entry["note"] = str(exc)
        else:
            entry["logrank"] = None
        logrank_report[tag] = entry

    count_groups: dict[str, list] = {}
    for patient, label in zip(cohort.patients, roi_count_groups(cohort)):
        count_groups.setdefault(label, []).append(patient.response)
    km_group("roi_count", count_groups)

    if cohort.n_patients >= 3:
        for kind in METRIC_KINDS:
            metric = Metric(kind, minkowski_p)
            values = np.array(
                [patient_heterogeneity(p, metric) for p in cohort.patients]
            )
            labels = tercile_stratify(values)
            groups: dict[str, list] = {"low": [], "mid": [], "high": []}
            for patient, lab in zip(cohort.patients, labels):
                groups[lab].append(patient.response)
            km_group(f"tercile_{kind}", groups)

    return files, logrank_report


def cmd_run(config_path: str) -> int:
    config = load_config(config_path)
    cohort = _load_cohort(config)
    schemes = config.schemes()
    reference = config.reference or schemes[0].label
    os.makedirs(config.output_dir, exist_ok=True)

    log.info("cohort: %d patients, %d lesions; grid: %d schemes x %d iterations",
             cohort.n_patients, cohort.n_lesions, len(schemes), config.n_iterations)
    plan = make_partitions(cohort, config.n_iterations, config.seed)
    results = run_grid(
        cohort, schemes, plan,
        corr_threshold=config.correlation_threshold,
        minkowski_p=config.minkowski_p,
    )

    files = ["plan.json", "summary.csv", "summary.json"]
    with open(os.path.join(config.output_dir, "plan.json"), "w", encoding="utf-8") as fh:
        fh.write(plan.to_json())
        fh.write("\n")

    for result in results:
        fname = f"iterations_{_sanitize(result.label)}.csv"
        _write_csv(
            os.path.join(config.output_dir, fname),
            ["scheme", "iteration", "c_index", "failed"],
            _iteration_rows(result),
        )
        files.append(fname)

    csv_rows, json_rows = _summary_rows(results, reference)
    _write_csv(os.path.join(config.output_dir, "summary.csv"), SUMMARY_HEADER, csv_rows)
    with open(os.path.join(config.output_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"reference": reference, "schemes": json_rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    km_files, logrank_report = _write_km_files(cohort, config.output_dir, config.minkowski_p)
    files.extend(km_files)
    with open(os.path.join(config.output_dir, "stratification_logrank.json"), "w",
              encoding="utf-8") as fh:
        json.dump(logrank_report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.append("stratification_logrank.json")

    manifest = {
        "command": "run",
        "reference": reference,
        "n_iterations": config.n_iterations,
        "seed": config.seed,
        "schemes": [s.label for s in schemes],
        "files": sorted(files),
    }
    with open(os.path.join(config.output_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %d result files to %s", len(files) + 1, config.output_dir)
    return 0


def _read_iteration_files(results_dir: str) -> list[SchemeResult]:
    results = []
    if not os.path.isdir(results_dir):
        raise ValueError(f"no results directory at {results_dir}")
    for fname in sorted(os.listdir(results_dir)):
        if not (fname.startswith("iterations_") and fname.endswith(".csv")):
            continue
        with open(os.path.join(results_dir, fname), encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            label = None
            values = []
            for row in reader:
                label = row["scheme"]
                values.append(math.nan if row["failed"] == "1" else float(row["c_index"]))
        if label is not None:
            results.append(SchemeResult(label, np.array(values)))
    if not results:
        raise ValueError(f"no results found in {results_dir}")
    return results


def cmd_report(results_dir: str, reference: str) -> int:
    results = _read_iteration_files(results_dir)
    labels = [r.label for r in results]
    if reference not in labels:
        raise ValueError(f"reference scheme '{reference}' not found in {results_dir}")

    csv_rows, json_rows = _summary_rows(results, reference)
    _write_csv(os.path.join(results_dir, "summary.csv"), SUMMARY_HEADER, csv_rows)
    with open(os.path.join(results_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"reference": reference, "schemes": json_rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    # delta-median / effect-size matrix: strategies down, models across
    table = summarize(results, reference)
    split = [row.label.rsplit("+", 1) for row in table]
    strategies = list(dict.fromkeys(s for s, _ in split))
    models = list(dict.fromkeys(m for _, m in split))
    by_label = {row.label: row for row in table}
    matrix_rows = []
    for strat in strategies:
        cells = [strat]
        for model in models:
            row = by_label.get(f"{strat}+{model}")
            if row is None:
                cells.append("")
            elif math.isnan(row.delta_median):
                cells.append("failed")
            else:
                cells.append(f"{row.delta_median:+.3f}{row.stars}")
        matrix_rows.append(cells)
    _write_csv(
        os.path.join(results_dir, "delta_matrix.csv"),
        ["strategy"] + models,
        matrix_rows,
    )
    log.info("report written to %s", results_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionsurv",
        description="Benchmark lesion-aggregation survival schemes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic cohort to CSV")
    p_gen.add_argument("-c", "--config", required=True, help="JSON config path")

    p_run = sub.add_parser("run", help="run the strategy x model grid")
    p_run.add_argument("-c", "--config", required=True, help="JSON config path")

    p_rep = sub.add_parser("report", help="rebuild summary tables from results")
    p_rep.add_argument("-d", "--results-dir", required=True)
    p_rep.add_argument("-r", "--reference", required=True, help="reference scheme label")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        return 0 if not exc.code else 1

    try:
        if args.command == "gen":
            return cmd_gen(args.config)
        if args.command == "run":
            return cmd_run(args.config)
        return cmd_report(args.results_dir, args.reference)
    except (ValueError, IngestionError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # runtime failure
        log.error("runtime failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
