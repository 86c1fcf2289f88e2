"""Command-line driver for the analysis pipeline.

Four subcommands mirror the pipeline stages: ``ingest`` builds analysis
panels from raw tables, ``diagnose`` reports law co-occurrence and
entanglement, ``estimate`` runs a policy-shift estimator with
cluster-robust inference, and ``simulate`` writes synthetic fixtures
with their oracle truth. Every run is driven by a YAML config, echoes
the fully resolved configuration next to its outputs, and writes files
atomically. Outputs carry no timestamps, so identical config and seed
give byte-identical files.

Exit codes: 0 success, 2 input or configuration error, 3 strict-mode
positivity abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import pandas as pd
import yaml

from .diagnostics import (
    bundle_recommendation,
    cooccurrence_by_year,
    cooccurrence_matrix,
    variance_explained_table,
)
from .estimators import LongitudinalDelayTMLE, PointShiftTMLE, PositivityError
from .inference import cluster_robust_se, confidence_interval, results_table
from .learners import EnsembleSpec
from .panel import (
    LAW_CODES,
    LongitudinalPanel,
    PanelTable,
    build_longitudinal_panel,
    build_panel,
    load_county_year,
    load_law_dates,
    state_year_law_table,
)
from .policies import BoundedAdditiveShift, LongitudinalDelayPolicy
from .simulate import (
    DgpSpec,
    LongitudinalDgpSpec,
    simulate,
    true_longitudinal_contrast,
    true_shift_contrast,
)

__all__ = ["main", "ConfigError"]

THREADS_ENV = "POLICYSHIFT_THREADS"

COMMON_KEYS = {"out", "seed", "threads"}
ALLOWED_KEYS = {
    "ingest": COMMON_KEYS
    | {
        "county_year",
        "law_dates",
        "stratum",
        "outcome",
        "exposure_laws",
        "clip_to_window_start",
        "loo_summaries",
        "longitudinal",
        "exposure_years",
    },
    "diagnose": COMMON_KEYS
    | {
        "law_dates",
        "year_start",
        "year_end",
        "law_codes",
        "method",
        "threshold",
        "per_year",
        "stratum",
    },
    "estimate": COMMON_KEYS
    | {
        "panel",
        "stratum",
        "outcome",
        "estimand",
        "policy",
        "folds",
        "targeting",
        "outcome_learner",
        "ratio_learner",
        "ratio_bounds",
        "outcome_bound",
        "positivity_warn_threshold",
        "strict_positivity",
        "write_ic",
        "alpha",
        "exposure_cols",
        "tv_covariates",
    },
    "simulate": COMMON_KEYS | {"kind", "dgp", "policy", "mc_draws", "path_cap"},
}


class ConfigError(ValueError):
    """A run configuration that cannot be executed as written."""


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    if config is None:
        config = {}
    if not isinstance(config, dict):
        raise ConfigError("config root must be a mapping")
    return config


def _check_keys(config, command):
    unknown = sorted(set(config) - ALLOWED_KEYS[command])
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")


def _require(config, key, command):
    if key not in config or config[key] is None:
        raise ConfigError(f"{command} config needs '{key}'")
    return config[key]


def _atomic_write_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_json(path, payload):
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_frame(path, frame):
    _atomic_write_text(path, frame.to_csv(index=False))


def _write_table(path, table):
    """Atomic variant of the panel objects' to_csv."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    table.to_csv(tmp)
    os.replace(tmp, path)


def _resolve_threads(args, config):
    if args.threads is not None:
        return int(args.threads)
    env = os.environ.get(THREADS_ENV)
    if env is not None and env != "":
        return int(env)
    if config.get("threads") is not None:
        return int(config["threads"])
    return None


def _resolve_seed(args, config, default=0):
    if args.seed is not None:
        return int(args.seed)
    if config.get("seed") is not None:
        return int(config["seed"])
    return default


def _resolve_out(args, config):
    out = args.out or config.get("out")
    if not out:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    out = Path(out).resolve()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _policy_from_config(section, estimand, default_a_max=None):
    section = dict(section or {})
    if estimand in ("point_shift", "point"):
        allowed = {"delta1", "delta2", "a_max"}
        unknown = sorted(set(section) - allowed)
        if unknown:
            raise ConfigError(f"unknown policy keys {unknown}; allowed: {sorted(allowed)}")
        section.setdefault("delta1", 1.0)
        section.setdefault("delta2", 2.0)
        if section.get("a_max") is None:
            if default_a_max is None:
                raise ConfigError("policy needs 'a_max'")
            section["a_max"] = float(default_a_max)
        return BoundedAdditiveShift(**section), section
    allowed = {"delay_steps"}
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown policy keys {unknown}; allowed: {sorted(allowed)}")
    section.setdefault("delay_steps", 2)
    return LongitudinalDelayPolicy(**section), section


def _learner_from_config(value, label):
    if value in (None, "default"):
        return None, "default"
    if isinstance(value, dict):
        spec = EnsembleSpec.from_dict(value)
        return spec, spec.to_dict()
    raise ConfigError(f"{label} must be 'default' or an ensemble mapping")


def cmd_ingest(args):
    config = _load_config(args.config)
    _check_keys(config, "ingest")
    out = _resolve_out(args, config)
    seed = _resolve_seed(args, config)
    threads = _resolve_threads(args, config)

    county_path = str(Path(_require(config, "county_year", "ingest")).resolve())
    law_path = str(Path(_require(config, "law_dates", "ingest")).resolve())
    stratum = config.get("stratum", "LATE")
    outcome = config.get("outcome", "naloxone")
    exposure_laws = list(config.get("exposure_laws", ["NAL_P1", "NAL_P2", "NAL_P3", "GSL"]))
    clip = bool(config.get("clip_to_window_start", True))
    loo = bool(config.get("loo_summaries", True))
    longitudinal = bool(config.get("longitudinal", False))
    exposure_years = config.get("exposure_years")
    if longitudinal and not exposure_years:
        raise ConfigError("longitudinal ingest needs 'exposure_years'")

    resolved = {
        "county_year": county_path,
        "law_dates": law_path,
        "stratum": stratum,
        "outcome": outcome,
        "exposure_laws": exposure_laws,
        "clip_to_window_start": clip,
        "loo_summaries": loo,
        "longitudinal": longitudinal,
        "exposure_years": list(exposure_years) if exposure_years else None,
        "out": str(out),
        "seed": seed,
        "threads": threads,
    }
    _write_json(out / "resolved_config.json", resolved)

    county_df = load_county_year(county_path)
    law_df = load_law_dates(law_path)
    panel, attrition = build_panel(
        county_df,
        law_df,
        stratum=stratum,
        outcome=outcome,
        exposure_laws=exposure_laws,
        clip_to_window_start=clip,
        loo_summaries=loo,
    )
    _write_table(out / "panel.csv", panel)
    report = attrition.to_dict()
    if longitudinal:
        long_panel, long_attrition = build_longitudinal_panel(
            county_df,
            law_df,
            exposure_years,
            stratum=stratum,
            outcome=outcome,
            exposure_laws=exposure_laws,
        )
        _write_table(out / "longitudinal.csv", long_panel)
        report["longitudinal"] = long_attrition.to_dict()
    _write_json(out / "attrition.json", report)
    return 0


def cmd_diagnose(args):
    config = _load_config(args.config)
    _check_keys(config, "diagnose")
    out = _resolve_out(args, config)
    seed = _resolve_seed(args, config)
    threads = _resolve_threads(args, config)

    law_path = str(Path(_require(config, "law_dates", "diagnose")).resolve())
    year_start = int(_require(config, "year_start", "diagnose"))
    year_end = int(_require(config, "year_end", "diagnose"))
    if year_end < year_start:
        raise ConfigError("year_end must not precede year_start")
    law_codes = list(config.get("law_codes", LAW_CODES))
    method = config.get("method", "pearson")
    threshold = float(config.get("threshold", 0.7))
    per_year = bool(config.get("per_year", False))
    stratum = config.get("stratum", "")

    resolved = {
        "law_dates": law_path,
        "year_start": year_start,
        "year_end": year_end,
        "law_codes": law_codes,
        "method": method,
        "threshold": threshold,
        "per_year": per_year,
        "stratum": stratum,
        "out": str(out),
        "seed": seed,
        "threads": threads,
    }
    _write_json(out / "resolved_config.json", resolved)

    law_df = load_law_dates(law_path)
    years = range(year_start, year_end + 1)
    table = state_year_law_table(law_df, years, law_codes)
    matrix = cooccurrence_matrix(table, law_codes, stratum=stratum, method=method)
    _write_frame(out / "heatmap.csv", matrix.to_long_frame())
    if per_year:
        frames = []
        for year, m in cooccurrence_by_year(table, law_codes, stratum, method).items():
            frame = m.to_long_frame()
            frame.insert(0, "year", year)
            frames.append(frame)
        _write_frame(out / "heatmap_by_year.csv", pd.concat(frames, ignore_index=True))
    explained, skipped = variance_explained_table(table, law_codes)
    bundles = bundle_recommendation(matrix, threshold=threshold)
    _write_json(
        out / "entanglement.json",
        {
            "variance_explained": {code: ve.to_dict() for code, ve in explained.items()},
            "undefined": list(matrix.undefined),
            "skipped": list(skipped),
            "bundles": bundles.to_dict(),
            "method": method,
            "years": [year_start, year_end],
            "stratum": stratum,
        },
    )
    return 0


def cmd_estimate(args):
    config = _load_config(args.config)
    _check_keys(config, "estimate")
    out = _resolve_out(args, config)
    seed = _resolve_seed(args, config)
    threads = _resolve_threads(args, config)

    panel_path = str(Path(_require(config, "panel", "estimate")).resolve())
    stratum = config.get("stratum", "LATE")
    outcome_label = config.get("outcome", "outcome")
    estimand = config.get("estimand", "point_shift")
    if estimand not in ("point_shift", "longitudinal_delay"):
        raise ConfigError(
            f"estimand must be point_shift or longitudinal_delay, got {estimand!r}"
        )
    folds = int(config.get("folds", 5))
    targeting = config.get("targeting", "tmle")
    ratio_bounds = tuple(float(v) for v in config.get("ratio_bounds", (0.01, 100.0)))
    outcome_bound = float(config.get("outcome_bound", 5e-4))
    warn_threshold = float(config.get("positivity_warn_threshold", 0.02))
    strict = bool(args.strict_positivity or config.get("strict_positivity", False))
    write_ic = bool(config.get("write_ic", False))
    alpha = float(config.get("alpha", 0.05))
    outcome_learner, outcome_echo = _learner_from_config(
        config.get("outcome_learner"), "outcome_learner"
    )
    ratio_learner, ratio_echo = _learner_from_config(
        config.get("ratio_learner"), "ratio_learner"
    )

    if estimand == "point_shift":
        panel = PanelTable.from_csv(panel_path, stratum=stratum)
        policy, policy_echo = _policy_from_config(
            config.get("policy"), estimand, default_a_max=panel.exposure_max
        )
        estimator = PointShiftTMLE(
            policy=policy,
            outcome_learner=outcome_learner,
            ratio_learner=ratio_learner,
            folds=folds,
            seed=seed,
            targeting=targeting,
            outcome_bound=outcome_bound,
            ratio_bounds=ratio_bounds,
            positivity_warn_threshold=warn_threshold,
            strict_positivity=strict,
            threads=threads,
        )
    else:
        panel = LongitudinalPanel.from_csv(
            panel_path,
            exposure_cols=config.get("exposure_cols"),
            tv_covariates=(
                {int(k): list(v) for k, v in config["tv_covariates"].items()}
                if config.get("tv_covariates")
                else None
            ),
            stratum=stratum,
        )
        policy, policy_echo = _policy_from_config(config.get("policy"), estimand)
        estimator = LongitudinalDelayTMLE(
            policy=policy,
            outcome_learner=outcome_learner,
            ratio_learner=ratio_learner,
            folds=folds,
            seed=seed,
            targeting=targeting,
            outcome_bound=outcome_bound,
            ratio_bounds=ratio_bounds,
            positivity_warn_threshold=warn_threshold,
            strict_positivity=strict,
            threads=threads,
        )

    resolved = {
        "panel": panel_path,
        "stratum": stratum,
        "outcome": outcome_label,
        "estimand": estimand,
        "policy": policy_echo,
        "folds": folds,
        "targeting": targeting,
        "outcome_learner": outcome_echo,
        "ratio_learner": ratio_echo,
        "ratio_bounds": list(ratio_bounds),
        "outcome_bound": outcome_bound,
        "positivity_warn_threshold": warn_threshold,
        "strict_positivity": strict,
        "write_ic": write_ic,
        "alpha": alpha,
        "exposure_cols": config.get("exposure_cols"),
        "tv_covariates": config.get("tv_covariates"),
        "out": str(out),
        "seed": seed,
        "threads": threads,
    }
    _write_json(out / "resolved_config.json", resolved)

    estimator.fit(panel)
    report = estimator.report_

    clusters = panel.cluster_ids
    psi_var = cluster_robust_se(estimator.ic_psi_, clusters)
    con_var = cluster_robust_se(estimator.ic_contrast_, clusters)
    psi_ci = confidence_interval(estimator.psi_hat_, psi_var.se, alpha)
    con_ci = confidence_interval(estimator.contrast_hat_, con_var.se, alpha)

    inference = {
        "alpha": alpha,
        "psi": {
            **psi_var.to_dict(),
            "estimate": estimator.psi_hat_,
            "ci_low": psi_ci[0],
            "ci_high": psi_ci[1],
        },
        "contrast": {
            **con_var.to_dict(),
            "estimate": estimator.contrast_hat_,
            "ci_low": con_ci[0],
            "ci_high": con_ci[1],
        },
    }
    _write_json(
        out / "results.json",
        {
            "report": report.to_dict(),
            "inference": inference,
            "resolved_config": resolved,
        },
    )
    row = {
        "stratum": stratum,
        "outcome": outcome_label,
        "estimand": estimand,
        "psi_hat": estimator.psi_hat_,
        "contrast_hat": estimator.contrast_hat_,
        "se": con_var.se,
        "ci_low": con_ci[0],
        "ci_high": con_ci[1],
        "n": report.n,
        "n_clusters": report.n_clusters,
    }
    _write_frame(out / "results.csv", results_table([row]))
    if write_ic:
        ic_frame = pd.DataFrame(
            {
                "unit_id": panel.data["unit_id"],
                "ic_psi": estimator.ic_psi_,
                "ic_contrast": estimator.ic_contrast_,
            }
        )
        _write_frame(out / "ic.csv", ic_frame)
    return 0


def cmd_simulate(args):
    config = _load_config(args.config)
    _check_keys(config, "simulate")
    out = _resolve_out(args, config)
    threads = _resolve_threads(args, config)

    kind = config.get("kind", "point")
    if kind not in ("point", "longitudinal"):
        raise ConfigError(f"kind must be point or longitudinal, got {kind!r}")
    dgp = dict(config.get("dgp") or {})
    seed = _resolve_seed(args, config, default=int(dgp.get("seed", 0)))
    dgp["seed"] = seed

    if kind == "point":
        spec = DgpSpec.from_dict(dgp)
        policy, policy_echo = _policy_from_config(
            config.get("policy"), "point", default_a_max=spec.a_max
        )
        mc_draws = int(config.get("mc_draws", 1_000_000))
        resolved = {
            "kind": kind,
            "dgp": spec.to_dict(),
            "policy": policy_echo,
            "mc_draws": mc_draws,
            "path_cap": None,
            "out": str(out),
            "seed": seed,
            "threads": threads,
        }
        _write_json(out / "resolved_config.json", resolved)
        table = simulate(spec)
        _write_table(out / "panel.csv", table)
        truth = true_shift_contrast(spec, policy, mc_draws=mc_draws, threads=threads)
    else:
        spec = LongitudinalDgpSpec.from_dict(dgp)
        policy, policy_echo = _policy_from_config(config.get("policy"), "longitudinal_delay")
        mc_draws = int(config.get("mc_draws", 200_000))
        path_cap = int(config.get("path_cap", 4096))
        resolved = {
            "kind": kind,
            "dgp": spec.to_dict(),
            "policy": policy_echo,
            "mc_draws": mc_draws,
            "path_cap": path_cap,
            "out": str(out),
            "seed": seed,
            "threads": threads,
        }
        _write_json(out / "resolved_config.json", resolved)
        table = simulate(spec)
        _write_table(out / "longitudinal.csv", table)
        truth = true_longitudinal_contrast(
            spec, policy, path_cap=path_cap, mc_draws=mc_draws, threads=threads
        )
    _write_json(
        out / "truth.json",
        {
            "true_contrast": truth.true_contrast,
            "mc_se": truth.mc_se,
            "oracle_method": truth.method,
            "draws": truth.draws,
        },
    )
    return 0


HANDLERS = {
    "ingest": cmd_ingest,
    "diagnose": cmd_diagnose,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="policyshift",
        description="Policy-shift effect estimation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("ingest", "build analysis panels from raw county-year and law tables"),
        ("diagnose", "law co-occurrence and entanglement diagnostics"),
        ("estimate", "run a policy-shift estimator with cluster-robust inference"),
        ("simulate", "write synthetic fixtures with oracle truth"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help=f"worker threads (falls back to ${THREADS_ENV}, then config)",
        )
        p.add_argument(
            "--strict-positivity",
            action="store_true",
            help="abort (exit 3) when positivity diagnostics warn",
        )
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except PositivityError as exc:
        print(f"positivity abort: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, OSError, yaml.YAMLError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
