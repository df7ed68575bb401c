"""
Vote-Share Toolkit — Pipeline Orchestrator

Runs one study stage per subcommand (ingest, train, score, model, sweep,
geo, synth, report), writes machine-readable artifacts plus a run manifest
to the output directory, and prints a short human summary.

Usage:
    python -m scripts.pipeline model --config .study/config.json
"""

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

from scripts import __version__
from scripts.allegiance_classifier import (
    evaluate,
    load_labeled_csv,
    load_model,
    save_model,
    score_records,
    split_train_test,
    train_nb,
)
from scripts.bootstrap_stats import alt_grid_sweep, bootstrap_share
from scripts.corpus_ingest import WINDOW_END, WINDOW_START, ingest_corpus, load_query_specs, monthly_partition
from scripts.election_models import (
    MODEL_IDS,
    AltBounds,
    allegiance_distribution,
    prepare_records,
    read_records,
    run_model,
    validate_records,
    write_records,
)
from scripts.errors import ConfigError, InputError, UndefinedEstimateError, VoteShareError
from scripts.geo_analysis import (
    CENSUS_PATH,
    STATES,
    aggregate_users_by_state,
    census_distribution,
    load_census,
    population_weighted_resample,
    representativeness_report,
    total_variation,
)
from scripts.parties import PARTY_GROUPS
from scripts.synthetic_corpus import GeneratorConfig, distortion_suite, generate_corpus, write_jsonl

logger = logging.getLogger(__name__)

CONFIG_PATH = ".study/config.json"
REFERENCE_PATH = Path(__file__).parent / "data" / "reference_constants.json"
OUTPUT_ENV = "VOTESHARE_OUTPUT_DIR"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_DEGENERATE = 4

DEFAULT_CONFIG = {
    "inputs": [],
    "queries": ".study/queries.json",
    "window_start": WINDOW_START.isoformat(),
    "window_end": WINDOW_END.isoformat(),
    "language": "es",
    "training": {},
    "models": list(MODEL_IDS),
    "months": None,
    "alt_bounds": [0.6, 1.0],
    "sweep": {"x_low": "0.1:0.7:0.1", "x_upp": "0.7:1.0:0.1"},
    "bootstrap": {"n_resamples": 1000, "seed": 0},
    "alpha": 1.0,
    "ngram_max": 1,
    "train_fraction": 0.85,
    "split_seed": 0,
    "census": None,
    "panel_size": 1000,
    "panel_reps": 1000,
    "reference_constants": None,
    "output_dir": None,
    "workers": 1,
}


@dataclass
class RunManifest:
    command: str
    version: str
    config: dict
    inputs: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "config": self.config,
            "inputs": self.inputs,
            "counts": self.counts,
            "timings": self.timings,
        }


# =============================================================================
# Configuration
# =============================================================================

def load_config(config_path: str = CONFIG_PATH) -> dict:
    """Load the study configuration, layered over the built-in defaults."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    config["output_dir"] = os.environ.get(OUTPUT_ENV, "voteshare-output")
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            loaded = json.load(f)
    except FileNotFoundError:
        print(f"⚠️ Config file not found at {config_path}, using defaults")
        return config
    except json.JSONDecodeError as e:
        raise ConfigError(f"{config_path} is not valid JSON: {e}") from e
    if not isinstance(loaded, dict):
        raise ConfigError(f"{config_path} must hold a JSON object")

    unknown = sorted(set(loaded) - set(DEFAULT_CONFIG))
    if unknown:
        logger.warning("Ignoring unknown config keys: %s", ", ".join(unknown))
    for key, value in loaded.items():
        if key in ("bootstrap", "sweep") and isinstance(value, dict):
            config[key].update(value)
        elif key in DEFAULT_CONFIG:
            config[key] = value
    return config


def apply_overrides(config: dict, args: argparse.Namespace) -> dict:
    """Explicit command-line flags win over the config file."""
    config = copy.deepcopy(config)
    if getattr(args, "output_dir", None):
        config["output_dir"] = args.output_dir
    if getattr(args, "seed", None) is not None:
        config["bootstrap"]["seed"] = args.seed
        config["split_seed"] = args.seed
    if getattr(args, "months", None):
        config["months"] = [m.strip() for m in args.months.split(",") if m.strip()]
    if getattr(args, "models", None):
        config["models"] = [m.strip().upper() for m in args.models.split(",") if m.strip()]
    if getattr(args, "x_low", None):
        config["sweep"]["x_low"] = args.x_low
    if getattr(args, "x_upp", None):
        config["sweep"]["x_upp"] = args.x_upp
    if getattr(args, "n_resamples", None) is not None:
        config["bootstrap"]["n_resamples"] = args.n_resamples
    if getattr(args, "workers", None) is not None:
        config["workers"] = args.workers
    validate_config(config)
    return config


def validate_config(config: dict) -> None:
    unknown = [m for m in config["models"] if m not in MODEL_IDS]
    if unknown:
        raise ConfigError(f"Unknown model ids: {', '.join(unknown)}")
    if not config["models"]:
        raise ConfigError("No models selected")
    alt_bounds(config)
    if config["bootstrap"]["n_resamples"] < 0 or config["bootstrap"]["seed"] < 0:
        raise ConfigError("bootstrap n_resamples and seed must be >= 0")
    if not 0.0 < config["train_fraction"] < 1.0:
        raise ConfigError("train_fraction must lie strictly between 0 and 1")
    if config["alpha"] <= 0:
        raise ConfigError("alpha must be > 0")
    if config["ngram_max"] < 1 or config["workers"] < 1:
        raise ConfigError("ngram_max and workers must be >= 1")
    if config["panel_size"] < 1 or config["panel_reps"] < 1:
        raise ConfigError("panel_size and panel_reps must be >= 1")


def alt_bounds(config: dict) -> AltBounds:
    try:
        x_low, x_upp = config["alt_bounds"]
        return AltBounds(float(x_low), float(x_upp))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid alt_bounds {config['alt_bounds']!r}: {e}") from e


def parse_grid(spec) -> list[float]:
    """Grid from 'start:stop:step' (stop inclusive), a comma list, or a JSON list."""
    if isinstance(spec, (list, tuple)):
        values = [float(v) for v in spec]
    elif isinstance(spec, str) and ":" in spec:
        try:
            start, stop, step = (float(part) for part in spec.split(":"))
        except ValueError as e:
            raise ConfigError(f"Grid {spec!r} is not start:stop:step") from e
        if step <= 0 or stop < start:
            raise ConfigError(f"Grid {spec!r} needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 10) for i in range(count)]
    elif isinstance(spec, str):
        try:
            values = [float(v) for v in spec.split(",") if v.strip()]
        except ValueError as e:
            raise ConfigError(f"Grid {spec!r} is not a list of numbers") from e
    else:
        raise ConfigError(f"Unsupported grid spec {spec!r}")
    if not values:
        raise ConfigError("Grid is empty")
    return values


def parse_window(config: dict) -> tuple[datetime, datetime]:
    try:
        start = datetime.fromisoformat(str(config["window_start"]).replace("Z", "+00:00"))
        end = datetime.fromisoformat(str(config["window_end"]).replace("Z", "+00:00"))
    except ValueError as e:
        raise ConfigError(f"Invalid date window: {e}") from e
    if start.tzinfo is None or end.tzinfo is None:
        raise ConfigError("Window bounds need a UTC offset")
    if start >= end:
        raise ConfigError("window_start must precede window_end")
    return start, end


def load_reference_constants(path=None) -> dict:
    path = Path(path or REFERENCE_PATH)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read reference constants {path}: {e}") from e


# =============================================================================
# Artifacts
# =============================================================================

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def read_json(path: Path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _result(passed: bool, detail: str, warn: bool = False, **extra) -> dict:
    emoji = "⚠️" if passed and warn else ("✅" if passed else "❌")
    return {
        "passed": passed,
        "status": f"{emoji} {detail}",
        "status_emoji": emoji,
        "detail": detail,
        **extra,
    }


def _output_dir(config: dict) -> Path:
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _scored_table(config: dict, records_path=None) -> tuple[pd.DataFrame, Path]:
    path = _require(records_path or Path(config["output_dir"]) / "scored_records.csv", "Scored records")
    table = read_records(path)
    if table.empty:
        raise InputError(f"{path} holds 0 records")
    return table, path


def _months(table: pd.DataFrame, config: dict) -> dict:
    buckets = monthly_partition(table)
    wanted = config.get("months")
    if wanted:
        missing = [m for m in wanted if m not in buckets]
        if missing:
            logger.warning("No records for months: %s", ", ".join(missing))
        buckets = {m: b for m, b in buckets.items() if m in wanted}
    if not buckets:
        raise InputError("No records fall in the selected months")
    return buckets


# =============================================================================
# Commands
# =============================================================================

def cmd_ingest(config: dict, inputs=None, queries=None) -> dict:
    paths = [_require(p, "Input file") for p in (inputs or config["inputs"])]
    if not paths:
        raise ConfigError("No input files configured")
    specs = load_query_specs(_require(queries or config["queries"], "Query specs"))
    start, end = parse_window(config)

    table, stats = ingest_corpus(paths, specs, start, end, config["language"], workers=config["workers"])
    out = _output_dir(config)
    write_json(out / "corpus_stats.json", stats.to_dict())
    if table.empty:
        raise InputError("0 records survived ingestion")
    write_records(table, out / "records.csv", extra_columns=("text",))

    detail = (f"{len(table)} party records from {stats.total_tweets} tweets "
              f"({stats.unique_users} users, {stats.geo_tweets} geolocated, {stats.rejected} rejected)")
    return _result(True, detail, warn=stats.rejected > 0, stats=stats.to_dict(),
                   inputs=[str(p) for p in paths] + [str(queries or config["queries"])],
                   counts=stats.stage_counts)


def cmd_train(config: dict, training=None) -> dict:
    training = training or config["training"]
    if not training:
        raise ConfigError("No training sets configured")
    unknown = sorted(set(training) - set(PARTY_GROUPS))
    if unknown:
        raise ConfigError(f"Unknown party groups: {', '.join(unknown)}")

    out = _output_dir(config)
    model_dir = out / "models"
    model_dir.mkdir(exist_ok=True)
    rows, failures = [], []
    for group in PARTY_GROUPS:
        if group not in training:
            continue
        path = _require(training[group], f"Training set for {group}")
        try:
            examples = load_labeled_csv(path)
            train, test = split_train_test(examples, config["train_fraction"], config["split_seed"])
            model = train_nb(train, alpha=config["alpha"], ngram_range=(1, config["ngram_max"]))
            metrics = evaluate(model, test)
        except InputError as e:
            print(f"  ❌ {group}: {e}")
            failures.append(group)
            continue
        save_model(model, model_dir / f"{group}.json")
        rows.append({
            "group": group,
            "train_n": sum(e.label == "n" for e in train),
            "train_p": sum(e.label == "p" for e in train),
            "test_n": metrics.support["n"],
            "test_p": metrics.support["p"],
            "f1_n": metrics.f1_n,
            "f1_p": metrics.f1_p,
            "roc_auc": metrics.roc_auc,
            "accuracy": metrics.accuracy,
        })
        print(f"  ✅ {group}: F1 n {metrics.f1_n:.2f} / p {metrics.f1_p:.2f}, AUC {metrics.roc_auc:.2f}")

    write_json(out / "training_metrics.json", rows)
    pd.DataFrame(rows).to_csv(out / "training_metrics.csv", index=False)
    if not rows:
        raise InputError("No party group could be trained")
    detail = f"{len(rows)} party-group models trained" + (f", {len(failures)} failed" if failures else "")
    return _result(not failures, detail, metrics=rows, inputs=[str(training[g]) for g in training],
                   counts={"models": len(rows), "failed": len(failures)},
                   exit_code=EXIT_INPUT if failures else EXIT_OK)


def cmd_score(config: dict, records_path=None, models_dir=None) -> dict:
    out = _output_dir(config)
    path = _require(records_path or out / "records.csv", "Ingested records")
    table = read_records(path)
    if table.empty:
        raise InputError(f"{path} holds 0 records")
    models_dir = _require(models_dir or out / "models", "Model directory")
    models = {p.stem: load_model(p) for p in sorted(Path(models_dir).glob("*.json"))}

    scored = score_records(table, models)
    validate_records(scored, require_scores=True)
    write_records(scored, out / "scored_records.csv")
    detail = f"{len(scored)} records scored with {len(models)} models (mean A {scored['allegiance'].mean():.3f})"
    return _result(True, detail, inputs=[str(path)] + [str(Path(models_dir) / f"{g}.json") for g in models],
                   counts={"records": len(scored)})


def _estimate_row(prep, model_id: str, month: str, bounds: AltBounds, config: dict) -> dict:
    n_resamples = config["bootstrap"]["n_resamples"]
    seed = config["bootstrap"]["seed"]
    row = {
        "model": model_id, "month": month, "share": None, "median": None, "q1": None, "q3": None,
        "precision_pp": None, "n_records": 0, "n_users": 0, "n_resamples": n_resamples,
        "n_undefined": 0, "seed": seed, "status": "ok", "detail": "",
    }
    try:
        estimate = run_model(model_id, prep, bounds)
        row.update(share=estimate.ruling_share, n_records=estimate.n_records, n_users=estimate.n_users)
        if n_resamples > 0:
            result = bootstrap_share(prep, model_id, n_resamples, seed, bounds=bounds, month=month,
                                     workers=config["workers"])
            row.update(median=result.median, q1=result.q1, q3=result.q3,
                       precision_pp=result.precision_pp, n_undefined=result.n_undefined)
    except UndefinedEstimateError as e:
        row.update(status="undefined", detail=str(e))
    except InputError as e:
        row.update(status="error", detail=str(e))
    return row


def cmd_model(config: dict, records_path=None) -> dict:
    table, path = _scored_table(config, records_path)
    bounds = alt_bounds(config)
    references = load_reference_constants(config["reference_constants"])

    rows = []
    distributions = []
    for month, bucket in _months(table, config).items():
        prep = prepare_records(bucket, month)
        for model_id in config["models"]:
            print(f"  🔍 {month} {model_id}")
            rows.append(_estimate_row(prep, model_id, month, bounds, config))
        try:
            distributions.extend(d.to_dict() for d in allegiance_distribution(prep, month))
        except InputError as e:
            logger.warning("%s: allegiance distribution skipped (%s)", month, e)

    out = _output_dir(config)
    write_json(out / "model_estimates.json", {"reference": references, "estimates": rows})
    pd.DataFrame(rows).to_csv(out / "model_estimates.csv", index=False)
    write_json(out / "allegiance_distribution.json", distributions)

    defined = [r for r in rows if r["share"] is not None]
    if not defined:
        raise UndefinedEstimateError("No model produced a defined estimate")
    detail = f"{len(defined)}/{len(rows)} estimates defined"
    return _result(True, detail, warn=len(defined) < len(rows), estimates=rows, reference=references,
                   distributions=distributions,
                   inputs=[str(path)], counts={"estimates": len(rows), "defined": len(defined)})


def cmd_sweep(config: dict, records_path=None) -> dict:
    table, path = _scored_table(config, records_path)
    lows = parse_grid(config["sweep"]["x_low"])
    upps = parse_grid(config["sweep"]["x_upp"])

    rows = []
    for month, bucket in _months(table, config).items():
        print(f"  🔍 {month}: {len(lows)} x {len(upps)} ALT cells")
        cells = alt_grid_sweep(bucket, lows, upps, config["bootstrap"]["n_resamples"],
                               config["bootstrap"]["seed"], month=month, workers=config["workers"])
        rows.extend({"month": month, **cell.to_dict()} for cell in cells)

    out = _output_dir(config)
    write_json(out / "alt_sweep.json", rows)
    pd.DataFrame(rows).to_csv(out / "alt_sweep.csv", index=False)
    defined = [r for r in rows if r["share"] is not None]
    volumes = [r["n_users"] for r in defined]
    detail = (f"{len(defined)}/{len(rows)} cells defined"
              + (f", volume {min(volumes)}-{max(volumes)} users" if volumes else ""))
    return _result(bool(defined), detail, cells=rows, inputs=[str(path)],
                   counts={"cells": len(rows), "defined": len(defined)})


def cmd_geo(config: dict, records_path=None) -> dict:
    table, path = _scored_table(config, records_path)
    census_path = _require(config["census"] or CENSUS_PATH, "Census table")
    census = load_census(census_path)
    observed = aggregate_users_by_state(table)
    report = representativeness_report(census, observed)
    target = census_distribution(census, "population")
    bounds = alt_bounds(config)
    seed = config["bootstrap"]["seed"]

    resampled = []
    geo_models = [m for m in config["models"] if m.startswith("G")]
    for month, bucket in _months(table, config).items():
        for model_id in geo_models:
            row = {"model": model_id, "month": month, "status": "ok", "detail": ""}
            try:
                row["uncorrected_share"] = run_model(model_id, bucket, bounds, month=month).ruling_share
                result = population_weighted_resample(bucket, target, config["panel_size"], config["panel_reps"],
                                                      model_id, seed, bounds, month)
                row.update(result.to_dict())
                row["state_tv_distance"] = total_variation(result.state_frequencies, target.percentages)
            except (UndefinedEstimateError, InputError) as e:
                row.update(status="undefined", detail=str(e))
            resampled.append(row)

    out = _output_dir(config)
    write_json(out / "geo_report.json", {**report.to_dict(), "resampled": resampled})
    internet = report.distributions["internet"].percentages
    pd.DataFrame([
        {
            "state": s,
            "name": STATES[s],
            "population_pct": target.percentages[s],
            "internet_pct": internet[s],
            "twitter_pct": observed.percentages[s],
            "residual_internet": report.residuals["internet"][s],
            "residual_twitter": report.residuals["twitter"][s],
        }
        for s in target.states
    ]).to_csv(out / "geo_distribution.csv", index=False)

    r = report.correlations["population_twitter"].r
    detail = (f"r(population, twitter) = {r:.2f}; "
              f"{sum(row['status'] == 'ok' for row in resampled)}/{len(resampled)} panel estimates")
    states_observed = sum(1 for v in observed.percentages.values() if v > 0)
    return _result(True, detail, report=report.to_dict(), resampled=resampled,
                   inputs=[str(path), str(census_path)],
                   counts={"states_observed": states_observed, "panels": len(resampled)})


def cmd_synth(config: dict, generator_config=None, distortions: bool = False, seed: int | None = None) -> dict:
    cfg = GeneratorConfig.load(generator_config) if generator_config else GeneratorConfig()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    corpora = {"base": generate_corpus(cfg)}
    if distortions:
        corpora.update(distortion_suite(cfg))

    out = _output_dir(config)
    summary = {}
    for name, (table, truth) in corpora.items():
        suffix = "" if name == "base" else f"_{name}"
        write_records(table, out / f"synthetic_records{suffix}.csv", extra_columns=("text",))
        if cfg.emit_text:
            write_jsonl(table, out / f"synthetic_tweets{suffix}.jsonl")
        summary[name] = truth.to_dict()
    write_json(out / "ground_truth.json", {"config": cfg.to_dict(), "corpora": summary})

    base = summary["base"]
    detail = f"{base['n_records']} records from {base['n_users']} users, true share {base['true_share']:.4f}"
    return _result(True, detail, truth=summary,
                   inputs=[str(generator_config)] if generator_config else [],
                   counts={name: s["n_records"] for name, s in summary.items()})


def cmd_report(config: dict) -> dict:
    out = _output_dir(config)
    artifacts = {}
    for name in ("corpus_stats", "training_metrics", "model_estimates", "allegiance_distribution",
                 "alt_sweep", "geo_report"):
        path = out / f"{name}.json"
        if path.exists():
            artifacts[name] = read_json(path)
    if not artifacts:
        raise InputError(f"No study artifacts found in {out}")
    references = load_reference_constants(config["reference_constants"])
    report = generate_markdown_report(artifacts, references)
    (out / "report.md").write_text(report, encoding="utf-8")
    return _result(True, f"report.md built from {len(artifacts)} artifacts", report=report,
                   inputs=[str(out / f"{name}.json") for name in artifacts], counts={"artifacts": len(artifacts)})


# =============================================================================
# Report
# =============================================================================

def _pct(value) -> str:
    return "—" if value is None else f"{value * 100:.1f}"


def generate_markdown_report(artifacts: dict, references: dict) -> str:
    """Markdown summary of whichever study artifacts exist."""
    official = references.get("official_ruling_share_pct")
    poll = references.get("poll_ruling_share_pct")
    poll_pp = references.get("poll_precision_pp")
    lines = [
        "## 🗳️ Vote-Share Study Report",
        "",
        f"**Reference lines:** official ruling share {official}% | "
        f"poll aggregate {poll}% (± {poll_pp} pp)",
    ]

    stats = artifacts.get("corpus_stats")
    if stats:
        lines.extend([
            "",
            "### 📥 Corpus",
            "",
            "| Tweets | Users | Geo tweets | Geo users | Retweets | Rejected |",
            "|---|---|---|---|---|---|",
            f"| {stats['total_tweets']} | {stats['unique_users']} | {stats['geo_tweets']} "
            f"| {stats['geo_users']} | {stats['retweets']} | {stats['rejected']} |",
        ])

    metrics = artifacts.get("training_metrics")
    if metrics:
        lines.extend([
            "",
            "### 🧠 Allegiance classifier",
            "",
            "| Party group | Train n | Train p | Test n | Test p | F1 n | F1 p | ROC AUC |",
            "|---|---|---|---|---|---|---|---|",
        ])
        for row in metrics:
            lines.append(
                f"| {row['group']} | {row['train_n']} | {row['train_p']} | {row['test_n']} | {row['test_p']} "
                f"| {row['f1_n']:.2f} | {row['f1_p']:.2f} | {row['roc_auc']:.2f} |"
            )

    estimates = artifacts.get("model_estimates")
    if estimates:
        lines.extend([
            "",
            "### 📊 Model estimates (ruling share, %)",
            "",
            "| Month | Model | Share | Median | Q1 | Q3 | Precision (pp) | vs official (pp) | Status |",
            "|---|---|---|---|---|---|---|---|---|",
        ])
        for row in estimates["estimates"]:
            gap = "—" if row["share"] is None or official is None else f"{row['share'] * 100 - official:+.1f}"
            precision = "—" if row["precision_pp"] is None else f"{row['precision_pp']:.1f}"
            emoji = "✅" if row["status"] == "ok" else "⚠️"
            lines.append(
                f"| {row['month']} | {row['model']} | {_pct(row['share'])} | {_pct(row['median'])} "
                f"| {_pct(row['q1'])} | {_pct(row['q3'])} | {precision} | {gap} | {emoji} |"
            )

    distributions = artifacts.get("allegiance_distribution")
    if distributions:
        lines.extend([
            "",
            "### 🎭 Allegiance distribution",
            "",
            "| Month | Coalition | Subset | n | Mean | Q1 | Median | Q3 | Below 0.5 |",
            "|---|---|---|---|---|---|---|---|---|",
        ])
        for row in distributions:
            cells = ["—" if row[key] is None else f"{row[key]:.2f}" for key in ("mean", "q1", "median", "q3")]
            below = "—" if row["below_half"] is None else f"{row['below_half'] * 100:.0f}%"
            lines.append(f"| {row['month']} | {row['coalition']} | {row['subset']} | {row['n']} "
                         f"| {' | '.join(cells)} | {below} |")

    sweep = artifacts.get("alt_sweep")
    if sweep:
        defined = [c for c in sweep if c["share"] is not None]
        lines.extend(["", "### 🎚️ ALT bounds sweep", ""])
        if defined:
            best = min(defined, key=lambda c: abs(c["share"] * 100 - official) if official is not None else 0)
            volumes = [c["n_users"] for c in defined]
            lines.append(f"- {len(defined)}/{len(sweep)} cells defined; volume {min(volumes)} to {max(volumes)} users")
            lines.append(f"- Closest to official: x_low {best['x_low']}, x_upp {best['x_upp']} "
                         f"({_pct(best['share'])}%, {best['n_users']} users)")
        else:
            lines.append("- No cell produced a defined estimate")

    geo = artifacts.get("geo_report")
    if geo:
        lines.extend([
            "",
            "### 🗺️ Geographic representativeness",
            "",
            "| Pair | r | r (Greater Mexico City merged) |",
            "|---|---|---|",
        ])
        for key, corr in geo["correlations"].items():
            merged = geo["merged_correlations"].get(key, {})
            lines.append(f"| {key.replace('_', ' vs ')} | {corr['r']:.2f} | {merged.get('r', float('nan')):.2f} |")
        outside = geo.get("outside_gmc_max_residual", {})
        lines.append("")
        lines.append(f"Largest residual outside Greater Mexico City: internet {outside.get('internet', 0):.1f} pp, "
                     f"Twitter {outside.get('twitter', 0):.1f} pp")
        for row in geo.get("resampled", []):
            if row["status"] == "ok":
                lines.append(f"- {row['month']} {row['model']}: {_pct(row.get('uncorrected_share'))}% → "
                             f"{_pct(row['median'])}% after population-matched resampling")

    lines.extend(["", "---", f"*Vote-Share Toolkit v{__version__}*", ""])
    return "\n".join(lines)


# =============================================================================
# CLI
# =============================================================================

def _parse_training(pairs) -> dict | None:
    if not pairs:
        return None
    training = {}
    for pair in pairs:
        group, sep, path = pair.partition("=")
        if not sep:
            raise ConfigError(f"--training expects GROUP=PATH, got {pair!r}")
        training[group] = path
    return training


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=CONFIG_PATH, help="Path to the study config")
    common.add_argument("--output-dir", default=None, help=f"Output directory (default ${OUTPUT_ENV})")
    common.add_argument("--seed", type=int, default=None, help="Seed for bootstrap, splits and synthesis")
    common.add_argument("--months", default=None, help="Comma-separated YYYY-MM months")
    common.add_argument("--models", default=None, help="Comma-separated model ids")
    common.add_argument("--x-low", default=None, help="x_low grid as start:stop:step")
    common.add_argument("--x-upp", default=None, help="x_upp grid as start:stop:step")
    common.add_argument("--n-resamples", type=int, default=None, help="Bootstrap resamples")
    common.add_argument("--workers", type=int, default=None, help="Parallel workers")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(prog="voteshare", description="Tweet-based vote-share study pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", parents=[common], help="Filter and party-match archived tweets")
    ingest.add_argument("--input", action="append", default=None, help="JSON-lines file (repeatable)")
    ingest.add_argument("--queries", default=None, help="Query spec file or directory")

    train = sub.add_parser("train", parents=[common], help="Train per-party-group classifiers")
    train.add_argument("--training", action="append", default=None, help="GROUP=CSV (repeatable)")

    score = sub.add_parser("score", parents=[common], help="Score ingested records")
    score.add_argument("--records", default=None, help="Ingested records CSV")
    score.add_argument("--models-dir", default=None, help="Directory of model artifacts")

    for name, text in (("model", "Run the vote-share models with bootstrap"),
                       ("sweep", "Sweep ALT bounds"),
                       ("geo", "Geographic representativeness and panel resampling")):
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.add_argument("--records", default=None, help="Scored records CSV")

    synth = sub.add_parser("synth", parents=[common], help="Generate a synthetic corpus")
    synth.add_argument("--generator-config", default=None, help="Flat JSON generator config")
    synth.add_argument("--distortions", action="store_true", help="Also emit the distortion variants")

    sub.add_parser("report", parents=[common], help="Render report.md from artifacts")
    return parser


def run_command(args: argparse.Namespace, config: dict) -> dict:
    command = args.command
    if command == "ingest":
        return cmd_ingest(config, args.input, args.queries)
    if command == "train":
        return cmd_train(config, _parse_training(args.training))
    if command == "score":
        return cmd_score(config, args.records, args.models_dir)
    if command == "model":
        return cmd_model(config, args.records)
    if command == "sweep":
        return cmd_sweep(config, args.records)
    if command == "geo":
        return cmd_geo(config, args.records)
    if command == "synth":
        return cmd_synth(config, args.generator_config, args.distortions, args.seed)
    return cmd_report(config)


def write_manifest(config: dict, command: str, result: dict, elapsed: float) -> Path:
    inputs = {}
    for path in result.get("inputs", []):
        p = Path(path)
        if p.is_file():
            inputs[str(p)] = file_digest(p)
    manifest = RunManifest(
        command=command,
        version=__version__,
        config=config,
        inputs=inputs,
        counts=result.get("counts", {}),
        timings={"total_seconds": round(elapsed, 3)},
    )
    path = Path(config["output_dir"]) / f"manifest_{command}.json"
    write_json(path, manifest.to_dict())
    return path


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = apply_overrides(load_config(args.config), args)
        print(f"🔍 Running {args.command}...")
        started = time.perf_counter()
        result = run_command(args, config)
        manifest = write_manifest(config, args.command, result, time.perf_counter() - started)
    except VoteShareError as e:
        print(f"❌ {args.command} failed: {e}")
        return e.exit_code
    except Exception as e:  # pylint: disable=broad-except
        logger.exception("Unexpected failure")
        print(f"❌ {args.command} failed unexpectedly: {e}")
        return EXIT_UNEXPECTED

    print(result["status"])
    if args.command == "report":
        print(result["report"])
    print(f"📝 Manifest saved to {manifest}")
    return result.get("exit_code", EXIT_OK if result["passed"] else EXIT_DEGENERATE)


if __name__ == "__main__":
    sys.exit(main())
