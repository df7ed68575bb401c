"""
Tests for Vote-Share Toolkit — Pipeline Orchestrator
"""

import json
from pathlib import Path

import pandas as pd
import pytest

from scripts.errors import ConfigError
from scripts.parties import PARTY_GROUPS
from scripts.pipeline import (
    DEFAULT_CONFIG,
    EXIT_CONFIG,
    EXIT_DEGENERATE,
    EXIT_INPUT,
    EXIT_OK,
    OUTPUT_ENV,
    apply_overrides,
    build_parser,
    generate_markdown_report,
    load_config,
    main,
    parse_grid,
    parse_window,
)
from scripts.synthetic_corpus import generate_training_examples

SAMPLE_STUDY = Path(__file__).resolve().parent.parent / "sample-study"


def _write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


@pytest.fixture
def study(tmp_path):
    """Config and generator files for a small synthetic study."""
    out = tmp_path / "out"
    config = _write_json(tmp_path / "config.json", {
        "models": ["CVT", "CVU", "CAT", "CAU", "GVU", "ALT"],
        "bootstrap": {"n_resamples": 20},
        "sweep": {"x_low": "0.4:0.6:0.1", "x_upp": "0.9:1.0:0.1"},
        "panel_size": 100,
        "panel_reps": 5,
        "output_dir": str(out),
    })
    generator = _write_json(tmp_path / "generator.json", {
        "n_users": 1500,
        "cross_mention_probability": 0.1,
        "geodata_probability": 0.3,
        "months": ["2021-04"],
        "emit_text": True,
        "seed": 1,
    })
    return {"config": config, "generator": generator, "out": out, "root": tmp_path}


class TestConfig:
    def test_missing_file_uses_defaults(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv(OUTPUT_ENV, raising=False)
        config = load_config(str(tmp_path / "nope.json"))
        assert "using defaults" in capsys.readouterr().out
        assert config["models"] == DEFAULT_CONFIG["models"]
        assert config["output_dir"] == "voteshare-output"

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env-out"))
        assert load_config(str(tmp_path / "nope.json"))["output_dir"] == str(tmp_path / "env-out")

    def test_nested_sections_merge(self, tmp_path):
        config = load_config(_write_json(tmp_path / "c.json", {"bootstrap": {"n_resamples": 5}}))
        assert config["bootstrap"] == {"n_resamples": 5, "seed": 0}
        assert DEFAULT_CONFIG["bootstrap"]["n_resamples"] == 1000

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_flags_override_file(self, tmp_path):
        config = load_config(_write_json(tmp_path / "c.json", {"models": ["CVT"], "bootstrap": {"seed": 3}}))
        args = build_parser().parse_args(["model", "--models", "cvu,alt", "--seed", "9", "--n-resamples", "7"])
        merged = apply_overrides(config, args)
        assert merged["models"] == ["CVU", "ALT"]
        assert merged["bootstrap"] == {"n_resamples": 7, "seed": 9}
        assert config["models"] == ["CVT"]

    @pytest.mark.parametrize("changes", [
        {"models": ["XYZ"]},
        {"models": []},
        {"alt_bounds": [0.8, 0.6]},
        {"train_fraction": 1.0},
        {"alpha": 0},
        {"panel_size": 0},
    ])
    def test_invalid_settings(self, tmp_path, changes):
        config = load_config(_write_json(tmp_path / "c.json", changes))
        with pytest.raises(ConfigError):
            apply_overrides(config, build_parser().parse_args(["model"]))

    def test_sample_study_config(self):
        config = load_config(str(SAMPLE_STUDY / ".study" / "config.json"))
        apply_overrides(config, build_parser().parse_args(["model"]))
        assert set(config["training"]) == set(PARTY_GROUPS)


class TestGridsAndWindows:
    def test_range_inclusive(self):
        assert parse_grid("0.1:0.7:0.1") == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
        assert parse_grid("0.7:1.0:0.1") == [0.7, 0.8, 0.9, 1.0]

    def test_lists(self):
        assert parse_grid("0.5, 0.6") == [0.5, 0.6]
        assert parse_grid([0.6]) == [0.6]

    @pytest.mark.parametrize("spec", ["", [], "a:b:c", "0.5:0.1:0.1", "0.1:0.5:0", None])
    def test_invalid(self, spec):
        with pytest.raises(ConfigError):
            parse_grid(spec)

    def test_window(self):
        start, end = parse_window(DEFAULT_CONFIG)
        assert start.isoformat() == "2020-12-01T05:00:00+00:00"
        assert end.isoformat() == "2021-05-31T05:00:00+00:00"

    def test_naive_window_rejected(self):
        with pytest.raises(ConfigError):
            parse_window({"window_start": "2021-01-01T00:00:00", "window_end": "2021-02-01T00:00:00+00:00"})


class TestEndToEnd:
    def _run(self, study, *argv):
        return main([argv[0], "--config", study["config"], *argv[1:]])

    def test_synthetic_study_is_reproducible(self, study):
        out = study["out"]
        assert self._run(study, "synth", "--generator-config", study["generator"]) == EXIT_OK
        records = str(out / "synthetic_records.csv")
        for command in ("model", "sweep", "geo"):
            assert self._run(study, command, "--records", records) == EXIT_OK
        assert self._run(study, "report") == EXIT_OK

        estimates = json.loads((out / "model_estimates.json").read_text(encoding="utf-8"))
        assert estimates["reference"]["official_ruling_share_pct"] == 44.37
        assert [row["model"] for row in estimates["estimates"]] == ["CVT", "CVU", "CAT", "CAU", "GVU", "ALT"]
        assert all(row["month"] == "2021-04" for row in estimates["estimates"])
        assert all(row["status"] == "ok" for row in estimates["estimates"])

        distributions = json.loads((out / "allegiance_distribution.json").read_text(encoding="utf-8"))
        assert len(distributions) == 6
        assert [(row["coalition"], row["subset"]) for row in distributions][:3] == [
            ("ruling", "complete"), ("ruling", "geo"), ("ruling", "user_mean"),
        ]
        assert all(sum(row["histogram"]) == row["n"] for row in distributions)

        sweep = json.loads((out / "alt_sweep.json").read_text(encoding="utf-8"))
        assert len(sweep) == 3 * 2
        geo = json.loads((out / "geo_report.json").read_text(encoding="utf-8"))
        assert geo["resampled"][0]["model"] == "GVU"

        report = (out / "report.md").read_text(encoding="utf-8")
        assert "44.37" in report
        assert "Allegiance distribution" in report
        manifest = json.loads((out / "manifest_model.json").read_text(encoding="utf-8"))
        assert records in manifest["inputs"]

        kept = ("model_estimates.json", "allegiance_distribution.json", "alt_sweep.json", "report.md")
        first = {name: (out / name).read_bytes() for name in kept}
        assert self._run(study, "model", "--records", records) == EXIT_OK
        assert self._run(study, "sweep", "--records", records) == EXIT_OK
        assert self._run(study, "report") == EXIT_OK
        assert {name: (out / name).read_bytes() for name in first} == first

    def test_ingest_train_score_chain(self, study):
        root, out = study["root"], study["out"]
        assert self._run(study, "synth", "--generator-config", study["generator"]) == EXIT_OK

        training = []
        for i, group in enumerate(PARTY_GROUPS):
            path = root / f"train_{i}.csv"
            examples = generate_training_examples(40, seed=i)
            pd.DataFrame({"text": [e.text for e in examples], "label": [e.label for e in examples]}).to_csv(
                path, index=False)
            training += ["--training", f"{group}={path}"]

        assert self._run(study, "ingest", "--input", str(out / "synthetic_tweets.jsonl"),
                         "--queries", str(SAMPLE_STUDY / ".study" / "queries.json")) == EXIT_OK
        assert self._run(study, "train", *training) == EXIT_OK
        assert len(list((out / "models").glob("*.json"))) == len(PARTY_GROUPS)
        assert self._run(study, "score") == EXIT_OK
        assert self._run(study, "model", "--models", "CVT,CAT,ALT", "--n-resamples", "0") == EXIT_OK

        scored = pd.read_csv(out / "scored_records.csv")
        assert scored["allegiance"].between(0, 1).all()
        stats = json.loads((out / "corpus_stats.json").read_text(encoding="utf-8"))
        assert stats["total_tweets"] > 0
        metrics = json.loads((out / "training_metrics.json").read_text(encoding="utf-8"))
        assert [row["group"] for row in metrics] == list(PARTY_GROUPS)


class TestExitCodes:
    def test_missing_records_is_config_error(self, study):
        assert main(["model", "--config", study["config"]]) == EXIT_CONFIG

    def test_malformed_records_is_input_error(self, study, make_records):
        path = study["root"] / "bad.csv"
        table = make_records([("a", "MORENA", 0.5)])
        table["coalition"] = 1
        table.to_csv(path, index=False)
        assert main(["model", "--config", study["config"], "--records", str(path)]) == EXIT_INPUT

    def test_nothing_defined_is_degenerate(self, study, make_records):
        path = study["root"] / "cold.csv"
        make_records([("a", "MORENA", 0.1), ("b", "PAN", 0.2)]).to_csv(path, index=False)
        assert main(["model", "--config", study["config"], "--records", str(path), "--models", "ALT"]) \
            == EXIT_DEGENERATE

    def test_partial_training_failure(self, study):
        good = study["root"] / "good.csv"
        bad = study["root"] / "bad.csv"
        examples = generate_training_examples(20)
        pd.DataFrame({"text": [e.text for e in examples], "label": [e.label for e in examples]}).to_csv(
            good, index=False)
        pd.DataFrame({"text": ["bien", "apoyo"], "label": ["p", "p"]}).to_csv(bad, index=False)
        code = main(["train", "--config", study["config"], "--training", f"PAN={good}", "--training", f"PRI={bad}"])
        assert code == EXIT_INPUT
        assert (study["out"] / "models" / "PAN.json").exists()
        assert not (study["out"] / "models" / "PRI.json").exists()

    def test_bad_training_flag(self, study):
        assert main(["train", "--config", study["config"], "--training", "PAN"]) == EXIT_CONFIG


class TestMarkdownReport:
    def test_sections_follow_artifacts(self):
        references = {"official_ruling_share_pct": 44.37, "poll_ruling_share_pct": 49.0, "poll_precision_pp": 5.8}
        artifacts = {"model_estimates": {"estimates": [{
            "month": "2021-05", "model": "ALT", "share": 0.4477, "median": 0.448, "q1": 0.44, "q3": 0.456,
            "precision_pp": 1.6, "status": "ok",
        }]}}
        report = generate_markdown_report(artifacts, references)
        assert "Model estimates" in report
        assert "+0.4" in report
        assert "Corpus" not in report

    def test_allegiance_distribution_section(self):
        references = {"official_ruling_share_pct": 44.37, "poll_ruling_share_pct": 49.0, "poll_precision_pp": 5.8}
        artifacts = {"allegiance_distribution": [
            {"month": "2021-05", "coalition": "ruling", "subset": "user_mean", "n": 4, "mean": 0.6,
             "q1": 0.4, "median": 0.65, "q3": 0.8, "below_half": 0.25, "histogram": [0, 1, 0, 3]},
            {"month": "2021-05", "coalition": "opposition", "subset": "geo", "n": 0, "mean": None,
             "q1": None, "median": None, "q3": None, "below_half": None, "histogram": [0, 0, 0, 0]},
        ]}
        report = generate_markdown_report(artifacts, references)
        assert "### 🎭 Allegiance distribution" in report
        assert "| 2021-05 | ruling | user_mean | 4 | 0.60 | 0.40 | 0.65 | 0.80 | 25% |" in report
        assert "| 2021-05 | opposition | geo | 0 | — | — | — | — | — |" in report
