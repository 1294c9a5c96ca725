from __future__ import annotations

import json

import pytest

from arguard.cli import EXIT_INVALID, EXIT_OK, main
from arguard.config import load_config
from arguard.harness.report import parse_report


@pytest.fixture
def dataset(tmp_path):
    from arguard.harness.synth import generate_obstruction_dataset

    path = tmp_path / "data"
    generate_obstruction_dataset(path, 8, seed=41)
    return path


def test_synth_then_oracle_eval(tmp_path, capsys):
    out = tmp_path / "synthetic"
    assert main(["synth", "--out", str(out), "--n", "6", "--seed", "1"]) == EXIT_OK
    assert (out / "manifest.json").is_file()

    code = main(
        ["eval", "obstruct", "--dataset", str(out), "--method", "prior", "--oracle"]
    )
    captured = capsys.readouterr()
    assert code == EXIT_OK
    assert "100.00%" in captured.out


def test_eval_writes_json_report(dataset, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = main(
        [
            "eval", "obstruct",
            "--dataset", str(dataset),
            "--method", "prior",
            "--oracle",
            "--out", str(report_path),
        ]
    )
    assert code == EXIT_OK
    report = parse_report(report_path.read_text().strip())
    assert report.task == "obstruction"
    assert report.accuracy == 1.0


def test_saliency_method_needs_no_backends(dataset, capsys):
    code = main(["eval", "obstruct", "--dataset", str(dataset), "--method", "saliency"])
    assert code == EXIT_OK
    assert "Obstruction" in capsys.readouterr().out


def test_vlm_method_without_backends_is_invalid(dataset, capsys):
    code = main(["eval", "obstruct", "--dataset", str(dataset), "--method", "standard"])
    assert code == EXIT_INVALID
    assert "needs" in capsys.readouterr().err


def test_unknown_method_is_invalid(dataset):
    with pytest.raises(SystemExit) as excinfo:
        main(["eval", "obstruct", "--dataset", str(dataset), "--method", "psychic"])
    assert excinfo.value.code == EXIT_INVALID


def test_missing_dataset_is_invalid(tmp_path, capsys):
    code = main(["eval", "obstruct", "--dataset", str(tmp_path / "nope"), "--method", "saliency"])
    assert code == EXIT_INVALID


def test_capture_then_replay_round_trip(dataset, tmp_path, capsys):
    fixtures = tmp_path / "fixtures"
    report_a = tmp_path / "a.json"
    report_b = tmp_path / "b.json"

    code = main(
        [
            "eval", "obstruct",
            "--dataset", str(dataset),
            "--method", "saliency",
            "--out", str(report_a),
        ]
    )
    assert code == EXIT_OK
    # saliency needs no fixtures; replay path exercised through oracle capture
    from arguard.gateway.scripted import FixtureStore
    from arguard.harness.dataset import KIND_OBSTRUCTION, load_dataset
    from arguard.harness.evaluate import EvalSpec, GroundTruthBackend, capture_fixtures
    from arguard.imaging import DiffConfig
    from arguard.obstruction import ObstructionConfig

    samples = load_dataset(dataset, KIND_OBSTRUCTION)
    spec = EvalSpec(
        task="obstruction",
        method="prior",
        config=ObstructionConfig(diff=DiffConfig(0, 0)),
    )
    capture_fixtures(spec, samples, GroundTruthBackend(samples).as_backends(), FixtureStore(fixtures))

    code = main(
        [
            "eval", "obstruct",
            "--dataset", str(dataset),
            "--method", "prior",
            "--diff-tolerance", "0",
            "--min-component-area", "0",
            "--fixtures", str(fixtures),
            "--replay",
            "--out", str(report_b),
        ]
    )
    assert code == EXIT_OK
    replayed = parse_report(report_b.read_text().strip())
    assert replayed.accuracy == 1.0
    assert replayed.fixture_digest


def test_config_file_round_trip(tmp_path):
    config_path = tmp_path / "service.conf"
    config_path.write_text(
        "# service settings\n"
        "alpha = 0.3\n"
        "box_confidence_min = 0.5\n"
        "diff_tolerance = 4\n"
        "min_refresh_interval_s = 1.5\n"
        "auto_refresh_interval_s =\n"
        "vlm_url = http://models:9000\n"
        "timeout_ms = 5000  # per request\n"
    )
    config = load_config(config_path)
    assert config.alpha == 0.3
    assert config.box_confidence_min == 0.5
    assert config.diff_tolerance == 4
    assert config.auto_refresh_interval_s is None
    assert config.vlm_url == "http://models:9000"
    assert config.timeout_ms == 5000
    assert config.obstruction_config().alpha == 0.3
    assert config.service_settings().min_refresh_interval_s == 1.5


def test_config_rejects_unknown_keys(tmp_path):
    config_path = tmp_path / "bad.conf"
    config_path.write_text("alhpa = 0.3\n")
    with pytest.raises(ValueError):
        load_config(config_path)
