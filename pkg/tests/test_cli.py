import json
from pathlib import Path

import pytest

from comod.platform.cli import main


def run(args):
    return main([str(a) for a in args])


class TestSimulate:
    def test_deterministic_files(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(["simulate", "--out", out, "--n", "50", "--seed", "7"]) == 0
        assert (a / "annotations.jsonl").read_bytes() == (b / "annotations.jsonl").read_bytes()
        assert (a / "scores.jsonl").read_bytes() == (b / "scores.jsonl").read_bytes()

    def test_manifest_records_rng(self, tmp_path):
        run(["simulate", "--out", tmp_path, "--n", "20", "--seed", "1"])
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["rng_algorithm"] == "numpy-pcg64"
        assert manifest["seed"] == 1
        assert manifest["source"] == "simulator"

    def test_csv_format(self, tmp_path):
        assert run(["simulate", "--out", tmp_path, "--n", "20", "--format", "csv"]) == 0
        assert (tmp_path / "annotations.csv").exists()
        assert (tmp_path / "scores.csv").exists()


class TestIngest:
    def test_reports_stats(self, tmp_path, capsys):
        run(["simulate", "--out", tmp_path, "--n", "30", "--seed", "2"])
        rc = run(
            [
                "ingest",
                "--annotations",
                tmp_path / "annotations.jsonl",
                "--min-annotators",
                "10",
                "--out",
                tmp_path / "labeled.jsonl",
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "instances" in out
        assert (tmp_path / "labeled.jsonl").exists()

    def test_missing_file_nonzero(self, tmp_path):
        assert run(["ingest", "--annotations", tmp_path / "nope.jsonl"]) == 1


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """simulate -> train-toy -> calibrate, shared across CLI tests."""
    root = tmp_path_factory.mktemp("pipeline")
    assert run(
        ["simulate", "--out", root, "--n", "600", "--seed", "5", "--feature-dim", "4"]
    ) == 0
    assert run(
        [
            "train-toy",
            "--data",
            root,
            "--reg-mode",
            "BCE",
            "--epochs",
            "60",
            "--seed",
            "5",
            "--out",
            root / "model.json",
            "--emit-scores",
            root / "model_scores.jsonl",
        ]
    ) == 0
    assert run(
        [
            "calibrate",
            "--data",
            root,
            "--alpha",
            "0.1",
            "--gamma",
            "0.6",
            "--class-method",
            "LAC",
            "--reg-method",
            "AR",
            "--seed",
            "3",
            "--out",
            root / "calibration.json",
        ]
    ) == 0
    return root


class TestPipeline:
    def test_artifacts_exist(self, pipeline_dir):
        assert (pipeline_dir / "model.json").exists()
        assert (pipeline_dir / "model_scores.jsonl").exists()
        assert (pipeline_dir / "calibration.json").exists()

    def test_route_consumes_calibration(self, pipeline_dir, tmp_path):
        out = tmp_path / "decisions.jsonl"
        rc = run(
            [
                "route",
                "--calibration",
                pipeline_dir / "calibration.json",
                "--scores",
                pipeline_dir / "scores.jsonl",
                "--out",
                out,
            ]
        )
        assert rc == 0
        decisions = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(decisions) == 600
        actions = {d["action"] for d in decisions}
        assert actions <= {"auto_publish", "auto_remove", "review"}

    def test_evaluate_writes_report(self, pipeline_dir, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        rc = run(
            [
                "evaluate",
                "--calibration",
                pipeline_dir / "calibration.json",
                "--report",
                report_path,
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "marginal_coverage" in out
        report = json.loads(report_path.read_text())
        assert report["alpha"] == 0.1
        assert 0.0 <= report["marginal_coverage"] <= 1.0

    def test_model_scores_usable_downstream(self, pipeline_dir, tmp_path):
        calibration = tmp_path / "calibration_model.json"
        rc = run(
            [
                "calibrate",
                "--data",
                pipeline_dir,
                "--scores",
                pipeline_dir / "model_scores.jsonl",
                "--reg-method",
                "RN",
                "--out",
                calibration,
            ]
        )
        assert rc == 0
        rc = run(
            [
                "route",
                "--calibration",
                calibration,
                "--scores",
                pipeline_dir / "model_scores.jsonl",
                "--out",
                tmp_path / "d.jsonl",
            ]
        )
        assert rc == 0

    def test_train_toy_deterministic(self, pipeline_dir, tmp_path):
        first, second = tmp_path / "m1.json", tmp_path / "m2.json"
        for out in (first, second):
            assert run(
                [
                    "train-toy",
                    "--data",
                    pipeline_dir,
                    "--reg-mode",
                    "MSE",
                    "--epochs",
                    "10",
                    "--seed",
                    "9",
                    "--out",
                    out,
                ]
            ) == 0
        assert json.loads(first.read_text())["payload"] == json.loads(second.read_text())["payload"]


class TestArgumentErrors:
    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_missing_required(self):
        with pytest.raises(SystemExit):
            main(["simulate"])
