import json
import math

import numpy as np
import pytest

from comod.annotations import AnnotationRecord
from comod.conformal_class import ClassCalibration, ClassProbs
from comod.conformal_reg import RegCalibration, RegOutput, ResidualKnn
from comod.errors import (
    DuplicateId,
    EmptyDataset,
    IntegrityError,
    InvalidProbability,
    SchemaError,
    VersionError,
)
from comod.platform.schemas import (
    ScoredInstance,
    ingest_annotations,
    ingest_scores,
    read_manifest,
    write_annotations,
    write_manifest,
    write_scores,
)
from comod.platform.store import (
    CalibrationBundle,
    load_calibration,
    load_model,
    persist_calibration,
    persist_model,
)
from comod.router import RoutingPolicy
from comod.scorer import ToyModelParams, train_toy


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


class TestIngestAnnotations:
    def test_filter_composition(self, tmp_path):
        path = tmp_path / "annotations.jsonl"
        write_jsonl(
            path,
            [
                {"id": "a", "votes": [1, 0, 1]},
                {"id": "b", "votes": [1] * 10},
                {"id": "c", "votes": [0] * 12},
            ],
        )
        labeled, manifest = ingest_annotations(path, min_annotators=10)
        assert [inst.id for inst in labeled] == ["b", "c"]
        assert manifest.n == 2 and manifest.min_annotators == 10
        assert manifest.checksum

    def test_bad_vote_value_names_row(self, tmp_path):
        path = tmp_path / "annotations.jsonl"
        write_jsonl(path, [{"id": "a", "votes": [1, 0]}, {"id": "b", "votes": [2, 0]}])
        with pytest.raises(SchemaError, match="row 2"):
            ingest_annotations(path, min_annotators=1)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "annotations.jsonl"
        write_jsonl(path, [{"id": "a", "votes": [1]}, {"id": "a", "votes": [0]}])
        with pytest.raises(DuplicateId):
            ingest_annotations(path, min_annotators=1)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "annotations.jsonl"
        path.write_text("")
        with pytest.raises(EmptyDataset):
            ingest_annotations(path)

    def test_csv_round_trip(self, tmp_path):
        records = [
            AnnotationRecord(id="x", votes=(1, 0, 1), text="hello"),
            AnnotationRecord(id="y", votes=(0, 0)),
        ]
        path = tmp_path / "annotations.csv"
        write_annotations(records, path, format="csv")
        labeled, _ = ingest_annotations(path, format="csv", min_annotators=1)
        assert [inst.id for inst in labeled] == ["x", "y"]
        assert labeled[0].a_mean == pytest.approx(2 / 3)

    def test_jsonl_round_trip(self, tmp_path):
        records = [AnnotationRecord(id=str(i), votes=(1,) * (i + 1)) for i in range(5)]
        path = tmp_path / "annotations.jsonl"
        write_annotations(records, path)
        labeled, _ = ingest_annotations(path, min_annotators=1)
        assert len(labeled) == 5


class TestIngestScores:
    def test_complement_completion(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        write_jsonl(path, [{"id": "a", "p_toxic": 0.7, "d_hat": 0.5}])
        [scored] = ingest_scores(path)
        assert scored.probs.p_nontoxic == pytest.approx(0.3)

    def test_bad_bin_sum(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        write_jsonl(
            path,
            [{"id": "a", "p_toxic": 0.7, "d_hat": 0.5, "bin_probs": [0.4, 0.4]}],
        )
        with pytest.raises(InvalidProbability, match="row 1"):
            ingest_scores(path)

    def test_twenty_bins_accepted(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        write_jsonl(
            path,
            [{"id": "a", "p_toxic": 0.7, "d_hat": 0.5, "bin_probs": [1 / 20] * 20}],
        )
        [scored] = ingest_scores(path)
        assert len(scored.reg.bin_probs) == 20

    def test_csv_round_trip_with_bins_and_features(self, tmp_path):
        instances = [
            ScoredInstance(
                id="a",
                probs=ClassProbs.from_toxic(0.625),
                reg=RegOutput(
                    d_hat=0.25,
                    bin_probs=tuple([0.05] * 20),
                    features=(0.25, 1.5),
                ),
            )
        ]
        path = tmp_path / "scores.csv"
        write_scores(instances, path, format="csv")
        [back] = ingest_scores(path, format="csv")
        assert back.probs.p_toxic == 0.625
        assert back.reg.bin_probs == instances[0].reg.bin_probs
        assert back.reg.features == (0.25, 1.5)

    def test_invalid_probability_rejected(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        write_jsonl(path, [{"id": "a", "p_toxic": 0.7, "p_nontoxic": 0.7, "d_hat": 0.5}])
        with pytest.raises(InvalidProbability):
            ingest_scores(path)


class TestManifest:
    def test_round_trip(self, tmp_path):
        from comod.platform.schemas import DatasetManifest

        manifest = DatasetManifest(
            schema_version="1",
            source="simulator",
            n=10,
            annotation_method="distance",
            min_annotators=10,
            checksum="abc",
            rng_algorithm="numpy-pcg64",
            seed=7,
        )
        path = tmp_path / "manifest.json"
        write_manifest(manifest, path)
        assert read_manifest(path) == manifest


def sample_bundle(method="LAC", reg_method="AR"):
    class_cal = {
        "LAC": ClassCalibration(method="LAC", alpha=0.1, n_cal=5, q_hat=0.37),
        "CCLAC": ClassCalibration(
            method="CCLAC", alpha=0.1, n_cal=5, q_hat_per_class={0: 0.21, 1: math.inf}
        ),
        "CRC": ClassCalibration(method="CRC", alpha=0.1, n_cal=5, lambda_hat=0.44),
    }[method]
    reg_cal = {
        "AR": RegCalibration(method="AR", alpha=0.1, q_hat=0.12),
        "G": RegCalibration(method="G", alpha=0.1, q_hat=math.inf),
        "RN": RegCalibration(
            method="RN",
            alpha=0.1,
            q_hat=1.5,
            residual_model=ResidualKnn(
                np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]),
                np.array([0.01, 0.02, 0.03]),
                2,
            ),
        ),
        "R2CCP": RegCalibration(
            method="R2CCP", alpha=0.1, q_hat=0.05, bin_centers=tuple((i + 0.5) / 20 for i in range(20))
        ),
    }[reg_method]
    return CalibrationBundle(
        policy=RoutingPolicy(gamma=0.6, alpha=0.1, pipeline="MTL"),
        class_calibration=class_cal,
        reg_calibration=reg_cal,
        cal_ids=("a", "b", "c"),
        data_dir="/tmp/data",
        min_annotators=10,
    )


class TestCalibrationPersistence:
    @pytest.mark.parametrize("method", ["LAC", "CCLAC", "CRC"])
    @pytest.mark.parametrize("reg_method", ["AR", "G", "RN", "R2CCP"])
    def test_round_trip_identity(self, tmp_path, method, reg_method):
        bundle = sample_bundle(method, reg_method)
        path = tmp_path / "calibration.json"
        persist_calibration(bundle, path)
        assert load_calibration(path) == bundle

    def test_infinity_sentinel_survives(self, tmp_path):
        bundle = sample_bundle("CCLAC", "G")
        path = tmp_path / "calibration.json"
        persist_calibration(bundle, path)
        loaded = load_calibration(path)
        assert loaded.class_calibration.q_hat_per_class[1] == math.inf
        assert loaded.reg_calibration.q_hat == math.inf

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "calibration.json"
        persist_calibration(sample_bundle(), path)
        path.write_text(path.read_text()[: len(path.read_text()) // 2])
        with pytest.raises(IntegrityError):
            load_calibration(path)

    def test_tampered_payload(self, tmp_path):
        path = tmp_path / "calibration.json"
        persist_calibration(sample_bundle(), path)
        document = json.loads(path.read_text())
        document["payload"]["policy"]["gamma"] = 0.11
        path.write_text(json.dumps(document))
        with pytest.raises(IntegrityError):
            load_calibration(path)

    def test_version_mismatch_names_versions(self, tmp_path):
        path = tmp_path / "calibration.json"
        persist_calibration(sample_bundle(), path)
        document = json.loads(path.read_text())
        document["schema_version"] = "0"
        path.write_text(json.dumps(document))
        with pytest.raises(VersionError, match="'0'.*'1'"):
            load_calibration(path)


class TestModelPersistence:
    def test_round_trip(self, tmp_path):
        data = [((1.0, 2.0, 1.0), 1, 0.4), ((-1.0, -2.0, 1.0), 0, 0.6)] * 10
        params = train_toy(data, reg_mode="RAC", epochs=5, seed=3)
        path = tmp_path / "model.json"
        persist_model(params, path)
        assert load_model(path) == params

    def test_wrong_kind(self, tmp_path):
        path = tmp_path / "model.json"
        persist_calibration(sample_bundle(), path)
        with pytest.raises(IntegrityError):
            load_model(path)
