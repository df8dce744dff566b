"""Versioned flat-file persistence for calibration state and model weights.

Everything persists as a single JSON document::

    {"schema_version": "1", "kind": ..., "checksum": sha256(payload), "payload": {...}}

The checksum covers the canonical JSON encoding of the payload, so a
truncated or edited file fails integrity before anything is deserialized.
The +inf quantile sentinel is stored as the string "inf" (JSON has no
infinity), and the RN neighbor model is embedded as plain arrays.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..conformal_class import ClassCalibration
from ..conformal_reg import RegCalibration, ResidualKnn
from ..errors import IntegrityError, VersionError
from ..router import RoutingPolicy
from ..scorer import ToyModelParams

STORE_VERSION = "1"


@dataclass(frozen=True)
class CalibrationBundle:
    """Frozen conformal state for both tasks plus the active policy.

    data_dir and scores_path reference the calibration dataset so an alpha
    change can recalibrate; cal_ids records exactly which instances were
    used, leaving their complement as the evaluation split.
    """

    policy: RoutingPolicy
    class_calibration: ClassCalibration
    reg_calibration: RegCalibration
    cal_ids: tuple[str, ...]
    data_dir: str | None = None
    scores_path: str | None = None
    data_format: str = "jsonl"
    min_annotators: int = 10
    annotation_method: str = "distance"
    rn_neighbors: int = 25


def _encode_float(v: float | None):
    if v is None:
        return None
    if math.isinf(v):
        return "inf"
    return v


def _decode_float(v):
    if v is None:
        return None
    if v == "inf":
        return math.inf
    return float(v)


def _class_cal_to_dict(c: ClassCalibration) -> dict:
    return {
        "method": c.method,
        "alpha": c.alpha,
        "n_cal": c.n_cal,
        "q_hat": _encode_float(c.q_hat),
        "q_hat_per_class": (
            {str(k): _encode_float(v) for k, v in c.q_hat_per_class.items()}
            if c.q_hat_per_class is not None
            else None
        ),
        "lambda_hat": c.lambda_hat,
    }


def _class_cal_from_dict(d: dict) -> ClassCalibration:
    per_class = d.get("q_hat_per_class")
    return ClassCalibration(
        method=d["method"],
        alpha=d["alpha"],
        n_cal=d["n_cal"],
        q_hat=_decode_float(d.get("q_hat")),
        q_hat_per_class=(
            {int(k): _decode_float(v) for k, v in per_class.items()}
            if per_class is not None
            else None
        ),
        lambda_hat=d.get("lambda_hat"),
    )


def _reg_cal_to_dict(c: RegCalibration) -> dict:
    model = None
    if c.residual_model is not None:
        model = {
            "features": c.residual_model.features.tolist(),
            "residuals": c.residual_model.residuals.tolist(),
            "k": c.residual_model.k,
        }
    return {
        "method": c.method,
        "alpha": c.alpha,
        "q_hat": _encode_float(c.q_hat),
        "epsilon": c.epsilon,
        "residual_model": model,
        "bin_centers": list(c.bin_centers) if c.bin_centers is not None else None,
    }


def _reg_cal_from_dict(d: dict) -> RegCalibration:
    model = d.get("residual_model")
    residual_model = (
        ResidualKnn(
            np.array(model["features"], dtype=float),
            np.array(model["residuals"], dtype=float),
            model["k"],
        )
        if model is not None
        else None
    )
    centers = d.get("bin_centers")
    return RegCalibration(
        method=d["method"],
        alpha=d["alpha"],
        q_hat=_decode_float(d["q_hat"]),
        epsilon=d["epsilon"],
        residual_model=residual_model,
        bin_centers=tuple(centers) if centers is not None else None,
    )


def _bundle_to_dict(b: CalibrationBundle) -> dict:
    return {
        "policy": {
            "gamma": b.policy.gamma,
            "alpha": b.policy.alpha,
            "pipeline": b.policy.pipeline,
        },
        "class_calibration": _class_cal_to_dict(b.class_calibration),
        "reg_calibration": _reg_cal_to_dict(b.reg_calibration),
        "cal_ids": list(b.cal_ids),
        "data_dir": b.data_dir,
        "scores_path": b.scores_path,
        "data_format": b.data_format,
        "min_annotators": b.min_annotators,
        "annotation_method": b.annotation_method,
        "rn_neighbors": b.rn_neighbors,
    }


def _bundle_from_dict(d: dict) -> CalibrationBundle:
    return CalibrationBundle(
        policy=RoutingPolicy(**d["policy"]),
        class_calibration=_class_cal_from_dict(d["class_calibration"]),
        reg_calibration=_reg_cal_from_dict(d["reg_calibration"]),
        cal_ids=tuple(d["cal_ids"]),
        data_dir=d.get("data_dir"),
        scores_path=d.get("scores_path"),
        data_format=d.get("data_format", "jsonl"),
        min_annotators=d.get("min_annotators", 10),
        annotation_method=d.get("annotation_method", "distance"),
        rn_neighbors=d.get("rn_neighbors", 25),
    )


def _model_to_dict(m: ToyModelParams) -> dict:
    return {
        "shared_weights": m.shared_weights.tolist(),
        "class_head": m.class_head.tolist(),
        "reg_head": m.reg_head.tolist(),
        "seed": m.seed,
    }


def _model_from_dict(d: dict) -> ToyModelParams:
    return ToyModelParams(
        shared_weights=np.array(d["shared_weights"], dtype=float),
        class_head=np.array(d["class_head"], dtype=float),
        reg_head=np.array(d["reg_head"], dtype=float),
        seed=d["seed"],
    )


def _payload_checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _write_document(kind: str, payload: dict, path: str | Path):
    document = {
        "schema_version": STORE_VERSION,
        "kind": kind,
        "checksum": _payload_checksum(payload),
        "payload": payload,
    }
    Path(path).write_text(json.dumps(document, indent=2) + "\n")


def _read_document(kind: str, path: str | Path) -> dict:
    try:
        document = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, OSError) as exc:
        raise IntegrityError(f"cannot read {path}: {exc}") from exc
    if not isinstance(document, dict) or "payload" not in document:
        raise IntegrityError(f"{path} is not a persistence document")
    version = document.get("schema_version")
    if version != STORE_VERSION:
        raise VersionError(
            f"{path} was written under schema version {version!r}; "
            f"this build reads version {STORE_VERSION!r}"
        )
    if document.get("kind") != kind:
        raise IntegrityError(
            f"{path} holds a {document.get('kind')!r} document, expected {kind!r}"
        )
    if _payload_checksum(document["payload"]) != document.get("checksum"):
        raise IntegrityError(f"{path} failed its checksum")
    return document["payload"]


def persist_calibration(bundle: CalibrationBundle, path: str | Path):
    _write_document("calibration", _bundle_to_dict(bundle), path)


def load_calibration(path: str | Path) -> CalibrationBundle:
    return _bundle_from_dict(_read_document("calibration", path))


def persist_model(params: ToyModelParams, path: str | Path):
    _write_document("toy-model", _model_to_dict(params), path)


def load_model(path: str | Path) -> ToyModelParams:
    return _model_from_dict(_read_document("toy-model", path))
