"""Glue between files, calibrations, routing and evaluation.

Joins labeled instances with scored instances by id, runs the selected
conformal calibrations, and builds the per-comment objects the router and
the metric suite consume. Both the CLI and the HTTP service go through
these functions so they cannot drift apart.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..annotations import LabeledInstance
from ..conformal_class import (
    ClassCalibration,
    PredictionSet,
    calibrate_cclac,
    calibrate_crc,
    calibrate_lac,
    predict_set_cclac,
    predict_set_crc,
    predict_set_lac,
)
from ..conformal_reg import (
    Interval,
    RegCalibration,
    calibrate_ar,
    calibrate_gamma,
    calibrate_r2ccp,
    calibrate_rn,
    interval_ar,
    interval_gamma,
    interval_r2ccp,
    interval_rn,
)
from ..errors import ConfigError, SchemaError
from ..metrics import EvalRecord, MetricsReport, compute_report
from ..router import RoutingDecision, RoutingPolicy, route_batch
from .schemas import ScoredInstance, ingest_annotations, ingest_scores
from .store import CalibrationBundle

CLASS_METHODS = ("LAC", "CCLAC", "CRC")
REG_METHODS = ("AR", "G", "RN", "R2CCP")


def join_by_id(
    labeled: list[LabeledInstance], scored: list[ScoredInstance]
) -> list[tuple[LabeledInstance, ScoredInstance]]:
    """Pair labels with scores on id; every labeled instance must be scored."""
    by_id = {s.id: s for s in scored}
    missing = [inst.id for inst in labeled if inst.id not in by_id]
    if missing:
        raise SchemaError(
            f"{len(missing)} labeled instances lack scores (first: {missing[0]!r})"
        )
    return [(inst, by_id[inst.id]) for inst in labeled]


def calibrate_class_method(
    method: str, pairs: list[tuple[LabeledInstance, ScoredInstance]], alpha: float
) -> ClassCalibration:
    cal = [(s.probs, inst.y) for inst, s in pairs]
    if method == "LAC":
        return calibrate_lac(cal, alpha)
    if method == "CCLAC":
        return calibrate_cclac(cal, alpha)
    if method == "CRC":
        return calibrate_crc(cal, alpha)
    raise ConfigError(f"class method must be one of {CLASS_METHODS}, got {method!r}")


def calibrate_reg_method(
    method: str,
    pairs: list[tuple[LabeledInstance, ScoredInstance]],
    alpha: float,
    rn_neighbors: int = 25,
) -> RegCalibration:
    cal = [(s.reg, inst.d) for inst, s in pairs]
    if method == "AR":
        return calibrate_ar(cal, alpha)
    if method == "G":
        return calibrate_gamma(cal, alpha)
    if method == "RN":
        return calibrate_rn(cal, alpha, k=min(rn_neighbors, len(cal)))
    if method == "R2CCP":
        return calibrate_r2ccp(cal, alpha)
    raise ConfigError(f"reg method must be one of {REG_METHODS}, got {method!r}")


def predict_set(calib: ClassCalibration, scored: ScoredInstance) -> PredictionSet:
    if calib.method == "LAC":
        return predict_set_lac(calib, scored.probs)
    if calib.method == "CCLAC":
        return predict_set_cclac(calib, scored.probs)
    return predict_set_crc(calib, scored.probs)


def predict_interval(calib: RegCalibration, scored: ScoredInstance) -> Interval:
    if calib.method == "AR":
        return interval_ar(calib, scored.reg.d_hat)
    if calib.method == "G":
        return interval_gamma(calib, scored.reg.d_hat)
    if calib.method == "RN":
        return interval_rn(calib, scored.reg)
    return interval_r2ccp(calib, scored.reg)


def route_scored(
    scored: list[ScoredInstance],
    class_cal: ClassCalibration,
    reg_cal: RegCalibration | None,
    policy: RoutingPolicy,
) -> tuple[list[RoutingDecision], dict[str, int]]:
    records = []
    for s in scored:
        interval = predict_interval(reg_cal, s) if reg_cal is not None else None
        records.append((s.id, predict_set(class_cal, s), interval))
    return route_batch(records, policy)


def build_eval_records(
    pairs: list[tuple[LabeledInstance, ScoredInstance]],
    class_cal: ClassCalibration,
    reg_cal: RegCalibration,
) -> list[EvalRecord]:
    records = []
    for inst, s in pairs:
        records.append(
            EvalRecord(
                id=inst.id,
                y=inst.y,
                y_hat=1 if s.probs.p_toxic >= 0.5 else 0,
                p_toxic=s.probs.p_toxic,
                set=predict_set(class_cal, s),
                d=inst.d,
                d_hat=s.reg.d_hat,
                interval=predict_interval(reg_cal, s),
            )
        )
    return records


def load_dataset(
    data_dir: str | Path,
    format: str = "jsonl",
    min_annotators: int = 10,
    method: str = "distance",
    scores_path: str | Path | None = None,
) -> list[tuple[LabeledInstance, ScoredInstance]]:
    """Read a dataset directory (annotations.<fmt> + scores.<fmt>) and join."""
    data_dir = Path(data_dir)
    annotations_path = data_dir / f"annotations.{format}"
    if scores_path is None:
        scores_path = data_dir / f"scores.{format}"
    labeled, _ = ingest_annotations(
        annotations_path, format=format, min_annotators=min_annotators, method=method
    )
    scored = ingest_scores(scores_path, format=format)
    return join_by_id(labeled, scored)


def calibrate_bundle(
    pairs: list[tuple[LabeledInstance, ScoredInstance]],
    policy: RoutingPolicy,
    class_method: str,
    reg_method: str,
    cal_fraction: float = 0.5,
    seed: int = 0,
    rn_neighbors: int = 25,
    data_dir: str | None = None,
    scores_path: str | None = None,
    data_format: str = "jsonl",
    min_annotators: int = 10,
    annotation_method: str = "distance",
) -> CalibrationBundle:
    """Split off a calibration subset, calibrate both tasks, freeze the bundle.

    The instances outside the calibration subset form the evaluation split;
    the bundle records the calibration ids so that split is recoverable.
    """
    if not 0.0 < cal_fraction < 1.0:
        raise ConfigError(f"cal_fraction must lie in (0, 1), got {cal_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    n_cal = round(cal_fraction * len(pairs))
    if n_cal < 1 or n_cal >= len(pairs):
        raise ConfigError(
            f"cal_fraction {cal_fraction} leaves an empty calibration or evaluation split"
        )
    cal_pairs = [pairs[i] for i in order[:n_cal]]
    class_cal = calibrate_class_method(class_method, cal_pairs, policy.alpha)
    reg_cal = calibrate_reg_method(reg_method, cal_pairs, policy.alpha, rn_neighbors)
    return CalibrationBundle(
        policy=policy,
        class_calibration=class_cal,
        reg_calibration=reg_cal,
        cal_ids=tuple(inst.id for inst, _ in cal_pairs),
        data_dir=data_dir,
        scores_path=scores_path,
        data_format=data_format,
        min_annotators=min_annotators,
        annotation_method=annotation_method,
        rn_neighbors=rn_neighbors,
    )


def recalibrate_bundle(
    bundle: CalibrationBundle,
    pairs: list[tuple[LabeledInstance, ScoredInstance]],
    policy: RoutingPolicy,
) -> CalibrationBundle:
    """Rebuild both calibrations at a new alpha from the recorded cal subset."""
    cal_set = set(bundle.cal_ids)
    cal_pairs = [p for p in pairs if p[0].id in cal_set]
    class_cal = calibrate_class_method(
        bundle.class_calibration.method, cal_pairs, policy.alpha
    )
    reg_cal = calibrate_reg_method(
        bundle.reg_calibration.method, cal_pairs, policy.alpha, bundle.rn_neighbors
    )
    return CalibrationBundle(
        policy=policy,
        class_calibration=class_cal,
        reg_calibration=reg_cal,
        cal_ids=bundle.cal_ids,
        data_dir=bundle.data_dir,
        scores_path=bundle.scores_path,
        data_format=bundle.data_format,
        min_annotators=bundle.min_annotators,
        annotation_method=bundle.annotation_method,
        rn_neighbors=bundle.rn_neighbors,
    )


def eval_pairs_of(
    bundle: CalibrationBundle,
    pairs: list[tuple[LabeledInstance, ScoredInstance]],
) -> list[tuple[LabeledInstance, ScoredInstance]]:
    cal_set = set(bundle.cal_ids)
    return [p for p in pairs if p[0].id not in cal_set]


def evaluate_bundle(
    bundle: CalibrationBundle,
    pairs: list[tuple[LabeledInstance, ScoredInstance]],
    target_tpr: float | None = None,
) -> MetricsReport:
    """Metrics of the frozen bundle on everything outside its calibration set."""
    eval_pairs = eval_pairs_of(bundle, pairs)
    records = build_eval_records(eval_pairs, bundle.class_calibration, bundle.reg_calibration)
    return compute_report(
        records, alpha=bundle.policy.alpha, gamma=bundle.policy.gamma, target_tpr=target_tpr
    )
