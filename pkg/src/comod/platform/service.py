"""HTTP moderation service.

A thin FastAPI layer over the engine. All state lives in one immutable
snapshot (calibrations + policy + retained calibration dataset) guarded by a
single writer lock; routing requests read whatever snapshot is current, so a
policy update can never expose a half-swapped (gamma, alpha) pair. Every
routing decision and moderator decision is appended to a line-delimited log,
and replaying that log rebuilds the review queue exactly.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from ..conformal_class import ClassProbs
from ..conformal_reg import RegOutput
from ..errors import ModerationError
from ..router import REVIEW, RoutingDecision, RoutingPolicy
from .pipeline import (
    CLASS_METHODS,
    REG_METHODS,
    calibrate_bundle,
    eval_pairs_of,
    evaluate_bundle,
    load_dataset,
    recalibrate_bundle,
    route_scored,
)
from .schemas import ScoredInstance
from .store import CalibrationBundle, load_calibration, persist_calibration


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class ReviewQueueItem:
    id: str
    decision: RoutingDecision
    enqueued_at: str
    text: str | None = None
    status: str = "pending"
    moderator_label: int | None = None
    resolved_at: str | None = None


def decision_to_dict(d: RoutingDecision) -> dict:
    return {
        "id": d.id,
        "action": d.action,
        "reasons": sorted(d.reasons),
        "set_size": d.set_size,
        "label": d.label,
        "interval": [d.interval.lo, d.interval.hi] if d.interval is not None else None,
    }


def _decision_from_dict(raw: dict) -> RoutingDecision:
    from ..conformal_reg import Interval

    interval = raw.get("interval")
    return RoutingDecision(
        id=raw["id"],
        action=raw["action"],
        reasons=frozenset(raw["reasons"]),
        set_size=raw["set_size"],
        label=raw.get("label"),
        interval=Interval(lo=interval[0], hi=interval[1]) if interval else None,
    )


class ScoredItemIn(BaseModel):
    id: str
    p_toxic: float
    d_hat: float
    p_nontoxic: float | None = None
    bin_probs: list[float] | None = None
    features: list[float] | None = None
    text: str | None = None

    def to_instance(self) -> ScoredInstance:
        p_nontoxic = self.p_nontoxic if self.p_nontoxic is not None else 1.0 - self.p_toxic
        return ScoredInstance(
            id=self.id,
            probs=ClassProbs(p_toxic=self.p_toxic, p_nontoxic=p_nontoxic),
            reg=RegOutput(
                d_hat=self.d_hat,
                bin_probs=tuple(self.bin_probs) if self.bin_probs else None,
                features=tuple(self.features) if self.features else None,
            ),
            text=self.text,
        )


class RouteRequest(BaseModel):
    items: list[ScoredItemIn]


class CalibrateRequest(BaseModel):
    data_dir: str
    class_method: str = "LAC"
    reg_method: str = "AR"
    alpha: float = 0.1
    gamma: float = 0.6
    pipeline: str = "MTL"
    format: str = "jsonl"
    cal_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    seed: int = 0
    min_annotators: int = 10
    annotation_method: str = "distance"
    scores_path: str | None = None
    rn_neighbors: int = 25


class PolicyUpdate(BaseModel):
    gamma: float | None = None
    alpha: float | None = None
    class_method: str | None = None
    reg_method: str | None = None


class ModeratorDecision(BaseModel):
    label: int


class EngineState:
    """Mutable service state behind a single writer lock."""

    def __init__(self, log_path: str | Path, calibration_path: str | Path | None = None):
        self.lock = threading.Lock()
        self.log_path = Path(log_path)
        self.calibration_path = Path(calibration_path) if calibration_path else None
        self.bundle: CalibrationBundle | None = None
        self.pairs = None  # retained calibration dataset (labeled, scored) pairs
        self.queue: dict[str, ReviewQueueItem] = {}
        self._replay_log()

    # -- persistence ------------------------------------------------------

    def load_bundle(self, path: str | Path):
        bundle = load_calibration(path)
        pairs = None
        if bundle.data_dir:
            pairs = load_dataset(
                bundle.data_dir,
                format=bundle.data_format,
                min_annotators=bundle.min_annotators,
                method=bundle.annotation_method,
                scores_path=bundle.scores_path,
            )
        with self.lock:
            self.bundle = bundle
            self.pairs = pairs

    def _persist(self):
        if self.calibration_path and self.bundle is not None:
            persist_calibration(self.bundle, self.calibration_path)

    # -- decision log -----------------------------------------------------

    def _replay_log(self):
        if not self.log_path.exists():
            return
        with self.log_path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry["type"] == "route":
                    decision = _decision_from_dict(entry["decision"])
                    if decision.action == REVIEW:
                        self.queue[decision.id] = ReviewQueueItem(
                            id=decision.id,
                            decision=decision,
                            enqueued_at=entry["at"],
                            text=entry.get("text"),
                        )
                elif entry["type"] == "moderate":
                    item = self.queue.get(entry["id"])
                    if item is not None:
                        item.status = "resolved"
                        item.moderator_label = entry["label"]
                        item.resolved_at = entry["at"]

    def _append_log(self, entry: dict):
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with self.log_path.open("a") as fh:
            fh.write(json.dumps(entry) + "\n")


def _policy_view(bundle: CalibrationBundle) -> dict:
    return {
        "gamma": bundle.policy.gamma,
        "alpha": bundle.policy.alpha,
        "pipeline": bundle.policy.pipeline,
        "class_method": bundle.class_calibration.method,
        "reg_method": bundle.reg_calibration.method,
    }


def _queue_item_view(item: ReviewQueueItem) -> dict:
    return {
        "id": item.id,
        "text": item.text,
        "decision": decision_to_dict(item.decision),
        "enqueued_at": item.enqueued_at,
        "status": item.status,
        "moderator_label": item.moderator_label,
        "resolved_at": item.resolved_at,
    }


def _error(status: int, exc: Exception):
    return HTTPException(
        status_code=status,
        detail={"error": type(exc).__name__, "detail": str(exc)},
    )


def create_app(
    log_path: str | Path = "decision_log.jsonl",
    calibration_path: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="comod moderation service")
    state = EngineState(log_path=log_path, calibration_path=calibration_path)
    app.state.engine = state

    if calibration_path and Path(calibration_path).exists():
        state.load_bundle(calibration_path)

    def require_bundle() -> CalibrationBundle:
        bundle = state.bundle
        if bundle is None:
            raise HTTPException(
                status_code=409,
                detail={"error": "NotCalibrated", "detail": "calibrate the service first"},
            )
        return bundle

    @app.post("/v1/route")
    def route_items(request: RouteRequest):
        bundle = require_bundle()
        try:
            scored = [item.to_instance() for item in request.items]
            decisions, summary = route_scored(
                scored,
                bundle.class_calibration,
                bundle.reg_calibration,
                bundle.policy,
            )
        except ModerationError as exc:
            raise _error(422, exc) from exc
        at = _now()
        text_by_id = {item.id: item.text for item in request.items}
        with state.lock:
            for decision in decisions:
                state._append_log(
                    {
                        "type": "route",
                        "at": at,
                        "decision": decision_to_dict(decision),
                        "text": text_by_id.get(decision.id),
                    }
                )
                if decision.action == REVIEW and decision.id not in state.queue:
                    state.queue[decision.id] = ReviewQueueItem(
                        id=decision.id,
                        decision=decision,
                        enqueued_at=at,
                        text=text_by_id.get(decision.id),
                    )
        return {"decisions": [decision_to_dict(d) for d in decisions], "summary": summary}

    @app.post("/v1/calibrate")
    def calibrate(request: CalibrateRequest):
        if request.class_method not in CLASS_METHODS:
            raise HTTPException(422, {"error": "ConfigError", "detail": f"unknown class method {request.class_method}"})
        if request.reg_method not in REG_METHODS:
            raise HTTPException(422, {"error": "ConfigError", "detail": f"unknown reg method {request.reg_method}"})
        try:
            pairs = load_dataset(
                request.data_dir,
                format=request.format,
                min_annotators=request.min_annotators,
                method=request.annotation_method,
                scores_path=request.scores_path,
            )
            policy = RoutingPolicy(
                gamma=request.gamma, alpha=request.alpha, pipeline=request.pipeline
            )
            bundle = calibrate_bundle(
                pairs,
                policy,
                request.class_method,
                request.reg_method,
                cal_fraction=request.cal_fraction,
                seed=request.seed,
                rn_neighbors=request.rn_neighbors,
                data_dir=request.data_dir,
                scores_path=request.scores_path,
                data_format=request.format,
                min_annotators=request.min_annotators,
                annotation_method=request.annotation_method,
            )
        except ModerationError as exc:
            raise _error(422, exc) from exc
        with state.lock:
            state.bundle = bundle
            state.pairs = pairs
            state._persist()
        return {
            "policy": _policy_view(bundle),
            "n_cal": len(bundle.cal_ids),
            "n_eval": len(pairs) - len(bundle.cal_ids),
        }

    @app.get("/v1/policy")
    def get_policy():
        return _policy_view(require_bundle())

    @app.put("/v1/policy")
    def put_policy(update: PolicyUpdate):
        bundle = require_bundle()
        new_policy = RoutingPolicy(
            gamma=update.gamma if update.gamma is not None else bundle.policy.gamma,
            alpha=update.alpha if update.alpha is not None else bundle.policy.alpha,
            pipeline=bundle.policy.pipeline,
        )
        class_method = update.class_method or bundle.class_calibration.method
        reg_method = update.reg_method or bundle.reg_calibration.method
        needs_recal = (
            new_policy.alpha != bundle.policy.alpha
            or class_method != bundle.class_calibration.method
            or reg_method != bundle.reg_calibration.method
        )
        if needs_recal:
            if state.pairs is None:
                raise HTTPException(
                    409,
                    {
                        "error": "NoCalibrationData",
                        "detail": "alpha/method changes need the retained calibration dataset",
                    },
                )
            try:
                from .pipeline import calibrate_class_method, calibrate_reg_method

                cal_set = set(bundle.cal_ids)
                cal_pairs = [p for p in state.pairs if p[0].id in cal_set]
                new_bundle = CalibrationBundle(
                    policy=new_policy,
                    class_calibration=calibrate_class_method(
                        class_method, cal_pairs, new_policy.alpha
                    ),
                    reg_calibration=calibrate_reg_method(
                        reg_method, cal_pairs, new_policy.alpha, bundle.rn_neighbors
                    ),
                    cal_ids=bundle.cal_ids,
                    data_dir=bundle.data_dir,
                    scores_path=bundle.scores_path,
                    data_format=bundle.data_format,
                    min_annotators=bundle.min_annotators,
                    annotation_method=bundle.annotation_method,
                    rn_neighbors=bundle.rn_neighbors,
                )
            except ModerationError as exc:
                raise _error(422, exc) from exc
        else:
            # gamma-only change: calibrations stay valid, only the policy swaps
            new_bundle = CalibrationBundle(
                policy=new_policy,
                class_calibration=bundle.class_calibration,
                reg_calibration=bundle.reg_calibration,
                cal_ids=bundle.cal_ids,
                data_dir=bundle.data_dir,
                scores_path=bundle.scores_path,
                data_format=bundle.data_format,
                min_annotators=bundle.min_annotators,
                annotation_method=bundle.annotation_method,
                rn_neighbors=bundle.rn_neighbors,
            )
        with state.lock:
            state.bundle = new_bundle
            state._persist()
        return _policy_view(new_bundle)

    @app.get("/v1/queue")
    def get_queue(
        status: str = Query(default="pending"),
        limit: int = Query(default=50, ge=1, le=500),
        offset: int = Query(default=0, ge=0),
    ):
        if status not in ("pending", "resolved", "all"):
            raise HTTPException(422, {"error": "ConfigError", "detail": f"unknown status {status!r}"})
        items = [
            item
            for item in state.queue.values()
            if status == "all" or item.status == status
        ]
        items.sort(key=lambda item: item.enqueued_at)
        page = items[offset : offset + limit]
        return {
            "items": [_queue_item_view(item) for item in page],
            "total": len(items),
            "offset": offset,
        }

    @app.post("/v1/queue/{item_id}/decision")
    def moderate(item_id: str, decision: ModeratorDecision):
        if decision.label not in (0, 1):
            raise HTTPException(422, {"error": "DomainError", "detail": "label must be 0 or 1"})
        with state.lock:
            item = state.queue.get(item_id)
            if item is None:
                raise HTTPException(404, {"error": "UnknownItem", "detail": item_id})
            if item.status == "resolved":
                raise HTTPException(
                    409, {"error": "AlreadyResolved", "detail": item_id}
                )
            at = _now()
            item.status = "resolved"
            item.moderator_label = decision.label
            item.resolved_at = at
            state._append_log(
                {"type": "moderate", "at": at, "id": item_id, "label": decision.label}
            )
        return _queue_item_view(item)

    @app.get("/v1/metrics")
    def get_metrics(target_tpr: float | None = Query(default=None, gt=0.0, le=1.0)):
        bundle = require_bundle()
        if state.pairs is None:
            raise HTTPException(
                409,
                {"error": "NoCalibrationData", "detail": "no evaluation dataset retained"},
            )
        try:
            report = evaluate_bundle(bundle, state.pairs, target_tpr=target_tpr)
        except ModerationError as exc:
            raise _error(422, exc) from exc
        return report.as_dict()

    @app.get("/v1/preview")
    def preview(
        gamma: float = Query(ge=0.0, le=1.0),
        alpha: float | None = Query(default=None, gt=0.0, lt=1.0),
    ):
        bundle = require_bundle()
        if state.pairs is None:
            raise HTTPException(
                409,
                {"error": "NoCalibrationData", "detail": "no evaluation dataset retained"},
            )
        candidate_policy = RoutingPolicy(
            gamma=gamma,
            alpha=alpha if alpha is not None else bundle.policy.alpha,
            pipeline=bundle.policy.pipeline,
        )
        try:
            candidate_bundle = bundle
            if candidate_policy.alpha != bundle.policy.alpha:
                candidate_bundle = recalibrate_bundle(bundle, state.pairs, candidate_policy)
            eval_scored = [s for _, s in eval_pairs_of(bundle, state.pairs)]
            _, current_counts = route_scored(
                eval_scored,
                bundle.class_calibration,
                bundle.reg_calibration,
                bundle.policy,
            )
            _, candidate_counts = route_scored(
                eval_scored,
                candidate_bundle.class_calibration,
                candidate_bundle.reg_calibration,
                candidate_policy,
            )
        except ModerationError as exc:
            raise _error(422, exc) from exc
        return {
            "current": {"policy": _policy_view(bundle), "counts": current_counts},
            "candidate": {
                "policy": {
                    "gamma": candidate_policy.gamma,
                    "alpha": candidate_policy.alpha,
                    "pipeline": candidate_policy.pipeline,
                    "class_method": candidate_bundle.class_calibration.method,
                    "reg_method": candidate_bundle.reg_calibration.method,
                },
                "counts": candidate_counts,
            },
            "n": len(eval_scored),
        }

    return app
