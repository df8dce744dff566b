"""Per-comment routing: automatic action or human review.

A comment goes to a human when the conformal label set is not a confident
singleton (empty sets count as a confidence failure) or when the upper end
of the disagreement interval reaches the moderator's ambiguity threshold.
Otherwise the singleton label acts directly: toxic comments are removed,
non-toxic ones published.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .conformal_class import PredictionSet
from .conformal_reg import Interval
from .errors import ConfigError, PolicyError

PIPELINES = ("STL", "CoM", "MTL")

AUTO_PUBLISH = "auto_publish"
AUTO_REMOVE = "auto_remove"
REVIEW = "review"

REASON_UNCERTAIN = "uncertain"
REASON_AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class RoutingPolicy:
    """Moderator-controlled knobs: ambiguity threshold, miscoverage level,
    and which pipeline is active (STL routes on the label set alone)."""

    gamma: float
    alpha: float
    pipeline: str = "MTL"

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")


@dataclass(frozen=True)
class RoutingDecision:
    id: str
    action: str
    reasons: frozenset[str]
    set_size: int
    label: int | None = None
    interval: Interval | None = None

    def __post_init__(self):
        if (self.action == REVIEW) != bool(self.reasons):
            raise PolicyError("review decisions and non-empty reasons must coincide")
        if self.action == AUTO_PUBLISH and self.label != 0:
            raise PolicyError("auto_publish requires label 0")
        if self.action == AUTO_REMOVE and self.label != 1:
            raise PolicyError("auto_remove requires label 1")


def route(
    prediction_set: PredictionSet,
    interval: Interval | None,
    policy: RoutingPolicy,
    id: str = "",
) -> RoutingDecision:
    """Apply the review-process decision rule to one comment."""
    if interval is None and policy.pipeline != "STL":
        raise PolicyError(
            f"{policy.pipeline} routing needs a disagreement interval for {id!r}"
        )
    reasons = set()
    if prediction_set.uncertain:
        reasons.add(REASON_UNCERTAIN)
    if interval is not None and interval.hi >= policy.gamma:
        reasons.add(REASON_AMBIGUOUS)

    if reasons:
        return RoutingDecision(
            id=id,
            action=REVIEW,
            reasons=frozenset(reasons),
            set_size=prediction_set.size,
            interval=interval,
        )
    label = prediction_set.singleton_label
    return RoutingDecision(
        id=id,
        action=AUTO_REMOVE if label == 1 else AUTO_PUBLISH,
        reasons=frozenset(),
        set_size=prediction_set.size,
        label=label,
        interval=interval,
    )


def route_batch(
    records: list[tuple[str, PredictionSet, Interval | None]],
    policy: RoutingPolicy,
) -> tuple[list[RoutingDecision], dict[str, int]]:
    """Route records in order and tally actions and reasons."""
    decisions = []
    for record_id, prediction_set, interval in records:
        try:
            decisions.append(route(prediction_set, interval, policy, id=record_id))
        except PolicyError as exc:
            raise PolicyError(f"record {record_id!r}: {exc}") from exc
    summary = Counter(d.action for d in decisions)
    for d in decisions:
        for reason in d.reasons:
            summary[f"reason_{reason}"] += 1
    for key in (AUTO_PUBLISH, AUTO_REMOVE, REVIEW, "reason_uncertain", "reason_ambiguous"):
        summary.setdefault(key, 0)
    return decisions, dict(summary)
