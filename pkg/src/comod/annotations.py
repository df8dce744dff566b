"""Turn raw annotator votes into labels and disagreement scores.

Each comment arrives with a list of binary toxicity votes. From those we
derive the majority label, the mean annotation rate, and a disagreement
score in [0, 1] computed either as a scaled distance from the 50/50 split
or as the binary entropy of the vote mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, EmptyAnnotations

DISAGREEMENT_METHODS = ("distance", "entropy")


@dataclass(frozen=True)
class AnnotationRecord:
    """Raw votes for one comment. Votes are 1 (toxic) or 0 (non-toxic)."""

    id: str
    votes: tuple[int, ...]
    text: str | None = None

    def __post_init__(self):
        if len(self.votes) == 0:
            raise EmptyAnnotations(f"record {self.id!r} has no votes")
        if any(v not in (0, 1) for v in self.votes):
            raise DomainError(f"record {self.id!r} has votes outside {{0, 1}}")


@dataclass(frozen=True)
class LabeledInstance:
    """Derived (label, vote mean, disagreement) triple for one comment."""

    id: str
    y: int
    a_mean: float
    d: float
    annotator_count: int
    text: str | None = None


def mean_annotation(record: AnnotationRecord) -> float:
    """Fraction of annotators who voted toxic."""
    return sum(record.votes) / len(record.votes)


def majority_label(record: AnnotationRecord) -> int:
    """Majority vote; an exact tie resolves to toxic (1).

    The tie is the point of maximum disagreement, so tied items carry
    d = 1 and are flagged for review regardless of the label chosen here.
    """
    return 1 if mean_annotation(record) >= 0.5 else 0


def disagreement_distance(a_mean: float) -> float:
    """Disagreement as scaled distance from the even split: 1 - 2*|a - 0.5|."""
    if not 0.0 <= a_mean <= 1.0:
        raise DomainError(f"a_mean must lie in [0, 1], got {a_mean}")
    return 1.0 - 2.0 * abs(a_mean - 0.5)


def disagreement_entropy(a_mean: float) -> float:
    """Disagreement as binary entropy of the vote mean, with 0*log2(0) := 0."""
    if not 0.0 <= a_mean <= 1.0:
        raise DomainError(f"a_mean must lie in [0, 1], got {a_mean}")
    if a_mean in (0.0, 1.0):
        return 0.0
    return -a_mean * math.log2(a_mean) - (1.0 - a_mean) * math.log2(1.0 - a_mean)


def filter_min_annotators(
    records: list[AnnotationRecord], k: int
) -> list[AnnotationRecord]:
    """Keep records with at least k votes, preserving order."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    return [r for r in records if len(r.votes) >= k]


def build_labeled(record: AnnotationRecord, method: str = "distance") -> LabeledInstance:
    """Compose mean, majority label and the chosen disagreement measure."""
    if method not in DISAGREEMENT_METHODS:
        raise DomainError(f"unknown disagreement method {method!r}")
    a_mean = mean_annotation(record)
    d = disagreement_distance(a_mean) if method == "distance" else disagreement_entropy(a_mean)
    return LabeledInstance(
        id=record.id,
        y=majority_label(record),
        a_mean=a_mean,
        d=d,
        annotator_count=len(record.votes),
        text=record.text,
    )
