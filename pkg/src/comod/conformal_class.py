"""Split-conformal prediction sets for the binary toxicity classifier.

Three set constructions over softmax probabilities, all calibrated on a
held-out split:

* LAC: score one minus the probability of the true label, a single quantile.
* CCLAC: the LAC score quantiled separately per true class. Note the class
  membership rule follows the score form (include y when 1 - p(y;x) <= q_y),
  which is the version that carries the per-class coverage guarantee.
* CRC: a threshold swept so the false negative rate stays below alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (
    CalibrationMismatch,
    DomainError,
    EmptyCalibration,
    InfeasibleRisk,
    InvalidProbability,
    MissingClass,
)

TOXIC = 1
NONTOXIC = 0
LABELS = (NONTOXIC, TOXIC)

PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class ClassProbs:
    """Softmax output of the classifier; renormalized when off by < 1e-6."""

    p_toxic: float
    p_nontoxic: float

    def __post_init__(self):
        if not (0.0 <= self.p_toxic <= 1.0 + PROB_SUM_TOL and 0.0 <= self.p_nontoxic <= 1.0 + PROB_SUM_TOL):
            raise InvalidProbability(
                f"probabilities out of range: ({self.p_toxic}, {self.p_nontoxic})"
            )
        total = self.p_toxic + self.p_nontoxic
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise InvalidProbability(
                f"class probabilities sum to {total}, beyond tolerance {PROB_SUM_TOL}"
            )
        if total != 1.0:
            object.__setattr__(self, "p_toxic", self.p_toxic / total)
            object.__setattr__(self, "p_nontoxic", self.p_nontoxic / total)

    @classmethod
    def from_toxic(cls, p_toxic: float) -> "ClassProbs":
        return cls(p_toxic=p_toxic, p_nontoxic=1.0 - p_toxic)

    def prob_of(self, label: int) -> float:
        return self.p_toxic if label == TOXIC else self.p_nontoxic


@dataclass(frozen=True)
class PredictionSet:
    """Conformal label set; anything but a singleton counts as uncertain."""

    members: frozenset[int]

    def __post_init__(self):
        if not self.members <= set(LABELS):
            raise DomainError(f"set members outside label alphabet: {self.members}")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def uncertain(self) -> bool:
        return len(self.members) != 1

    @property
    def singleton_label(self) -> int | None:
        """The single member when certain, else None."""
        if len(self.members) == 1:
            return next(iter(self.members))
        return None


@dataclass(frozen=True)
class ClassCalibration:
    """Frozen calibration state for one classification CP method."""

    method: str  # "LAC" | "CCLAC" | "CRC"
    alpha: float
    n_cal: int
    q_hat: float | None = None
    q_hat_per_class: dict[int, float] | None = field(default=None)
    lambda_hat: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_cal < 1:
            raise DomainError("n_cal must be positive")
        populated = {
            "LAC": self.q_hat is not None,
            "CCLAC": self.q_hat_per_class is not None,
            "CRC": self.lambda_hat is not None,
        }
        if self.method not in populated:
            raise DomainError(f"unknown method {self.method!r}")
        if not populated[self.method]:
            raise DomainError(f"{self.method} calibration missing its threshold field")


# Guards against float noise in (n+1)*(1-alpha); far below any rank gap that
# matters for n up to ~1e6, far above accumulated rounding error.
_RANK_NUDGE = 1e-9


def conformal_quantile(scores: list[float], alpha: float) -> float:
    """The ceil((n+1)(1-alpha))-th smallest score; +inf when the rank overflows n.

    The order-statistic form of the split-conformal quantile: the returned
    value, used as an inclusive threshold, yields marginal coverage >= 1-alpha
    under exchangeability.
    """
    n = len(scores)
    if n == 0:
        raise EmptyCalibration("cannot take a conformal quantile of zero scores")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    rank = math.ceil((n + 1) * (1.0 - alpha) - _RANK_NUDGE)
    if rank > n:
        return math.inf
    return sorted(scores)[rank - 1]


def calibrate_lac(cal: list[tuple[ClassProbs, int]], alpha: float) -> ClassCalibration:
    """Quantile of one minus the probability assigned to the true label."""
    if not cal:
        raise EmptyCalibration("LAC calibration needs at least one example")
    scores = [1.0 - probs.prob_of(y) for probs, y in cal]
    return ClassCalibration(
        method="LAC", alpha=alpha, n_cal=len(cal), q_hat=conformal_quantile(scores, alpha)
    )


def predict_set_lac(calib: ClassCalibration, probs: ClassProbs) -> PredictionSet:
    if calib.method != "LAC":
        raise CalibrationMismatch(f"expected LAC calibration, got {calib.method}")
    members = frozenset(y for y in LABELS if probs.prob_of(y) >= 1.0 - calib.q_hat)
    return PredictionSet(members=members)


def calibrate_cclac(cal: list[tuple[ClassProbs, int]], alpha: float) -> ClassCalibration:
    """Per-class LAC quantiles; every class must appear in the calibration set."""
    if not cal:
        raise EmptyCalibration("CCLAC calibration needs at least one example")
    per_class: dict[int, float] = {}
    for label in LABELS:
        scores = [1.0 - probs.prob_of(y) for probs, y in cal if y == label]
        if not scores:
            raise MissingClass(f"class {label} absent from calibration data")
        per_class[label] = conformal_quantile(scores, alpha)
    return ClassCalibration(
        method="CCLAC", alpha=alpha, n_cal=len(cal), q_hat_per_class=per_class
    )


def predict_set_cclac(calib: ClassCalibration, probs: ClassProbs) -> PredictionSet:
    if calib.method != "CCLAC":
        raise CalibrationMismatch(f"expected CCLAC calibration, got {calib.method}")
    members = frozenset(
        y for y in LABELS if 1.0 - probs.prob_of(y) <= calib.q_hat_per_class[y]
    )
    return PredictionSet(members=members)


def _fnr_at(lam: float, true_probs: list[float]) -> float:
    """Empirical false negative rate of the sets {y: p(y;x) >= lam}."""
    hits = sum(1 for p in true_probs if p >= lam)
    return 1.0 - hits / len(true_probs)


def calibrate_crc(cal: list[tuple[ClassProbs, int]], alpha: float) -> ClassCalibration:
    """Largest threshold keeping the corrected FNR bound (n*L + 1)/(n+1) <= alpha.

    L(lam) is a step function of the threshold, changing only where lam
    crosses a calibration probability, so sweeping the distinct calibration
    probabilities plus {0, 1} in descending order visits every level.
    """
    if not cal:
        raise EmptyCalibration("CRC calibration needs at least one example")
    n = len(cal)
    true_probs = [probs.prob_of(y) for probs, y in cal]
    candidates = {0.0, 1.0}
    for probs, _ in cal:
        candidates.add(probs.p_toxic)
        candidates.add(probs.p_nontoxic)
    for lam in sorted(candidates, reverse=True):
        bound = (n * _fnr_at(lam, true_probs) + 1.0) / (n + 1)
        if bound <= alpha + 1e-12:
            return ClassCalibration(method="CRC", alpha=alpha, n_cal=n, lambda_hat=lam)
    raise InfeasibleRisk(
        f"no threshold satisfies the FNR bound at alpha={alpha} with n={n}; "
        f"need alpha >= 1/(n+1) = {1.0 / (n + 1):.4g}"
    )


def predict_set_crc(calib: ClassCalibration, probs: ClassProbs) -> PredictionSet:
    if calib.method != "CRC":
        raise CalibrationMismatch(f"expected CRC calibration, got {calib.method}")
    members = frozenset(y for y in LABELS if probs.prob_of(y) >= calib.lambda_hat)
    return PredictionSet(members=members)
