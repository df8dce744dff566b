"""Evaluation metrics for the collaborative review process.

Beyond the usual classification/regression scores this module carries the
review-efficiency suite: MURE (precision of uncertainty flags against actual
misclassifications), CARE (recall of ambiguity flags against truly ambiguous
comments), their harmonic mean, the point-biserial correlation between flags
and disagreement, and the FPR-at-TPR threshold selection used to compare
flagging rules across models.

Metrics that are undefined on a given record set raise UndefinedMetric; the
report assembler turns those into explicit null entries rather than zeros.
The one exception is the distance-to-interval, which is zero with a flag
when every true value is covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .conformal_class import PredictionSet
from .conformal_reg import Interval
from .errors import EmptyDataset, UndefinedMetric, UnreachableTarget

ECE_BINS = 15


@dataclass(frozen=True)
class EvalRecord:
    """Everything the metric suite needs about one test comment."""

    id: str
    y: int
    y_hat: int
    p_toxic: float
    set: PredictionSet
    d: float
    d_hat: float
    interval: Interval


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate evaluation record. None marks an undefined metric."""

    n: int
    alpha: float
    gamma: float
    f1: float | None = None
    log_loss: float | None = None
    ece: float | None = None
    ace: float | None = None
    marginal_coverage: float | None = None
    certainty_f1: float | None = None
    mean_set_size: float | None = None
    mure: float | None = None
    care: float | None = None
    review_f1: float | None = None
    r_pb: float | None = None
    mae: float | None = None
    mse: float | None = None
    icp: float | None = None
    mean_interval_size: float | None = None
    di: float = 0.0
    di_defined: bool = False
    r_interval_d: float | None = None
    fpr_at_tpr: float | None = None
    flag_threshold: float | None = None
    target_tpr: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    def defined_status(self) -> dict[str, bool]:
        """Which metrics are defined on this record set (di uses its flag)."""
        skip = {"n", "alpha", "gamma", "di_defined", "target_tpr"}
        out = {}
        for name, value in asdict(self).items():
            if name in skip:
                continue
            out[name] = self.di_defined if name == "di" else value is not None
        return out


def _require_records(records):
    if not records:
        raise EmptyDataset("metrics need at least one record")


def mure(records: list[EvalRecord]) -> float:
    """Precision of uncertainty flags: P(misclassified | flagged uncertain)."""
    flagged = [r for r in records if r.set.uncertain]
    if not flagged:
        raise UndefinedMetric("no records were flagged uncertain")
    tp = sum(1 for r in flagged if r.y != r.y_hat)
    return tp / len(flagged)


def care(records: list[EvalRecord], gamma: float) -> float:
    """Recall of ambiguity flags among truly ambiguous comments (d >= gamma).

    A comment counts as predicted ambiguous when its interval's upper bound
    reaches gamma.
    """
    ambiguous = [r for r in records if r.d >= gamma]
    if not ambiguous:
        raise UndefinedMetric(f"no records with d >= {gamma}")
    tp = sum(1 for r in ambiguous if r.interval.hi >= gamma)
    return tp / len(ambiguous)


def review_f1(mure_value: float, care_value: float) -> float:
    """Harmonic mean of MURE and CARE; zero when both are zero."""
    if mure_value + care_value == 0.0:
        return 0.0
    return 2.0 * mure_value * care_value / (mure_value + care_value)


def point_biserial(flags: list[int], d_values: list[float]) -> float:
    """Correlation between a binary flag and disagreement.

    (M1 - M0) / sigma(d) * sqrt(n1 * n0 / n^2) with the population standard
    deviation; positive when flagged items carry higher disagreement.
    """
    if len(flags) != len(d_values):
        raise UndefinedMetric("flags and values must align")
    flags_arr = np.asarray(flags)
    d = np.asarray(d_values, dtype=float)
    n1 = int((flags_arr == 1).sum())
    n0 = int((flags_arr == 0).sum())
    if n1 == 0 or n0 == 0:
        raise UndefinedMetric("both flag groups must be non-empty")
    sigma = float(d.std())
    if sigma == 0.0:
        raise UndefinedMetric("disagreement values have zero variance")
    m1 = float(d[flags_arr == 1].mean())
    m0 = float(d[flags_arr == 0].mean())
    n = len(d)
    return (m1 - m0) / sigma * math.sqrt(n1 * n0 / n**2)


def _f1(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def _calibration_error(confidences, correct, bin_edges) -> float:
    """Mean |accuracy - confidence| over bins, weighted by bin mass."""
    total = len(confidences)
    err = 0.0
    n_bins = len(bin_edges) - 1
    for i in range(n_bins):
        lo, hi = bin_edges[i], bin_edges[i + 1]
        if i == n_bins - 1:
            mask = (confidences >= lo) & (confidences <= hi)
        else:
            mask = (confidences >= lo) & (confidences < hi)
        if not mask.any():
            continue
        acc = correct[mask].mean()
        conf = confidences[mask].mean()
        err += (mask.sum() / total) * abs(acc - conf)
    return float(err)


def classification_metrics(records: list[EvalRecord]) -> tuple[float, float, float, float]:
    """(f1, log_loss, ece, ace) of the point classifier.

    ECE bins confidence = max(p, 1-p) into 15 equal-width bins on [0.5, 1];
    ACE uses 15 equal-mass bins over the sorted confidences.
    """
    _require_records(records)
    y = np.array([r.y for r in records])
    y_hat = np.array([r.y_hat for r in records])
    p = np.array([r.p_toxic for r in records])

    f1 = _f1(y, y_hat)

    p_clamped = np.clip(p, 1e-12, 1.0 - 1e-12)
    log_loss = float(-(y * np.log(p_clamped) + (1 - y) * np.log(1 - p_clamped)).mean())

    confidences = np.maximum(p, 1.0 - p)
    predicted = (p >= 0.5).astype(int)
    correct = (predicted == y).astype(float)

    ece = _calibration_error(confidences, correct, np.linspace(0.5, 1.0, ECE_BINS + 1))

    order = np.argsort(confidences, kind="stable")
    ace = 0.0
    for chunk in np.array_split(order, ECE_BINS):
        if len(chunk) == 0:
            continue
        ace += (len(chunk) / len(records)) * abs(
            correct[chunk].mean() - confidences[chunk].mean()
        )
    return f1, log_loss, ece, float(ace)


def set_metrics(records: list[EvalRecord]) -> tuple[float, float, float]:
    """(marginal_coverage, certainty_f1, mean_set_size) of the prediction sets."""
    _require_records(records)
    coverage = sum(1 for r in records if r.y in r.set.members) / len(records)
    mean_size = sum(r.set.size for r in records) / len(records)
    certain = [r for r in records if r.set.size == 1]
    if not certain:
        raise UndefinedMetric("no records with a singleton prediction set")
    certainty_f1 = _f1(
        [r.y for r in certain], [r.set.singleton_label for r in certain]
    )
    return coverage, certainty_f1, mean_size


def interval_metrics(records: list[EvalRecord]) -> tuple[float, float, float, bool, float]:
    """(icp, mean_interval_size, di, di_defined, r_interval_d).

    di averages the distance to the nearest interval edge over uncovered
    records only; with full coverage it is reported as 0 with di_defined
    False. r_interval_d is the Pearson correlation between interval width
    and true disagreement and is undefined under zero variance.
    """
    _require_records(records)
    icp = sum(1 for r in records if r.interval.contains(r.d)) / len(records)
    widths = np.array([r.interval.width for r in records])
    mean_size = float(widths.mean())

    outside = [r for r in records if not r.interval.contains(r.d)]
    if outside:
        di = sum(min(abs(r.d - r.interval.lo), abs(r.d - r.interval.hi)) for r in outside)
        di /= len(outside)
        di_defined = True
    else:
        di, di_defined = 0.0, False

    d = np.array([r.d for r in records])
    if widths.std() == 0.0 or d.std() == 0.0:
        raise UndefinedMetric("interval widths or disagreement have zero variance")
    r_interval_d = float(np.corrcoef(widths, d)[0, 1])
    return icp, mean_size, float(di), di_defined, r_interval_d


def regression_metrics(records: list[EvalRecord]) -> tuple[float, float]:
    """(mae, mse) of the disagreement point estimate."""
    _require_records(records)
    errs = np.array([r.d - r.d_hat for r in records])
    return float(np.abs(errs).mean()), float((errs**2).mean())


def threshold_at_tpr(
    records: list[EvalRecord], target_tpr: float, gamma: float
) -> tuple[float, float]:
    """Largest flagging threshold whose TPR reaches the target, plus its FPR.

    Items are flagged when interval.hi >= threshold; positives are the truly
    ambiguous items (d >= gamma). The sweep walks the distinct upper bounds
    downward, then 0.
    """
    if not 0.0 < target_tpr <= 1.0:
        raise UndefinedMetric(f"target TPR must lie in (0, 1], got {target_tpr}")
    positives = [r for r in records if r.d >= gamma]
    negatives = [r for r in records if r.d < gamma]
    if not positives:
        raise UndefinedMetric(f"no records with d >= {gamma}")
    candidates = sorted({r.interval.hi for r in records} | {0.0}, reverse=True)
    for threshold in candidates:
        tpr = sum(1 for r in positives if r.interval.hi >= threshold) / len(positives)
        if tpr >= target_tpr:
            if negatives:
                fpr = sum(1 for r in negatives if r.interval.hi >= threshold) / len(negatives)
            else:
                fpr = 0.0
            return threshold, fpr
    raise UnreachableTarget(
        f"TPR {target_tpr} not reachable even with every item flagged"
    )


def compute_report(
    records: list[EvalRecord],
    alpha: float,
    gamma: float,
    target_tpr: float | None = None,
) -> MetricsReport:
    """Assemble the full report, recording undefined metrics as None."""
    _require_records(records)

    def guarded(fn, *args):
        try:
            return fn(*args)
        except UndefinedMetric:
            return None

    f1, log_loss, ece, ace = classification_metrics(records)
    sets = guarded(set_metrics, records)
    if sets is None:
        coverage = sum(1 for r in records if r.y in r.set.members) / len(records)
        mean_size = sum(r.set.size for r in records) / len(records)
        certainty_f1 = None
    else:
        coverage, certainty_f1, mean_size = sets

    mure_value = guarded(mure, records)
    care_value = guarded(care, records, gamma)
    rf1 = (
        review_f1(mure_value, care_value)
        if mure_value is not None and care_value is not None
        else None
    )
    flags = [1 if r.set.uncertain else 0 for r in records]
    r_pb = guarded(point_biserial, flags, [r.d for r in records])

    mae, mse = regression_metrics(records)
    try:
        icp, mean_width, di, di_defined, r_interval_d = interval_metrics(records)
    except UndefinedMetric:
        icp = sum(1 for r in records if r.interval.contains(r.d)) / len(records)
        mean_width = float(np.mean([r.interval.width for r in records]))
        outside = [r for r in records if not r.interval.contains(r.d)]
        if outside:
            di = sum(
                min(abs(r.d - r.interval.lo), abs(r.d - r.interval.hi)) for r in outside
            ) / len(outside)
            di_defined = True
        else:
            di, di_defined = 0.0, False
        r_interval_d = None

    threshold = fpr = None
    if target_tpr is not None:
        try:
            threshold, fpr = threshold_at_tpr(records, target_tpr, gamma)
        except (UndefinedMetric, UnreachableTarget):
            threshold = fpr = None

    return MetricsReport(
        n=len(records),
        alpha=alpha,
        gamma=gamma,
        f1=f1,
        log_loss=log_loss,
        ece=ece,
        ace=ace,
        marginal_coverage=coverage,
        certainty_f1=certainty_f1,
        mean_set_size=mean_size,
        mure=mure_value,
        care=care_value,
        review_f1=rf1,
        r_pb=r_pb,
        mae=mae,
        mse=mse,
        icp=icp,
        mean_interval_size=mean_width,
        di=di,
        di_defined=di_defined,
        r_interval_d=r_interval_d,
        fpr_at_tpr=fpr,
        flag_threshold=threshold,
        target_tpr=target_tpr,
    )
