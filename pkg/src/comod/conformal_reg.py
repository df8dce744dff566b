"""Conformal intervals for the annotation-disagreement estimate.

Four interval constructions over a regressor's point estimate d_hat in [0, 1]:

* AR: absolute residual scores, a fixed-width interval.
* Gamma: residuals normalized by the prediction, a multiplicative interval.
* RN: residuals normalized by a frozen k-nearest-neighbor estimate of the
  local residual magnitude.
* R2CCP: the regression-as-classification route over B bins, intervals from
  the span of bins whose probability clears a low-tail quantile.

Division floors: predictions and residual estimates are floored at epsilon
both when scoring and when widening intervals, so interval membership stays
exactly equivalent to `score <= q_hat` (the equivalence the coverage
guarantee rides on) even at degenerate points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conformal_class import _RANK_NUDGE, conformal_quantile
from .errors import (
    CalibrationMismatch,
    ConfigError,
    DomainError,
    EmptyCalibration,
    InvalidProbability,
    SchemaError,
)

EPSILON = 1e-6
DEFAULT_BINS = 20
DEFAULT_KNN_NEIGHBORS = 25


def default_bin_centers(n_bins: int = DEFAULT_BINS) -> tuple[float, ...]:
    """Centers of n_bins equal-width bins on [0, 1]."""
    return tuple((i + 0.5) / n_bins for i in range(n_bins))


@dataclass(frozen=True)
class RegOutput:
    """Regressor output for one comment.

    bin_probs is the softmax over disagreement bins (regression-as-
    classification head); features feed the RN residual model.
    """

    d_hat: float
    bin_probs: tuple[float, ...] | None = None
    features: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.d_hat <= 1.0:
            raise DomainError(f"d_hat must lie in [0, 1], got {self.d_hat}")
        if self.bin_probs is not None:
            if len(self.bin_probs) < 2:
                raise SchemaError("bin_probs needs at least two bins")
            if any(p < 0.0 for p in self.bin_probs):
                raise InvalidProbability("bin_probs must be non-negative")
            total = sum(self.bin_probs)
            if abs(total - 1.0) > 1e-6:
                raise InvalidProbability(
                    f"bin_probs sum to {total}, beyond tolerance 1e-06"
                )


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise DomainError(f"interval bounds out of order: [{self.lo}, {self.hi}]")

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


class ResidualKnn:
    """Frozen k-nearest-neighbor regressor over calibration residuals.

    Euclidean distance, uniform weights. `exclude` drops one calibration
    index from the neighbor pool (leave-self-out scoring).
    """

    def __init__(self, features: np.ndarray, residuals: np.ndarray, k: int):
        features = np.asarray(features, dtype=float)
        residuals = np.asarray(residuals, dtype=float)
        if features.ndim != 2 or len(features) != len(residuals):
            raise SchemaError("features must be (n, f) aligned with residuals")
        if not 1 <= k <= len(residuals):
            raise ConfigError(f"k={k} must lie in [1, n_cal={len(residuals)}]")
        self.features = features
        self.residuals = residuals
        self.k = k

    def predict(self, x, exclude: int | None = None) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.features.shape[1],):
            raise SchemaError(
                f"feature vector of length {x.shape}, model expects {self.features.shape[1]}"
            )
        dist = np.sqrt(((self.features - x) ** 2).sum(axis=1))
        if exclude is not None:
            dist = dist.copy()
            dist[exclude] = np.inf
        k = min(self.k, int(np.isfinite(dist).sum()))
        # distance ties break on calibration index, and the mean runs as a
        # sequential sum in neighbor order, keeping results bit-reproducible
        order = np.lexsort((np.arange(len(dist)), dist))
        chosen = self.residuals[order[:k]].tolist()
        return sum(chosen) / len(chosen)

    def __eq__(self, other):
        return (
            isinstance(other, ResidualKnn)
            and self.k == other.k
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.residuals, other.residuals)
        )


@dataclass(frozen=True)
class RegCalibration:
    """Frozen calibration state for one regression CP method."""

    method: str  # "AR" | "G" | "RN" | "R2CCP"
    alpha: float
    q_hat: float
    epsilon: float = EPSILON
    residual_model: ResidualKnn | None = None
    bin_centers: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.method not in ("AR", "G", "RN", "R2CCP"):
            raise DomainError(f"unknown method {self.method!r}")
        if self.q_hat < 0.0:
            raise DomainError("q_hat must be non-negative")
        if self.method == "RN" and self.residual_model is None:
            raise DomainError("RN calibration requires its residual model")
        if self.method == "R2CCP" and self.bin_centers is None:
            raise DomainError("R2CCP calibration requires bin centers")
        if self.bin_centers is not None:
            centers = self.bin_centers
            ordered = all(a < b for a, b in zip(centers, centers[1:]))
            if not ordered or centers[0] < 0.0 or centers[-1] > 1.0:
                raise DomainError("bin centers must be strictly increasing within [0, 1]")


def _clip_unit(lo: float, hi: float) -> Interval:
    return Interval(lo=min(max(lo, 0.0), 1.0), hi=min(max(hi, 0.0), 1.0))


def _require(calib: RegCalibration, method: str):
    if calib.method != method:
        raise CalibrationMismatch(f"expected {method} calibration, got {calib.method}")


def calibrate_ar(cal: list[tuple[RegOutput, float]], alpha: float) -> RegCalibration:
    """Absolute-residual scores |d - d_hat|."""
    if not cal:
        raise EmptyCalibration("AR calibration needs at least one example")
    scores = [abs(d - out.d_hat) for out, d in cal]
    return RegCalibration(method="AR", alpha=alpha, q_hat=conformal_quantile(scores, alpha))


def interval_ar(calib: RegCalibration, d_hat: float) -> Interval:
    _require(calib, "AR")
    return _clip_unit(d_hat - calib.q_hat, d_hat + calib.q_hat)


def calibrate_gamma(
    cal: list[tuple[RegOutput, float]], alpha: float, epsilon: float = EPSILON
) -> RegCalibration:
    """Prediction-normalized scores |d - d_hat| / max(d_hat, epsilon)."""
    if not cal:
        raise EmptyCalibration("Gamma calibration needs at least one example")
    scores = [abs(d - out.d_hat) / max(out.d_hat, epsilon) for out, d in cal]
    return RegCalibration(
        method="G", alpha=alpha, q_hat=conformal_quantile(scores, alpha), epsilon=epsilon
    )


def interval_gamma(calib: RegCalibration, d_hat: float) -> Interval:
    _require(calib, "G")
    if math.isinf(calib.q_hat):
        return Interval(lo=0.0, hi=1.0)
    scale = max(d_hat, calib.epsilon)
    return _clip_unit(d_hat - calib.q_hat * scale, d_hat + calib.q_hat * scale)


def _feature_matrix(outputs: list[RegOutput]) -> np.ndarray:
    """Stack feature vectors; fall back to the single feature [d_hat].

    A mix of present and absent feature vectors is a schema violation, as is
    a ragged feature length.
    """
    present = [out.features is not None for out in outputs]
    if any(present) and not all(present):
        raise SchemaError("some records carry features and some do not")
    if all(present):
        lengths = {len(out.features) for out in outputs}
        if len(lengths) != 1:
            raise SchemaError(f"inconsistent feature lengths: {sorted(lengths)}")
        return np.array([out.features for out in outputs], dtype=float)
    return np.array([[out.d_hat] for out in outputs], dtype=float)


def calibrate_rn(
    cal: list[tuple[RegOutput, float]],
    alpha: float,
    k: int = DEFAULT_KNN_NEIGHBORS,
    epsilon: float = EPSILON,
) -> RegCalibration:
    """Residuals normalized by a KNN estimate of the local residual size.

    Calibration scores use leave-self-out neighbors so an item never
    normalizes by its own residual.
    """
    if not cal:
        raise EmptyCalibration("RN calibration needs at least one example")
    if k > len(cal):
        raise ConfigError(f"k={k} exceeds calibration size {len(cal)}")
    outputs = [out for out, _ in cal]
    features = _feature_matrix(outputs)
    residuals = np.array([abs(d - out.d_hat) for out, d in cal])
    model = ResidualKnn(features, residuals, k)
    scores = [
        residuals[i] / max(model.predict(features[i], exclude=i), epsilon)
        for i in range(len(cal))
    ]
    return RegCalibration(
        method="RN",
        alpha=alpha,
        q_hat=conformal_quantile(scores, alpha),
        epsilon=epsilon,
        residual_model=model,
    )


def interval_rn(calib: RegCalibration, output: RegOutput) -> Interval:
    _require(calib, "RN")
    if math.isinf(calib.q_hat):
        return Interval(lo=0.0, hi=1.0)
    x = output.features if output.features is not None else (output.d_hat,)
    sigma = max(calib.residual_model.predict(x), calib.epsilon)
    return _clip_unit(output.d_hat - calib.q_hat * sigma, output.d_hat + calib.q_hat * sigma)


def interp_prob(bin_centers, bin_probs, d: float) -> float:
    """Piecewise-linear interpolation of bin probabilities at d.

    Values outside the center range clamp to the boundary probability.
    """
    if len(bin_centers) != len(bin_probs):
        raise SchemaError(
            f"{len(bin_centers)} centers vs {len(bin_probs)} probabilities"
        )
    if len(bin_centers) < 2:
        raise SchemaError("interpolation needs at least two bins")
    return float(np.interp(d, bin_centers, bin_probs))


def calibrate_r2ccp(
    cal: list[tuple[RegOutput, float]],
    alpha: float,
    bin_centers: tuple[float, ...] | None = None,
) -> RegCalibration:
    """Low-tail quantile of interpolated bin probabilities at the true value.

    High probability means conforming here, so q_hat is the floor((n+1)*alpha)-th
    smallest score (floored at rank 1) and membership requires score >= q_hat.
    """
    if not cal:
        raise EmptyCalibration("R2CCP calibration needs at least one example")
    first = cal[0][0]
    if first.bin_probs is None:
        raise SchemaError("R2CCP calibration requires bin_probs on every record")
    if bin_centers is None:
        bin_centers = default_bin_centers(len(first.bin_probs))
    scores = []
    for out, d in cal:
        if out.bin_probs is None:
            raise SchemaError("R2CCP calibration requires bin_probs on every record")
        if len(out.bin_probs) != len(bin_centers):
            raise SchemaError(
                f"record has {len(out.bin_probs)} bins, calibration uses {len(bin_centers)}"
            )
        scores.append(interp_prob(bin_centers, out.bin_probs, d))
    n = len(scores)
    rank = max(1, math.floor((n + 1) * alpha + _RANK_NUDGE))
    q_hat = sorted(scores)[min(rank, n) - 1]
    return RegCalibration(
        method="R2CCP", alpha=alpha, q_hat=q_hat, bin_centers=tuple(bin_centers)
    )


def interval_r2ccp(calib: RegCalibration, output: RegOutput) -> Interval:
    """Span of bins whose probability clears q_hat; argmax bin if none do."""
    _require(calib, "R2CCP")
    if output.bin_probs is None:
        raise SchemaError("R2CCP interval requires bin_probs")
    if len(output.bin_probs) != len(calib.bin_centers):
        raise SchemaError(
            f"record has {len(output.bin_probs)} bins, calibration uses {len(calib.bin_centers)}"
        )
    conforming = [
        c for c, p in zip(calib.bin_centers, output.bin_probs) if p >= calib.q_hat
    ]
    if not conforming:
        peak = calib.bin_centers[int(np.argmax(output.bin_probs))]
        return Interval(lo=peak, hi=peak)
    return Interval(lo=min(conforming), hi=max(conforming))
