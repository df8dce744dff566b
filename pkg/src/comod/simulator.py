"""Synthetic annotator populations and synthetic model scores.

The simulator draws a per-comment toxicity propensity from a Beta mixture,
samples annotator votes from it, and then emits classifier probabilities and
disagreement estimates *directly* with controllable miscalibration, instead
of training a model. Calibration and test items are therefore exactly
exchangeable, which is what lets the test suite check conformal coverage
against its finite-sample guarantee.

All randomness flows through one seeded generator (numpy PCG64, recorded in
the dataset manifest) so identical configs give byte-identical datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .annotations import AnnotationRecord, build_labeled
from .conformal_class import ClassProbs
from .conformal_reg import RegOutput, default_bin_centers
from .errors import ConfigError

RNG_ALGORITHM = "numpy-pcg64"

# Width of the Gaussian bump that forms the synthetic bin distribution.
BIN_BUMP_SD = 0.12

_LOGIT_CLAMP = 1e-9


@dataclass(frozen=True)
class SimConfig:
    """Knobs for one synthetic dataset.

    The default propensity mixture puts half the mass on mostly-non-toxic
    comments and half on mostly-toxic ones, which yields both consensus and
    contested items.
    """

    seed: int = 0
    n: int = 1000
    annotators_min: int = 10
    annotators_max: int = 40
    propensity_mixture: tuple[tuple[float, float, float], ...] = (
        (0.5, 2.0, 5.0),
        (0.5, 5.0, 2.0),
    )
    score_noise_sd: float = 0.0
    temperature: float = 1.0
    reg_noise_sd: float = 0.0
    feature_dim: int = 0
    disagreement_method: str = "distance"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be positive")
        if not 1 <= self.annotators_min <= self.annotators_max:
            raise ConfigError("annotator bounds must satisfy 1 <= min <= max")
        weights = [w for w, _, _ in self.propensity_mixture]
        if not self.propensity_mixture or any(w <= 0 for w in weights):
            raise ConfigError("mixture weights must be positive")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ConfigError(f"mixture weights sum to {sum(weights)}, expected 1")
        if any(a <= 0 or b <= 0 for _, a, b in self.propensity_mixture):
            raise ConfigError("Beta shape parameters must be positive")
        if self.score_noise_sd < 0 or self.reg_noise_sd < 0:
            raise ConfigError("noise standard deviations must be >= 0")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.feature_dim < 0:
            raise ConfigError("feature_dim must be >= 0")


@dataclass(frozen=True)
class SimulatedItem:
    """One synthetic comment: raw votes plus the model outputs for it."""

    record: AnnotationRecord
    probs: ClassProbs
    reg: RegOutput


def _logit(p: float) -> float:
    p = min(max(p, _LOGIT_CLAMP), 1.0 - _LOGIT_CLAMP)
    return math.log(p / (1.0 - p))


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def _bump_probs(center: float, centers: np.ndarray) -> np.ndarray:
    p = np.exp(-((centers - center) ** 2) / (2.0 * BIN_BUMP_SD**2))
    return p / p.sum()


def generate(config: SimConfig) -> list[SimulatedItem]:
    """Draw a full synthetic dataset, deterministically from config.seed."""
    rng = np.random.default_rng(config.seed)
    weights = np.array([w for w, _, _ in config.propensity_mixture])
    shapes = [(a, b) for _, a, b in config.propensity_mixture]
    centers = np.array(default_bin_centers())

    items = []
    for i in range(config.n):
        component = rng.choice(len(shapes), p=weights)
        a, b = shapes[component]
        pi = float(rng.beta(a, b))

        m = int(rng.integers(config.annotators_min, config.annotators_max + 1))
        votes = tuple(int(v) for v in (rng.random(m) < pi))
        record = AnnotationRecord(id=f"sim-{i:06d}", votes=votes, text=f"synthetic comment {i}")

        z = _logit(pi) / config.temperature
        if config.score_noise_sd > 0:
            z += rng.normal(0.0, config.score_noise_sd)
        probs = ClassProbs.from_toxic(_sigmoid(z))

        d = build_labeled(record, config.disagreement_method).d
        d_hat = d
        if config.reg_noise_sd > 0:
            d_hat += rng.normal(0.0, config.reg_noise_sd)
        d_hat = min(max(d_hat, 0.0), 1.0)

        bin_probs = tuple(float(v) for v in _bump_probs(d_hat, centers))

        features = None
        if config.feature_dim > 0:
            extra = [pi + rng.normal(0.0, 0.1) for _ in range(config.feature_dim - 1)]
            features = tuple([d_hat] + extra)

        items.append(
            SimulatedItem(
                record=record,
                probs=probs,
                reg=RegOutput(d_hat=d_hat, bin_probs=bin_probs, features=features),
            )
        )
    return items


def split(dataset: list, fractions: tuple[float, float, float], seed: int) -> tuple[list, list, list]:
    """Seeded shuffle, then partition into (train, calibration, test)."""
    if any(f <= 0 for f in fractions):
        raise ConfigError("split fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions sum to {sum(fractions)}, expected 1")
    n = len(dataset)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    first = round(n * fractions[0])
    second = round(n * (fractions[0] + fractions[1]))
    parts = (
        [dataset[i] for i in order[:first]],
        [dataset[i] for i in order[first:second]],
        [dataset[i] for i in order[second:]],
    )
    if any(len(p) == 0 for p in parts):
        raise ConfigError(f"split of {n} items by {fractions} leaves an empty part")
    return parts
