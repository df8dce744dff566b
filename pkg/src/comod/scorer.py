"""Training losses and a desk-scale multitask scorer.

The losses are the ones the moderation models train on: weighted focal loss
for the toxicity head, weighted BCE / MSE for the disagreement head, and the
regression-as-classification loss (distance-weighted bin probabilities minus
an entropy regularizer) for the binned head. Each loss exposes its analytic
gradient so training does not rely on autodiff and so the gradients can be
checked against finite differences.

The scorer itself is deliberately tiny: a shared linear feature layer feeding
a sigmoid classification head and either a sigmoid disagreement head or a
softmax bin head. It stands in for the production encoder so the full
calibrate/route/evaluate pipeline runs end-to-end on a laptop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conformal_class import ClassProbs
from .conformal_reg import RegOutput, default_bin_centers
from .errors import ConfigError, DivergenceError, DomainError, EmptyDataset, SchemaError

CLAMP = 1e-12

REG_MODES = ("BCE", "MSE", "RAC")


@dataclass(frozen=True)
class LossConfig:
    """Loss hyperparameters. psi and tau are the binned-loss settings the
    experiments keep fixed (0.5 and 0.1)."""

    focal_gamma: float = 2.0
    class_weights: tuple[float, float] = (1.0, 1.0)  # (weight_nontoxic, weight_toxic)
    reg_bin_width: float = 0.1
    psi: float = 0.5
    tau: float = 0.1

    def __post_init__(self):
        if self.focal_gamma < 0:
            raise ConfigError("focal_gamma must be >= 0")
        if any(w <= 0 for w in self.class_weights):
            raise ConfigError("class weights must be positive")
        if self.psi <= 0 or self.tau < 0:
            raise ConfigError("psi must be > 0 and tau >= 0")
        n_bins = 1.0 / self.reg_bin_width
        if not 0 < self.reg_bin_width <= 1 or abs(n_bins - round(n_bins)) > 1e-9:
            raise ConfigError("reg_bin_width must divide 1 evenly")


def _clamp01(p: float) -> float:
    return min(max(p, CLAMP), 1.0 - CLAMP)


def focal_loss(p: float, y: int, cfg: LossConfig) -> float:
    """w_y * (1 - p_y)^gamma * (-log p_y), p_y the probability of the true label."""
    p_y = _clamp01(p if y == 1 else 1.0 - p)
    w = cfg.class_weights[y]
    return w * (1.0 - p_y) ** cfg.focal_gamma * (-math.log(p_y))


def focal_loss_grad(p: float, y: int, cfg: LossConfig) -> float:
    """d focal_loss / d p."""
    p_y = _clamp01(p if y == 1 else 1.0 - p)
    w = cfg.class_weights[y]
    g = cfg.focal_gamma
    if g == 0:
        dq = -w / p_y
    else:
        dq = w * (g * (1.0 - p_y) ** (g - 1.0) * math.log(p_y) - (1.0 - p_y) ** g / p_y)
    return dq if y == 1 else -dq


def weighted_bce_loss(d_hat: float, d: float, weight: float) -> float:
    q = _clamp01(d_hat)
    return weight * (-d * math.log(q) - (1.0 - d) * math.log(1.0 - q))


def weighted_bce_grad(d_hat: float, d: float, weight: float) -> float:
    q = _clamp01(d_hat)
    return weight * (-d / q + (1.0 - d) / (1.0 - q))


def weighted_mse_loss(d_hat: float, d: float, weight: float) -> float:
    return weight * (d - d_hat) ** 2


def weighted_mse_grad(d_hat: float, d: float, weight: float) -> float:
    return 2.0 * weight * (d_hat - d)


def bin_weights(d_values: list[float], width: float = 0.1) -> dict[int, float]:
    """Inverse-frequency weights over occupied disagreement bins.

    weight(bin) = n_total / (n_occupied_bins * count_in_bin), so a uniformly
    occupied histogram gets weight 1 everywhere. Empty bins get no entry.
    """
    if not d_values:
        raise EmptyDataset("bin_weights needs at least one value")
    n_bins = round(1.0 / width)
    counts: dict[int, int] = {}
    for d in d_values:
        if not 0.0 <= d <= 1.0:
            raise DomainError(f"disagreement value outside [0, 1]: {d}")
        counts[bin_index(d, width)] = counts.get(bin_index(d, width), 0) + 1
    occupied = len(counts)
    total = len(d_values)
    return {b: total / (occupied * c) for b, c in counts.items()}


def bin_index(d: float, width: float = 0.1) -> int:
    """Index of the histogram bin holding d; d = 1 folds into the last bin."""
    n_bins = round(1.0 / width)
    return min(int(d / width), n_bins - 1)


def r2ccp_loss(bin_centers, bin_probs, d: float, cfg: LossConfig) -> float:
    """sum_b |d - c_b|^psi * p_b - tau * H(p), H the natural-log entropy."""
    if len(bin_centers) != len(bin_probs):
        raise SchemaError(
            f"{len(bin_centers)} centers vs {len(bin_probs)} probabilities"
        )
    distance_term = sum(
        abs(d - c) ** cfg.psi * p for c, p in zip(bin_centers, bin_probs)
    )
    entropy = -sum(p * math.log(p) for p in bin_probs if p > 0.0)
    return distance_term - cfg.tau * entropy


def r2ccp_loss_grad(bin_centers, bin_probs, d: float, cfg: LossConfig) -> np.ndarray:
    """Gradient of r2ccp_loss with respect to each bin probability."""
    if len(bin_centers) != len(bin_probs):
        raise SchemaError(
            f"{len(bin_centers)} centers vs {len(bin_probs)} probabilities"
        )
    grad = np.empty(len(bin_probs))
    for b, (c, p) in enumerate(zip(bin_centers, bin_probs)):
        grad[b] = abs(d - c) ** cfg.psi + cfg.tau * (math.log(max(p, CLAMP)) + 1.0)
    return grad


@dataclass(frozen=True)
class ToyModelParams:
    """Weights of the tiny multitask scorer.

    shared_weights maps input features to the hidden representation both
    heads read. reg_head is a vector for the sigmoid disagreement head and a
    (hidden, B) matrix for the bin head.
    """

    shared_weights: np.ndarray
    class_head: np.ndarray
    reg_head: np.ndarray
    seed: int

    def __post_init__(self):
        for arr in (self.shared_weights, self.class_head, self.reg_head):
            if not np.all(np.isfinite(arr)):
                raise DomainError("model parameters must be finite")
        hidden = self.shared_weights.shape[1]
        if self.class_head.shape != (hidden,) or self.reg_head.shape[0] != hidden:
            raise SchemaError("head dimensions inconsistent with shared layer")

    def __eq__(self, other):
        return (
            isinstance(other, ToyModelParams)
            and self.seed == other.seed
            and np.array_equal(self.shared_weights, other.shared_weights)
            and np.array_equal(self.class_head, other.class_head)
            and np.array_equal(self.reg_head, other.reg_head)
        )


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def inverse_class_weights(labels) -> tuple[float, float]:
    """Class weights proportional to inverse class frequency, mean-normalized."""
    labels = np.asarray(labels)
    n = len(labels)
    counts = np.array([(labels == 0).sum(), (labels == 1).sum()], dtype=float)
    if (counts == 0).any():
        return (1.0, 1.0)
    w = n / (2.0 * counts)
    return (float(w[0]), float(w[1]))


def train_toy(
    dataset: list[tuple],
    cfg: LossConfig | None = None,
    reg_mode: str = "BCE",
    epochs: int = 200,
    learning_rate: float = 0.5,
    seed: int = 0,
    hidden_dim: int = 8,
    n_bins: int = 20,
) -> ToyModelParams:
    """Full-batch gradient descent on focal + regression loss, unit task sum.

    dataset rows are (features, y, d). When cfg is None, class weights are
    set from the inverse class frequencies of the training labels. The BCE
    and MSE regression losses are weighted per item by the inverse-frequency
    weight of its disagreement bin.
    """
    if not dataset:
        raise EmptyDataset("train_toy needs a non-empty dataset")
    if reg_mode not in REG_MODES:
        raise ConfigError(f"reg_mode must be one of {REG_MODES}, got {reg_mode!r}")

    X = np.array([row[0] for row in dataset], dtype=float)
    ys = np.array([row[1] for row in dataset], dtype=int)
    ds = np.array([row[2] for row in dataset], dtype=float)
    if not np.all(np.isfinite(X)):
        raise DomainError("features must be finite")
    n, n_features = X.shape

    if cfg is None:
        cfg = LossConfig(class_weights=inverse_class_weights(ys))

    weights_by_bin = bin_weights(list(ds), cfg.reg_bin_width)
    item_w = np.array([weights_by_bin[bin_index(d, cfg.reg_bin_width)] for d in ds])
    centers = np.array(default_bin_centers(n_bins))

    rng = np.random.default_rng(seed)
    W = rng.normal(scale=0.1, size=(n_features, hidden_dim))
    u = rng.normal(scale=0.1, size=hidden_dim)
    if reg_mode == "RAC":
        V = rng.normal(scale=0.1, size=(hidden_dim, n_bins))
    else:
        V = rng.normal(scale=0.1, size=hidden_dim)

    for _ in range(epochs):
        H = X @ W  # (n, hidden)
        p = _sigmoid(H @ u)

        loss = sum(focal_loss(p[i], ys[i], cfg) for i in range(n)) / n
        # d loss / d class logit, via the sigmoid chain
        delta_c = np.array(
            [focal_loss_grad(p[i], ys[i], cfg) * p[i] * (1.0 - p[i]) for i in range(n)]
        ) / n

        if reg_mode == "RAC":
            P = _softmax_rows(H @ V)  # (n, B)
            loss += sum(r2ccp_loss(centers, P[i], ds[i], cfg) for i in range(n)) / n
            G = np.stack([r2ccp_loss_grad(centers, P[i], ds[i], cfg) for i in range(n)])
            # softmax backward: p * (g - <g, p>)
            delta_r = P * (G - (G * P).sum(axis=1, keepdims=True)) / n
            grad_V = H.T @ delta_r
            delta_h = np.outer(delta_c, u) + delta_r @ V.T
        else:
            d_hat = _sigmoid(H @ V)
            if reg_mode == "BCE":
                loss += sum(
                    weighted_bce_loss(d_hat[i], ds[i], item_w[i]) for i in range(n)
                ) / n
                # BCE grad through the sigmoid collapses to w * (d_hat - d)
                delta_r = item_w * (d_hat - ds) / n
            else:
                loss += sum(
                    weighted_mse_loss(d_hat[i], ds[i], item_w[i]) for i in range(n)
                ) / n
                delta_r = 2.0 * item_w * (d_hat - ds) * d_hat * (1.0 - d_hat) / n
            grad_V = H.T @ delta_r
            delta_h = np.outer(delta_c, u) + np.outer(delta_r, V)

        if not math.isfinite(loss):
            raise DivergenceError(
                f"loss became non-finite; lower the learning rate ({learning_rate})"
            )

        grad_u = H.T @ delta_c
        grad_W = X.T @ delta_h

        W = W - learning_rate * grad_W
        u = u - learning_rate * grad_u
        V = V - learning_rate * grad_V

    return ToyModelParams(shared_weights=W, class_head=u, reg_head=V, seed=seed)


def predict_toy(params: ToyModelParams, features) -> tuple[ClassProbs, RegOutput]:
    """Score one feature vector: toxicity probability plus disagreement output.

    A matrix-shaped reg head means the binned mode; its point estimate is the
    probability-weighted mean of the bin centers.
    """
    x = np.asarray(features, dtype=float)
    if x.shape != (params.shared_weights.shape[0],):
        raise SchemaError(
            f"got {x.shape} features, model expects {params.shared_weights.shape[0]}"
        )
    h = x @ params.shared_weights
    p_toxic = float(_sigmoid(h @ params.class_head))
    probs = ClassProbs.from_toxic(p_toxic)

    if params.reg_head.ndim == 2:
        z = h @ params.reg_head
        bp = np.exp(z - z.max())
        bp = bp / bp.sum()
        centers = default_bin_centers(len(bp))
        d_hat = float(np.dot(bp, centers))
        reg = RegOutput(d_hat=d_hat, bin_probs=tuple(float(v) for v in bp))
    else:
        reg = RegOutput(d_hat=float(_sigmoid(h @ params.reg_head)))
    return probs, reg
