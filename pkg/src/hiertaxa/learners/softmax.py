"""Multinomial logistic regression trained by full-batch gradient descent.

Gives per-class scores (logits) so the average-output aggregation path can
run without a deep network.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .base import TrainedModel, check_training_data


@dataclass(frozen=True)
class SoftmaxHyper:
    learning_rate: float = 0.5
    epochs: int = 300
    l2: float = 1e-3
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 0 or self.l2 < 0 or not 0 <= self.momentum < 1:
            raise ValidationError(f"invalid softmax hyperparameters {self}")

    def as_dict(self):
        return {"learning_rate": self.learning_rate, "epochs": self.epochs,
                "l2": self.l2, "momentum": self.momentum}


def _augment(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def log_softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def loss_and_grad(W, X, y, l2):
    """Mean cross-entropy plus ``l2/2 * |W|^2`` (bias row excluded).

    ``W`` has shape (n_features + 1, n_classes), last row the bias; ``y`` are
    class indices.
    """
    Xa = _augment(X)
    logp = log_softmax(Xa @ W)
    n = X.shape[0]
    loss = -logp[np.arange(n), y].mean() + 0.5 * l2 * np.sum(W[:-1] ** 2)
    P = np.exp(logp)
    P[np.arange(n), y] -= 1.0
    grad = Xa.T @ P / n
    grad[:-1] += l2 * W[:-1]
    return loss, grad


class SoftmaxModel(TrainedModel):
    kind = "softmax"
    has_scores = True

    def __init__(self, classes, hyper, n_features, weights, preprocessor=None, train_digest=""):
        super().__init__(classes, hyper, n_features, preprocessor, train_digest)
        self.weights = np.asarray(weights, dtype=np.float64)

    def _scores(self, Xp):
        return _augment(Xp) @ self.weights

    def arrays(self):
        return {"weights": self.weights}


def train_softmax(X, y, hyper: SoftmaxHyper = SoftmaxHyper(), classes=None) -> SoftmaxModel:
    """Weights start at zero and updates are full-batch, so training is deterministic."""
    X, yi, classes = check_training_data(X, y, classes)
    W = np.zeros((X.shape[1] + 1, len(classes)))
    velocity = np.zeros_like(W)
    for _ in range(hyper.epochs):
        _, g = loss_and_grad(W, X, yi, hyper.l2)
        velocity = hyper.momentum * velocity - hyper.learning_rate * g
        W = W + velocity
    return SoftmaxModel(classes, hyper.as_dict(), X.shape[1], W)
