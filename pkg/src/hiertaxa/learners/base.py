from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch, NonFiniteInput, SingleClass, ValidationError
from .preprocess import Preprocessor


@dataclass
class ViewOutputs:
    """Per-row outputs of a trained model.

    ``scores`` holds one row per input: one-vs-one vote counts for the SVM,
    pre-normalization logits for softmax.  Only the latter can be averaged
    across views (``has_scores``).
    """
    classes: tuple
    labels: list
    scores: np.ndarray
    has_scores: bool

    def __len__(self):
        return len(self.labels)

    def take(self, rows) -> "ViewOutputs":
        rows = list(rows)
        return ViewOutputs(self.classes, [self.labels[i] for i in rows], self.scores[rows], self.has_scores)


class TrainedModel:
    kind = "base"
    has_scores = False

    def __init__(self, classes, hyper: dict, n_features: int,
                 preprocessor: Optional[Preprocessor] = None, train_digest: str = ""):
        self.classes = tuple(classes)
        self.hyper = dict(hyper)
        self.n_features = int(n_features)
        self.preprocessor = preprocessor
        self.train_digest = train_digest

    @property
    def preprocessor_fit_on_training(self) -> bool:
        """Audit flag: the attached preprocessor saw exactly this model's training rows."""
        return self.preprocessor is None or self.preprocessor.fit_digest == self.train_digest

    def predict(self, X) -> ViewOutputs:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, self.n_features)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got shape {X.shape}")
        if X.shape[0] == 0:
            return ViewOutputs(self.classes, [], np.zeros((0, len(self.classes))), self.has_scores)
        if self.preprocessor is not None:
            X = self.preprocessor.apply(X)
        scores = self._scores(X)
        idx = np.argmax(scores, axis=1)  # first maximum = canonical class order
        return ViewOutputs(self.classes, [self.classes[i] for i in idx], scores, self.has_scores)

    def _scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def arrays(self) -> dict:
        return {}


class ConstantModel(TrainedModel):
    """Degenerate model for a node left with one trainable class."""
    kind = "constant"

    def _scores(self, X):
        out = np.zeros((X.shape[0], len(self.classes)))
        out[:, 0] = 1.0
        return out


def check_training_data(X, y, classes=None):
    X = np.asarray(X, dtype=np.float64)
    y = list(y)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DimensionMismatch(f"X shape {X.shape} does not match {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("non-finite feature values")
    present = set(y)
    if classes is None:
        classes = sorted(present)
    else:
        classes = [c for c in classes if c in present]
        if present - set(classes):
            raise ValidationError(f"labels outside the class list: {sorted(present - set(classes))}")
    if len(classes) < 2:
        raise SingleClass(f"need at least 2 classes, got {classes}")
    index = {c: i for i, c in enumerate(classes)}
    return X, np.array([index[v] for v in y], dtype=np.int64), tuple(classes)
