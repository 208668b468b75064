"""Learner wrappers (preprocessing + model) and validation-driven grid search."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from ..aggregation import VOTE, aggregate_groups, check_rule
from ..errors import EmptyGrid, ValidationError
from ..rng import Stream
from .preprocess import Preprocessor, digest_rows, fit_preprocessor
from .softmax import SoftmaxHyper, train_softmax
from .svm import SvmHyper, train_svm

log = logging.getLogger(__name__)

SINGLE = "single"
COARSE_THEN_REFINE = "coarse-then-refine"


@dataclass(frozen=True)
class GridSpec:
    c: tuple
    gamma: tuple
    phase: str = SINGLE
    refine_factor: float = math.sqrt(2.0)

    def __post_init__(self):
        if self.phase not in (SINGLE, COARSE_THEN_REFINE):
            raise ValidationError(f"unknown grid phase {self.phase!r}")
        if self.refine_factor <= 1:
            raise ValidationError("refine_factor must exceed 1")

    def points(self) -> list:
        return [SvmHyper(c, g) for c in sorted(self.c) for g in sorted(self.gamma)]

    def neighborhood(self, h: SvmHyper) -> list:
        f = self.refine_factor
        return [SvmHyper(h.c * a, h.gamma * b) for a in (1 / f, 1.0, f) for b in (1 / f, 1.0, f)]

    def as_dict(self):
        return {"c": list(self.c), "gamma": list(self.gamma), "phase": self.phase,
                "refine_factor": self.refine_factor}


def powers_of_two(lo: int, hi: int) -> tuple:
    return tuple(2.0 ** k for k in range(lo, hi + 1))


FLAT_GRID = GridSpec(powers_of_two(8, 11), powers_of_two(-11, -8))
CASCADE_GRID = GridSpec(powers_of_two(1, 15), powers_of_two(-15, -1), phase=COARSE_THEN_REFINE)


class Data(NamedTuple):
    X: np.ndarray
    y: list
    groups: list   # specimen id of every row

    @classmethod
    def empty(cls, n_features):
        return cls(np.zeros((0, n_features)), [], [])

    def __len__(self):
        return len(self.y)

    def concat(self, other: "Data") -> "Data":
        return Data(np.vstack([self.X, other.X]), self.y + other.y, self.groups + other.groups)

    def one_view_per_group(self, stream: Stream) -> "Data":
        rows = {}
        for i, g in enumerate(self.groups):
            rows.setdefault(g, []).append(i)
        picks = []
        for g in rows:
            idx = rows[g]
            picks.append(idx[int(stream.sample(len(idx), 1)[0])])
        return Data(self.X[picks], [self.y[i] for i in picks], [self.groups[i] for i in picks])


class SvmLearner:
    kind = "svm"
    has_scores = False

    def __init__(self, grid: GridSpec = FLAT_GRID, tol: float = 1e-3,
                 variance_kept: Optional[float] = None):
        self.grid = grid
        self.tol = tol
        self.variance_kept = variance_kept

    @property
    def phase(self):
        return self.grid.phase

    def candidates(self):
        return self.grid.points()

    def refine(self, h):
        return self.grid.neighborhood(h)

    def sort_key(self, h):
        return (h.c, h.gamma)

    def train(self, Xp, y, hyper, classes=None):
        return train_svm(Xp, y, hyper, classes, tol=self.tol)

    def with_grid(self, grid: GridSpec) -> "SvmLearner":
        return SvmLearner(grid, self.tol, self.variance_kept)

    def describe(self):
        return {"kind": self.kind, "tol": self.tol, "variance_kept": self.variance_kept,
                "grid": self.grid.as_dict()}


class SoftmaxLearner:
    kind = "softmax"
    has_scores = True
    phase = SINGLE

    def __init__(self, hyper: SoftmaxHyper = SoftmaxHyper(), l2_grid: Optional[tuple] = None,
                 variance_kept: Optional[float] = None):
        self.hyper = hyper
        self.l2_grid = tuple(l2_grid) if l2_grid else (hyper.l2,)
        self.variance_kept = variance_kept

    def candidates(self):
        return [replace(self.hyper, l2=v) for v in sorted(self.l2_grid)]

    def refine(self, h):
        return [h]

    def sort_key(self, h):
        return (h.l2,)

    def train(self, Xp, y, hyper, classes=None):
        return train_softmax(Xp, y, hyper, classes)

    def with_grid(self, grid):
        return self

    def describe(self):
        return {"kind": self.kind, "hyper": self.hyper.as_dict(), "l2_grid": list(self.l2_grid),
                "variance_kept": self.variance_kept}


def fit_pipeline(learner, data: Data, hyper, classes=None, pre: Optional[Preprocessor] = None):
    """Fit preprocessing on ``data`` (unless given) and train on the transformed rows."""
    if pre is None:
        pre = fit_preprocessor(data.X, learner.variance_kept)
    model = learner.train(pre.apply(data.X), data.y, hyper, classes)
    model.preprocessor = pre
    model.n_features = pre.n_features
    model.train_digest = digest_rows(data.X)
    return model


def specimen_accuracy(model, data: Data, rule: str) -> float:
    if len(data) == 0:
        return float("nan")
    decided = aggregate_groups(model.predict(data.X), data.groups, rule)
    truth = dict(zip(data.groups, data.y))
    return sum(decided[g] == truth[g] for g in decided) / len(decided)


@dataclass
class GridResult:
    hyper: object
    model: object
    table: list = field(default_factory=list)   # (phase, hyper, accuracy)


def grid_search(learner, train: Data, val: Data, classes=None, rule: str = VOTE,
                seed: int = 0) -> GridResult:
    """Pick hyperparameters by specimen-level validation accuracy.

    Ties go to the candidate that sorts first (smaller c, then smaller
    gamma).  In the two-phase mode the coarse grid runs on one randomly
    chosen view per specimen, then the 3x3 neighborhood of the coarse winner
    runs on all views.
    """
    check_rule(rule, learner.has_scores)
    cands = sorted(learner.candidates(), key=learner.sort_key)
    if not cands:
        raise EmptyGrid("empty hyperparameter grid")
    table = []

    def sweep(points, tr, va, tag):
        pre = fit_preprocessor(tr.X, learner.variance_kept)
        best = None
        for h in sorted(points, key=learner.sort_key):
            model = fit_pipeline(learner, tr, h, classes, pre)
            acc = specimen_accuracy(model, va, rule)
            table.append((tag, h, acc))
            if best is None or (acc > best[2]):
                best = (h, model, acc)
        return best

    if len(val) == 0:
        log.warning("empty validation set; using the first grid point")
        h = cands[0]
        return GridResult(h, fit_pipeline(learner, train, h, classes), table)

    if learner.phase == COARSE_THEN_REFINE:
        tr1 = train.one_view_per_group(Stream(seed, "coarse", "train"))
        va1 = val.one_view_per_group(Stream(seed, "coarse", "val"))
        h0, _, _ = sweep(cands, tr1, va1, "coarse")
        h, model, _ = sweep(learner.refine(h0), train, val, "refine")
    else:
        h, model, _ = sweep(cands, train, val, SINGLE)
    return GridResult(h, model, table)


def fit_selected(learner, train: Data, val: Data, classes=None, rule: str = VOTE,
                 seed: int = 0, refit: bool = True):
    """Grid search, then refit on train + validation with the chosen values."""
    result = grid_search(learner, train, val, classes, rule, seed)
    if refit and len(val):
        return fit_pipeline(learner, train.concat(val), result.hyper, classes), result
    return result.model, result
