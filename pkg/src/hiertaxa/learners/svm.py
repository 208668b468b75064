"""RBF-kernel support vector classifier.

Binary problems are solved in the dual,

    min  1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a <= C,   Q_ij = y_i y_j k(x_i, x_j)

by SMO with second-order working-set selection (the scheme used by
libsvm).  Multiclass problems are decomposed one-vs-one; each pairwise
decision casts one vote.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from ..errors import ValidationError
from .base import TrainedModel, check_training_data

TAU = 1e-12


@dataclass(frozen=True)
class SvmHyper:
    c: float
    gamma: float

    def __post_init__(self):
        if not (self.c > 0 and self.gamma > 0):
            raise ValidationError(f"c and gamma must be positive, got {self}")

    def as_dict(self):
        return {"c": self.c, "gamma": self.gamma}


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@numba.njit(cache=True, nogil=True)
def _smo(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    converged = False
    while it < max_iter:
        # i: maximal violating index in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        # j: second-order choice in I_low
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if y[t] > 0:
                if alpha[t] > 0:
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    diff = gmax + G[t]
                    if diff > 0 and i >= 0:
                        quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            j = t
            else:
                if alpha[t] < C:
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    diff = gmax - G[t]
                    if diff > 0 and i >= 0:
                        quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            j = t
        if gmax + gmax2 < tol or i < 0 or j < 0:
            converged = True
            break
        it += 1

        ai, aj = alpha[i], alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] = ai + delta
            alpha[j] = aj + delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            alpha[i] = ai - delta
            alpha[j] = aj + delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        dai = alpha[i] - ai
        daj = alpha[j] - aj
        for t in range(n):
            G[t] += y[t] * (y[i] * K[i, t] * dai + y[j] * K[j, t] * daj)

    # offset: average over free vectors, else midpoint of the feasible range
    ub = np.inf
    lb = -np.inf
    n_free = 0
    s_free = 0.0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            s_free += yg
    if n_free > 0:
        rho = s_free / n_free
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it, converged


@dataclass
class BinarySolution:
    alpha: np.ndarray
    rho: float
    iterations: int
    converged: bool

    @property
    def bias(self) -> float:
        return -self.rho


def solve_dual(K, y, c: float, tol: float = 1e-3, max_iter: int | None = None) -> BinarySolution:
    """SMO on a precomputed kernel matrix with labels in {-1, +1}."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if max_iter is None:
        max_iter = max(10_000_000, 100 * len(y))
    alpha, rho, it, ok = _smo(K, y, float(c), float(tol), int(max_iter))
    if not ok:
        warnings.warn(f"SMO stopped after {it} iterations without reaching tol={tol}", RuntimeWarning)
    return BinarySolution(alpha, float(rho), int(it), bool(ok))


def dual_objective(alpha, K, y) -> float:
    ay = np.asarray(alpha) * np.asarray(y)
    return 0.5 * float(ay @ K @ ay) - float(np.sum(alpha))


def kkt_violations(alpha, K, y, c: float, rho: float) -> np.ndarray:
    """Per-point violation of the KKT conditions at the given offset."""
    alpha = np.asarray(alpha, dtype=np.float64)
    yf = y * (K @ (alpha * y) - rho)
    viol = np.abs(1.0 - yf)
    viol = np.where(alpha <= 0, np.maximum(0.0, 1.0 - yf), viol)
    viol = np.where(alpha >= c, np.maximum(0.0, yf - 1.0), viol)
    return viol


class SvmModel(TrainedModel):
    kind = "svm"
    has_scores = False

    def __init__(self, classes, hyper, n_features, support, pairs, offsets, sv_index, coef, rho,
                 preprocessor=None, train_digest="", converged=True):
        super().__init__(classes, hyper, n_features, preprocessor, train_digest)
        self.support = np.asarray(support, dtype=np.float64)      # union of support vectors
        self.pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.sv_index = np.asarray(sv_index, dtype=np.int64)      # rows of ``support``
        self.coef = np.asarray(coef, dtype=np.float64)            # alpha * y
        self.rho = np.asarray(rho, dtype=np.float64)
        self.converged = converged

    def decision_values(self, Xp) -> np.ndarray:
        """Pairwise decision values on already-preprocessed rows."""
        Ks = rbf_kernel(Xp, self.support, self.hyper["gamma"])
        out = np.empty((Xp.shape[0], len(self.pairs)))
        for p in range(len(self.pairs)):
            lo, hi = self.offsets[p], self.offsets[p + 1]
            out[:, p] = Ks[:, self.sv_index[lo:hi]] @ self.coef[lo:hi] - self.rho[p]
        return out

    def _scores(self, Xp):
        dec = self.decision_values(Xp)
        votes = np.zeros((Xp.shape[0], len(self.classes)))
        rows = np.arange(Xp.shape[0])
        for p, (a, b) in enumerate(self.pairs):
            winner = np.where(dec[:, p] > 0, a, b)
            np.add.at(votes, (rows, winner), 1.0)
        return votes

    def arrays(self):
        return {"support": self.support, "pairs": self.pairs, "offsets": self.offsets,
                "sv_index": self.sv_index, "coef": self.coef, "rho": self.rho}


def train_svm(X, y, hyper: SvmHyper, classes=None, tol: float = 1e-3) -> SvmModel:
    """One-vs-one RBF SVM.  ``X`` is used as given (no preprocessing here)."""
    X, yi, classes = check_training_data(X, y, classes)
    pairs, offsets, sv_global, coef, rho = [], [0], [], [], []
    converged = True
    for a, b in itertools.combinations(range(len(classes)), 2):
        rows = np.flatnonzero((yi == a) | (yi == b))
        yy = np.where(yi[rows] == a, 1.0, -1.0)
        sol = solve_dual(rbf_kernel(X[rows], X[rows], hyper.gamma), yy, hyper.c, tol)
        converged &= sol.converged
        sv = np.flatnonzero(sol.alpha > 0)
        pairs.append((a, b))
        sv_global.append(rows[sv])
        coef.append(sol.alpha[sv] * yy[sv])
        rho.append(sol.rho)
        offsets.append(offsets[-1] + len(sv))
    sv_global = np.concatenate(sv_global) if sv_global else np.zeros(0, np.int64)
    union, sv_index = np.unique(sv_global, return_inverse=True)
    return SvmModel(classes, hyper.as_dict(), X.shape[1], X[union], pairs, offsets,
                    sv_index, np.concatenate(coef), rho, converged=converged)
