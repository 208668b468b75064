"""Standardization followed by a principal-component rotation."""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch, NonFiniteInput, ValidationError


class TooFewRows(ValidationError):
    pass


def digest_rows(X) -> str:
    X = np.ascontiguousarray(X, dtype=np.float64)
    h = hashlib.sha256(repr(X.shape).encode())
    h.update(X.tobytes())
    return h.hexdigest()


@dataclass
class Preprocessor:
    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray        # (n_features, n_components), orthonormal columns
    explained: np.ndarray       # variance of each retained component
    fit_digest: str = ""

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    @property
    def n_components(self) -> int:
        return self.rotation.shape[1]

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got shape {X.shape}")
        return ((X - self.mean) / self.scale) @ self.rotation


def fit_preprocessor(X, variance_kept: Optional[float] = None) -> Preprocessor:
    """Fit per-feature standardization (sample sd) and a PCA rotation.

    All components are kept unless ``variance_kept`` (a fraction in (0, 1])
    asks for the smallest prefix reaching that share of the variance.
    Constant features get scale 1 and a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise TooFewRows(f"need at least 2 rows to fit, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("non-finite feature values")
    mean = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    constant = scale <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if constant.any():
        warnings.warn(f"{int(constant.sum())} constant feature(s); scale set to 1", RuntimeWarning)
        scale = np.where(constant, 1.0, scale)
    Z = (X - mean) / scale
    cov = Z.T @ Z / (X.shape[0] - 1)
    cov = (cov + cov.T) / 2
    # correlations at round-off level are zero; otherwise a (near) isotropic
    # spectrum gets an arbitrary basis instead of the coordinate axes
    cov[np.abs(cov) < 1e-12] = 0.0
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    # sign convention: largest-magnitude loading of each component is positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.where(vecs[pivot, np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    if variance_kept is not None:
        if not 0.0 < variance_kept <= 1.0:
            raise ValidationError("variance_kept must be in (0, 1]")
        share = np.cumsum(vals) / max(vals.sum(), 1e-300)
        k = int(np.searchsorted(share, variance_kept - 1e-12) + 1)
        vals, vecs = vals[:k], vecs[:, :k]
    return Preprocessor(mean, scale, vecs, vals, digest_rows(X))


def apply(pre: Preprocessor, X) -> np.ndarray:
    return pre.apply(X)
