"""Tensor normalization strategies and cosine scoring.

An activation tensor is viewed as a (patches, channels) matrix; every
strategy rescales some family of slices of that matrix to unit L2 norm
and the verification score is the mean cosine similarity over the same
slices.  Slices with zero norm stay zero and contribute 0 to the score,
which keeps degenerate activations from poisoning a comparison.
"""

from __future__ import annotations

import enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ComparatorError
from .tensors import ActivationTensor


class Strategy(str, enum.Enum):
    """Normalization strategy tokens as they appear in configs and reports."""

    PER_PATCH = "per-patch"
    PER_CHANNEL = "per-channel"
    WHOLE = "whole"
    MEAN_PER_CHANNEL = "mean-per-channel"
    MEAN_PER_PATCH = "mean-per-patch"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


STRATEGIES = tuple(Strategy)


def parse_strategy(token) -> Strategy:
    try:
        return Strategy(token)
    except ValueError:
        valid = "|".join(s.value for s in STRATEGIES)
        raise ComparatorError(f"unknown strategy {token!r}, expected one of {valid}") from None


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    """Rescale each row to unit norm; zero rows are left at zero."""
    out = matrix.astype(np.float64)
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    np.divide(out, norms, out=out, where=norms > 0.0)
    return out.astype(np.float32)


def normalize_tensor(tensor: ActivationTensor, strategy) -> np.ndarray:
    """Return the normalized feature for ``tensor`` under ``strategy``.

    Shapes: ``per-patch``/``per-channel``/``whole`` keep the full
    (patches, channels) matrix; ``mean-per-channel`` collapses to a
    (channels,) vector; ``mean-per-patch`` to a (patches,) vector.
    """
    strategy = parse_strategy(strategy)
    matrix = tensor.as_matrix().astype(np.float64)
    if strategy == Strategy.PER_PATCH:
        return _unit_rows(matrix)
    if strategy == Strategy.PER_CHANNEL:
        return _unit_rows(matrix.T).T.copy()
    if strategy == Strategy.WHOLE:
        return _unit_rows(matrix.reshape(1, -1)).reshape(matrix.shape)
    if strategy == Strategy.MEAN_PER_CHANNEL:
        return _unit_rows(matrix.mean(axis=0, keepdims=True))[0]
    return _unit_rows(matrix.mean(axis=1, keepdims=True).T)[0]


def score_normalized(a: np.ndarray, b: np.ndarray, strategy) -> float:
    """Mean cosine similarity between two already-normalized features."""
    strategy = parse_strategy(strategy)
    if a.shape != b.shape:
        raise ComparatorError(f"feature shapes differ: {a.shape} vs {b.shape}")
    expect_ndim = 1 if strategy in (Strategy.MEAN_PER_CHANNEL, Strategy.MEAN_PER_PATCH) else 2
    if a.ndim != expect_ndim:
        raise ComparatorError(f"{strategy.value} features must be {expect_ndim}-d, got {a.ndim}-d")
    prod = a.astype(np.float64) * b.astype(np.float64)
    if strategy == Strategy.PER_PATCH:
        return float(prod.sum(axis=1).mean())
    if strategy == Strategy.PER_CHANNEL:
        return float(prod.sum(axis=0).mean())
    return float(prod.sum())


def score_tensors(a: ActivationTensor, b: ActivationTensor, strategy) -> float:
    """Normalize two raw tensors under ``strategy`` and score them."""
    if a.kind != b.kind:
        raise ComparatorError(f"tensor kinds differ: {a.kind.name} vs {b.kind.name}")
    if a.data.shape != b.data.shape:
        raise ComparatorError(f"tensor shapes differ: {a.data.shape} vs {b.data.shape}")
    strategy = parse_strategy(strategy)
    return score_normalized(normalize_tensor(a, strategy), normalize_tensor(b, strategy), strategy)


class TensorNormalizer(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping activation tensors to normalized features.

    Exists so normalization composes with scikit-learn pipelines; ``fit``
    only validates the strategy token.
    """

    def __init__(self, strategy: str = Strategy.PER_PATCH.value):
        self.strategy = strategy

    def fit(self, X, y=None):
        parse_strategy(self.strategy)
        return self

    def transform(self, X):
        strategy = parse_strategy(self.strategy)
        return [normalize_tensor(t, strategy) for t in X]
