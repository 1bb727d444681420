"""Linear-logistic score fusion.

The fused score of trial j over N comparators is the affine form
f_j = a0 + a1*s_1j + ... + aN*s_Nj.  Weights minimize a class-balanced
logistic loss (genuine = 1, impostor = 0, each class reweighted to mass
1/2) with an L2 penalty of 1e-6 on the slopes, via full-batch iteratively
reweighted least squares from an all-zero start; training stops when the
gradient norm drops below 1e-8 or after 1,000 iterations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from .errors import FusionTrainingError
from .protocol import ScoreTable, check_aligned, with_scores

L2_PENALTY = 1e-6
GRADIENT_TOL = 1e-8
MAX_ITERATIONS = 1000


@dataclass(frozen=True)
class FusionModel:
    """Trained affine fusion: ``weights`` is (a0, a1, ..., aN)."""

    comparator_ids: tuple
    weights: tuple
    iterations: int = 0
    final_loss: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "comparator_ids", tuple(str(c) for c in self.comparator_ids))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.comparator_ids) < 1:
            raise FusionTrainingError("fusion needs at least one comparator")
        if len(self.weights) != len(self.comparator_ids) + 1:
            raise FusionTrainingError(
                f"{len(self.comparator_ids)} comparators need "
                f"{len(self.comparator_ids) + 1} weights, got {len(self.weights)}"
            )
        if not all(np.isfinite(self.weights)):
            raise FusionTrainingError("fusion weights must be finite")


def save_fusion_model(model: FusionModel, path) -> None:
    doc = {
        "comparators": list(model.comparator_ids),
        "weights": list(model.weights),
        "metadata": {"iterations": model.iterations, "final_loss": model.final_loss},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_fusion_model(path) -> FusionModel:
    try:
        raw = json.loads(Path(path).read_text())
        meta = raw.get("metadata", {})
        return FusionModel(
            comparator_ids=raw["comparators"],
            weights=raw["weights"],
            iterations=int(meta.get("iterations", 0)),
            final_loss=float(meta.get("final_loss", float("nan"))),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FusionTrainingError(f"cannot load fusion model {path}: {exc}") from exc


def balanced_logistic_loss(design: np.ndarray, y: np.ndarray, weights: np.ndarray) -> float:
    """The training objective at ``weights`` (bias included in ``design``)."""
    case_w = _case_weights(y)
    z = design @ weights
    # log(1 + exp(-z*sign)) computed stably via logaddexp
    ce = np.logaddexp(0.0, -z) * y + np.logaddexp(0.0, z) * (1.0 - y)
    return float(case_w @ ce + 0.5 * L2_PENALTY * np.sum(weights[1:] ** 2))


def _case_weights(y: np.ndarray) -> np.ndarray:
    n_pos = int(np.sum(y == 1.0))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise FusionTrainingError("training data must contain both classes")
    w = np.where(y == 1.0, 0.5 / n_pos, 0.5 / n_neg)
    return w


def _fit_irls(X: np.ndarray, y: np.ndarray) -> tuple:
    design = np.hstack([np.ones((X.shape[0], 1)), X])
    n_weights = design.shape[1]
    case_w = _case_weights(y)
    penalty_mask = np.ones(n_weights)
    penalty_mask[0] = 0.0  # the bias is not regularized
    weights = np.zeros(n_weights)
    loss = balanced_logistic_loss(design, y, weights)
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        p = expit(design @ weights)
        gradient = design.T @ (case_w * (p - y)) + L2_PENALTY * penalty_mask * weights
        if np.linalg.norm(gradient) < GRADIENT_TOL:
            iterations -= 1
            break
        curvature = case_w * p * (1.0 - p)
        hessian = design.T @ (design * curvature[:, None]) + L2_PENALTY * np.diag(penalty_mask)
        try:
            step = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(hessian + 1e-12 * np.eye(n_weights), gradient)
        # halve until the Newton step actually descends
        scale = 1.0
        for _ in range(50):
            candidate = weights - scale * step
            new_loss = balanced_logistic_loss(design, y, candidate)
            if new_loss <= loss:
                break
            scale *= 0.5
        else:
            break
        weights, loss = candidate, new_loss
    return weights, iterations, loss


class LinearLogisticFusion(BaseEstimator):
    """Scikit-learn-shaped wrapper around the IRLS fusion trainer.

    After ``fit``, ``intercept_`` holds a0 and ``coef_`` the slopes;
    ``decision_function`` returns the fused scores themselves.
    """

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise FusionTrainingError(f"bad training shapes {X.shape} / {y.shape}")
        if X.shape[0] == 0:
            raise FusionTrainingError("no complete trials to train on")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise FusionTrainingError("training scores must be finite")
        if not set(np.unique(y)) <= {0.0, 1.0}:
            raise FusionTrainingError("labels must be 0 (impostor) or 1 (genuine)")
        weights, self.n_iter_, self.final_loss_ = _fit_irls(X, y)
        self.intercept_ = float(weights[0])
        self.coef_ = weights[1:].copy()
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        return self.intercept_ + X @ self.coef_

    def predict(self, X):
        return (self.decision_function(X) >= 0.0).astype(np.int64)


def train_fusion(tables, comparator_ids) -> FusionModel:
    """Train fusion weights from N aligned score tables.

    Trials missing any comparator's score are left out of training; at
    least one complete trial of each class must remain.
    """
    tables = list(tables)
    comparator_ids = [str(c) for c in comparator_ids]
    if len(tables) != len(comparator_ids):
        raise FusionTrainingError(f"{len(tables)} tables for {len(comparator_ids)} comparator ids")
    if not tables:
        raise FusionTrainingError("fusion needs at least one comparator")
    check_aligned(tables)
    features, labels = [], []
    for i, row in enumerate(tables[0].rows):
        scores = [t.rows[i].score for t in tables]
        if any(s is None for s in scores):
            continue
        features.append(scores)
        labels.append(1.0 if row.label == "genuine" else 0.0)
    estimator = LinearLogisticFusion().fit(
        np.asarray(features, dtype=np.float64).reshape(len(features), len(tables)),
        np.asarray(labels, dtype=np.float64),
    )
    return FusionModel(
        comparator_ids=comparator_ids,
        weights=(estimator.intercept_, *estimator.coef_),
        iterations=estimator.n_iter_,
        final_loss=estimator.final_loss_,
    )


def apply_fusion(model: FusionModel, scores) -> float | None:
    """Fuse one trial's score vector; any missing input makes the output missing."""
    scores = list(scores)
    if len(scores) != len(model.comparator_ids):
        raise FusionTrainingError(
            f"expected {len(model.comparator_ids)} scores, got {len(scores)}"
        )
    if any(s is None for s in scores):
        return None
    total = model.weights[0]
    for a, s in zip(model.weights[1:], scores):
        total += a * float(s)
    return float(total)


def fuse_tables(model: FusionModel, tables) -> ScoreTable:
    """Apply a trained model across aligned score tables, row by row."""
    tables = list(tables)
    if len(tables) != len(model.comparator_ids):
        raise FusionTrainingError(
            f"model fuses {len(model.comparator_ids)} comparators, got {len(tables)} tables"
        )
    check_aligned(tables)
    fused = [
        apply_fusion(model, [t.rows[i].score for t in tables])
        for i in range(len(tables[0].rows))
    ]
    return with_scores(tables[0], fused)
