"""Label-confidence matrix and class-prior estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClassPrior:
    values: np.ndarray
    momentum: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError(f"prior momentum must lie in [0, 1], got {self.momentum}")

    def with_momentum(self, momentum):
        return ClassPrior(self.values, momentum)


def init_uniform_prior(class_count, momentum=0.9) -> ClassPrior:
    return ClassPrior(np.full(class_count, 1.0 / class_count), momentum)


def _normalise_rows(scores, candidates, support):
    S = np.asarray(candidates, dtype=bool)
    scores = np.where(S, scores, 0.0)
    total = scores.sum(axis=1, keepdims=True)
    dead = total[:, 0] <= 0.0
    if dead.any():
        # no candidate has any score: fall back to uniform over candidates
        scores[dead] = S[dead].astype(np.float64)
        total[dead] = S[dead].sum(axis=1, keepdims=True)
    W = np.asarray(support, dtype=np.float64).reshape(-1, 1)
    return scores / (W * total)


def init_confidence(candidates, outputs, support) -> np.ndarray:
    """p_ij = S_ij f_ij / (W_i * sum_j S_ij f_ij)."""
    f = np.asarray(outputs, dtype=np.float64)
    return _normalise_rows(f.copy(), candidates, support)


def update_confidence(candidates, outputs, support, prior, lambda3) -> np.ndarray:
    """Prior-tempered update: scores f_ij * u_j^(-lambda3), normalised as in init."""
    u = np.asarray(prior.values if isinstance(prior, ClassPrior) else prior, dtype=np.float64)
    if np.any(u <= 0.0):
        raise ValueError("class prior entries must be strictly positive")
    if lambda3 < 0:
        raise ValueError("lambda3 must be non-negative")
    f = np.asarray(outputs, dtype=np.float64)
    return _normalise_rows(f * u ** (-lambda3), candidates, support)


def candidate_argmax(candidates, outputs) -> np.ndarray:
    """Argmax of f restricted to each candidate set; ties go to the lowest label."""
    S = np.asarray(candidates, dtype=bool)
    return np.where(S, outputs, -np.inf).argmax(axis=1)


def update_prior(prior: ClassPrior, candidates, outputs) -> ClassPrior:
    """Moving average of the candidate-restricted argmax label frequencies."""
    pred = candidate_argmax(candidates, outputs)
    L = prior.values.shape[0]
    empirical = np.bincount(pred, minlength=L) / pred.shape[0]
    m = prior.momentum
    return ClassPrior(m * prior.values + (1.0 - m) * empirical, m)
