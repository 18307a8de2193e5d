"""Accuracy and convergence metrics over Monte-Carlo run records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

NEVER = -1  # convergence_time sentinel


@dataclass
class RunRecord:
    """Per-evaluation-step series of one run.

    ``k_hat`` is ``(steps,)`` for a single node or ``(steps, nodes)`` for a
    network; ``k_true`` is always ``(steps,)``.
    """

    t: np.ndarray
    k_hat: np.ndarray
    k_true: np.ndarray
    centroids: List = field(default_factory=list)
    wall_clock: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t)
        self.k_hat = np.asarray(self.k_hat)
        self.k_true = np.asarray(self.k_true)
        if not (len(self.t) == len(self.k_hat) == len(self.k_true)):
            raise ValueError("record series differ in length")

    def errors(self) -> np.ndarray:
        truth = self.k_true if self.k_hat.ndim == 1 else self.k_true[:, None]
        return (self.k_hat - truth).ravel()


def _pooled_errors(records: Sequence[RunRecord]) -> np.ndarray:
    if not records:
        raise ValueError("no run records")
    return np.concatenate([r.errors() for r in records])


def rmse_k(records: Sequence[RunRecord]) -> float:
    """RMSE of the cluster count, pooled over evaluation steps, nodes and runs."""
    e = _pooled_errors(records)
    return float(np.sqrt(np.mean(e.astype(float) ** 2)))


def p_correct(records: Sequence[RunRecord]) -> float:
    e = _pooled_errors(records)
    return float(np.mean(e == 0))


@dataclass
class CentroidMatch:
    distances: np.ndarray
    unmatched_estimates: int
    unmatched_truths: int

    @property
    def rmse(self) -> float:
        if len(self.distances) == 0:
            return math.nan
        return float(np.sqrt(np.mean(self.distances ** 2)))


def match_centroids(estimates, truths) -> CentroidMatch:
    """Greedy matching: repeatedly pair the globally closest (estimate, truth)."""
    est = np.asarray(estimates, float)
    tru = np.asarray(truths, float)
    if est.size == 0 or tru.size == 0:
        return CentroidMatch(np.empty(0), len(est), len(tru))
    est, tru = np.atleast_2d(est), np.atleast_2d(tru)
    dist = np.linalg.norm(est[:, None, :] - tru[None, :, :], axis=2)
    ii, jj = np.unravel_index(np.argsort(dist, axis=None, kind="stable"), dist.shape)
    used_e = np.zeros(len(est), bool)
    used_t = np.zeros(len(tru), bool)
    out = []
    for i, j in zip(ii, jj):
        if used_e[i] or used_t[j]:
            continue
        used_e[i] = used_t[j] = True
        out.append(dist[i, j])
        if used_e.all() or used_t.all():
            break
    return CentroidMatch(np.asarray(out), int((~used_e).sum()), int((~used_t).sum()))


def rmse_centroids(estimates, truths, penalty: Optional[float] = None) -> float:
    """Centroid RMSE after greedy matching; NaN when either side is empty.

    Unmatched points are left out unless ``penalty`` is given, in which case
    each contributes that distance.
    """
    m = match_centroids(estimates, truths)
    if len(m.distances) == 0 and penalty is None:
        return math.nan
    d = m.distances
    if penalty is not None:
        d = np.concatenate([d, np.full(m.unmatched_estimates + m.unmatched_truths, float(penalty))])
    return float(np.sqrt(np.mean(d ** 2))) if len(d) else math.nan


def pooled_centroid_rmse(matches: Sequence[CentroidMatch]) -> float:
    d = np.concatenate([m.distances for m in matches]) if matches else np.empty(0)
    return float(np.sqrt(np.mean(d ** 2))) if len(d) else math.nan


def convergence_time(distances: Sequence[float], epsilon_min: float) -> int:
    """First 1-indexed step from which the series stays below ``epsilon_min``.

    Returns ``NEVER`` if the last value is not below the threshold.
    """
    d = np.asarray(distances, float)
    if len(d) == 0:
        raise ValueError("empty distance series")
    if epsilon_min <= 0:
        raise ValueError("epsilon_min must be positive")
    above = np.nonzero(~(d < epsilon_min))[0]
    if len(above) == 0:
        return 1
    last = above[-1]
    return NEVER if last == len(d) - 1 else int(last) + 2
