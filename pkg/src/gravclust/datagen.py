"""Synthetic streaming data: benchmark cluster sets, noise and contamination."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigError


class Noise(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


@dataclass(frozen=True)
class ClusterSpec:
    centroid: Tuple[float, ...]
    variances: Tuple[float, ...]
    noise: Noise = Noise.GAUSSIAN

    def __post_init__(self):
        if len(self.centroid) != len(self.variances):
            raise ConfigError("centroid and variance vectors differ in length")
        if any(v <= 0 for v in self.variances):
            raise ConfigError("variances must be positive")

    @property
    def q(self) -> int:
        return len(self.centroid)


@dataclass(frozen=True)
class ChiSquareOutlier:
    """Per-axis chi-square draw, each axis added (+1) or subtracted (-1)."""

    dof: Tuple[float, ...]
    signs: Tuple[int, ...]


@dataclass(frozen=True)
class GaussianOutlier:
    mean: Tuple[float, ...]
    variances: Tuple[float, ...]


OutlierLaw = Union[ChiSquareOutlier, GaussianOutlier]


@dataclass(frozen=True)
class ContaminationSpec:
    """Additive contamination: with probability ``p_e`` an outlier draw is added.

    ``per_cluster`` holds one outlier law per cluster index; a single law can
    be given instead and is then shared by all clusters.
    """

    p_e: float = 0.0
    per_cluster: Tuple[OutlierLaw, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.p_e <= 1.0:
            raise ConfigError(f"p_e must lie in [0, 1], got {self.p_e}")

    def law(self, k: int) -> Optional[OutlierLaw]:
        if not self.per_cluster:
            return None
        return self.per_cluster[k] if len(self.per_cluster) > 1 else self.per_cluster[0]


NO_CONTAMINATION = ContaminationSpec()


@dataclass(frozen=True)
class StreamSchedule:
    vectors_per_cluster_per_phase: int = 50
    batch_size: int = 10
    total_clusters: int = 5
    # clusters active in the first phase; equal to total_clusters gives a stationary stream
    start_clusters: int = 1

    def __post_init__(self):
        for name in ("vectors_per_cluster_per_phase", "batch_size", "total_clusters", "start_clusters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.start_clusters > self.total_clusters:
            raise ConfigError("start_clusters exceeds total_clusters")

    def stream_length(self) -> int:
        return self.vectors_per_cluster_per_phase * sum(range(self.start_clusters, self.total_clusters + 1))


@dataclass
class StreamItem:
    coords: np.ndarray
    k_true: int
    cluster: int
    is_outlier: bool
    # True on the last vector of a batch (batch_size new vectors per active cluster)
    batch_end: bool = False


def _specs(centroids, variances, scale=1.0, noise=Noise.GAUSSIAN) -> List[ClusterSpec]:
    return [ClusterSpec(tuple(float(c) for c in w), tuple(scale * v for v in s), Noise(noise))
            for w, s in zip(centroids, variances)]


def dataset_data1(noise=Noise.GAUSSIAN) -> List[ClusterSpec]:
    """Five 2-D clusters."""
    return _specs(
        [(-1, 0), (4, 0), (0, 5), (9, 4), (3, 9)],
        [(0.2, 0.4), (0.6, 0.6), (0.4, 0.2), (0.2, 0.2), (0.3, 0.5)],
        noise=noise,
    )


DATA2_ALPHA = 0.15


def dataset_data2(noise=Noise.GAUSSIAN) -> List[ClusterSpec]:
    """Six 3-D clusters; every variance entry is scaled by 0.15."""
    return _specs(
        [(-1, 0, 7), (3, 0, 8), (0, 5, 1), (9, 4, 4), (3, 9, 5), (5, 5, 1.55)],
        [(0.2, 0.4, 0.2), (0.6, 0.3, 0.5), (0.4, 0.2, 0.1),
         (0.3, 0.3, 0.3), (0.3, 0.5, 0.3), (0.4, 0.4, 0.4)],
        scale=DATA2_ALPHA,
        noise=noise,
    )


DATASETS = {"data1": dataset_data1, "data2": dataset_data2}


def data1_chisquare_outliers(p_e: float = 0.05) -> ContaminationSpec:
    """Skewed outlier laws for Data-1, one per cluster.

    Cluster 4's second axis is listed with dof -3; it is read as subtracting a
    dof-3 draw, as done for cluster 2.
    """
    return ContaminationSpec(p_e, (
        ChiSquareOutlier((3, 3), (+1, +1)),
        ChiSquareOutlier((5, 5), (-1, -1)),
        ChiSquareOutlier((4, 1), (+1, -1)),
        ChiSquareOutlier((2, 3), (+1, -1)),
        GaussianOutlier((0.0, 0.0), (3.0, 3.0)),
    ))


def gaussian_outliers(q: int, p_e: float = 0.05, variance: float = 3.0) -> ContaminationSpec:
    return ContaminationSpec(p_e, (GaussianOutlier((0.0,) * q, (variance,) * q),))


def _noise(spec: ClusterSpec, rng: np.random.Generator) -> np.ndarray:
    var = np.asarray(spec.variances)
    if spec.noise == Noise.LAPLACE:
        # Laplace(b) has variance 2 b^2
        return rng.laplace(0.0, np.sqrt(var / 2.0))
    return rng.normal(0.0, np.sqrt(var))


def _outlier(law: OutlierLaw, q: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(law, ChiSquareOutlier):
        return np.asarray(law.signs, float) * rng.chisquare(np.asarray(law.dof, float))
    return rng.normal(np.asarray(law.mean, float), np.sqrt(np.asarray(law.variances, float)))


def sample(spec: ClusterSpec, contamination: ContaminationSpec, rng: np.random.Generator,
           cluster: int = 0) -> Tuple[np.ndarray, bool]:
    """One feature vector ``w + e + zeta * o``; returns ``(coords, is_outlier)``."""
    x = np.asarray(spec.centroid, float) + _noise(spec, rng)
    law = contamination.law(cluster)
    # the Bernoulli draw is consumed even at p_e = 0 to keep streams aligned across p_e
    hit = rng.random() < contamination.p_e
    if hit and law is not None:
        x = x + _outlier(law, spec.q, rng)
    return x, bool(hit and law is not None)


def make_stream(specs: Sequence[ClusterSpec], schedule: StreamSchedule,
                contamination: ContaminationSpec, rng: np.random.Generator) -> Iterator[StreamItem]:
    """Phase c draws round-robin from the first c clusters until each has
    contributed ``vectors_per_cluster_per_phase`` new vectors; c runs from
    ``start_clusters`` to ``total_clusters`` and is the ground-truth count."""
    if schedule.total_clusters > len(specs):
        raise ConfigError(f"schedule wants {schedule.total_clusters} clusters, dataset has {len(specs)}")
    per = schedule.vectors_per_cluster_per_phase
    for c in range(schedule.start_clusters, schedule.total_clusters + 1):
        for n in range(per):
            for k in range(c):
                x, out = sample(specs[k], contamination, rng, cluster=k)
                end = k == c - 1 and ((n + 1) % schedule.batch_size == 0 or n == per - 1)
                yield StreamItem(x, c, k, out, end)


def write_stream_csv(path, items: Sequence[StreamItem], node: int = 0) -> None:
    """Rows ``t, node, x1..xq, true_cluster, is_outlier``."""
    items = list(items)
    q = len(items[0].coords) if items else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", *[f"x{i + 1}" for i in range(q)], "true_cluster", "is_outlier"])
        for t, it in enumerate(items, start=1):
            w.writerow([t, node, *[repr(float(v)) for v in it.coords], it.cluster + 1, int(it.is_outlier)])


FIG1_NEW_CENTROID = (-4.0, -11.0)
FIG1_NEW_VARIANCES = (0.3, 0.3)


def dataset_fig1(noise=Noise.GAUSSIAN) -> List[ClusterSpec]:
    """Data-1 plus a late sixth cluster far below the others."""
    return dataset_data1(noise) + [ClusterSpec(FIG1_NEW_CENTROID, FIG1_NEW_VARIANCES, Noise(noise))]


def fig1_outliers(p_e: float = 0.05) -> ContaminationSpec:
    laws = data1_chisquare_outliers(p_e).per_cluster
    return ContaminationSpec(p_e, laws + (GaussianOutlier((0.0, 0.0), (3.0, 3.0)),))


DATASETS["fig1"] = dataset_fig1
