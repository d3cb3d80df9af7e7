"""Disturbance-sample ingestion, clustering, and support learning."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from math import ceil, log

import numpy as np

from .errors import DimensionMismatch, ParseError


@dataclass
class Cluster:
    center: np.ndarray  # (d,)
    diameter: float     # 2 * max distance from center among members
    count: int


@dataclass
class NoiseModel:
    """Raw disturbance samples plus their clustering and learned support.

    ``support_radius`` is exactly the empirical maximum norm of the
    samples; ``eps_c``/``beta_c`` give the mass/confidence budget of the
    learned support ball.
    """

    samples: np.ndarray  # (N, d)
    clusters: list[Cluster]
    support_radius: float
    eps_c: float
    beta_c: float
    required_samples: int = 0
    support_satisfied: bool = True

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(centers (Nc,d), radii (Nc,), weights (Nc,)) with weights n_j/N."""
        centers = np.stack([c.center for c in self.clusters])
        radii = np.array([c.diameter / 2.0 for c in self.clusters])
        weights = np.array([c.count for c in self.clusters], dtype=float) / self.n_samples
        return centers, radii, weights


def load_samples(path: str, noise_dim: int | None = None) -> np.ndarray:
    """Read an N x d sample matrix from CSV, one disturbance draw per row."""
    if not os.path.exists(path):
        raise ParseError(f"sample file not found: {path}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty files warn before we raise
            data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise ParseError(f"malformed sample file {path}: {exc}") from exc
    if data.size == 0:
        raise ParseError(f"sample file {path} is empty")
    if noise_dim is not None and data.shape[1] != noise_dim:
        raise DimensionMismatch(
            f"{path}: rows have {data.shape[1]} columns, expected noise dimension {noise_dim}")
    return data


def save_samples(path: str, samples: np.ndarray):
    np.savetxt(path, np.atleast_2d(samples), delimiter=",")


def cluster_samples(samples: np.ndarray, target_clusters: int, seed: int = 0) -> list[Cluster]:
    """Deterministic grid-bucket clustering of disturbance samples.

    The sample bounding box is split into k equal buckets per dimension for
    k = 1, 2, ... until the number of nonempty buckets first reaches
    ``target_clusters``; each nonempty bucket becomes one cluster with its
    centroid as center and twice the maximum centroid distance as diameter.
    The achieved cluster count may exceed the target.  ``seed`` only breaks
    ties in degenerate bucket assignments and does not affect typical data.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = samples.shape
    if not 1 <= target_clusters <= n:
        raise ValueError(f"target_clusters must be in [1, {n}]")
    if target_clusters >= n:
        return [Cluster(center=s.copy(), diameter=0.0, count=1) for s in samples]

    lo = samples.min(axis=0)
    hi = samples.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)

    assignment = np.zeros(n, dtype=np.int64)
    k_cap = max(4 * target_clusters, 64)
    for k in range(1, k_cap + 1):
        idx = np.floor((samples - lo) / span * k).astype(np.int64)
        np.clip(idx, 0, k - 1, out=idx)
        flat = np.ravel_multi_index(tuple(idx.T), (k,) * d)
        uniq, assignment = np.unique(flat, return_inverse=True)
        if len(uniq) >= target_clusters:
            break

    n_clusters = int(assignment.max()) + 1
    clusters: list[Cluster] = []
    order = np.argsort(assignment, kind="stable")
    boundaries = np.searchsorted(assignment[order], np.arange(n_clusters + 1))
    for j in range(n_clusters):
        members = samples[order[boundaries[j]:boundaries[j + 1]]]
        center = members.mean(axis=0)
        radius = float(np.max(np.linalg.norm(members - center, axis=1)))
        if radius <= 1e-12 * (1.0 + float(np.linalg.norm(center))):
            radius = 0.0  # coincident samples; drop the centroid rounding dust
        clusters.append(Cluster(center=center, diameter=2.0 * radius, count=len(members)))
    return clusters


def resolve_eps_c(eps_c, beta_c: float, n_samples: int) -> float:
    """Resolve the support mass budget; "auto" scales it with the sample count.

    The automatic choice 2*log(1/beta_c)/N is twice the smallest budget the
    confidence-region bound supports at N samples, so the support
    precondition holds with margin while the budget vanishes as N grows.
    """
    if eps_c == "auto":
        return float(min(0.05, max(1e-6, 2.0 * log(1.0 / beta_c) / n_samples)))
    return float(eps_c)


def learn_support(samples: np.ndarray, eps_c: float, beta_c: float):
    """Empirical support radius and the sample count the confidence needs.

    Returns ``(radius, required_n, satisfied)`` where ``radius`` is the
    maximum sample norm and ``required_n = ceil(log(1/beta_c) /
    log(1/(1-eps_c)))``.
    """
    if not (0.0 < eps_c < 1.0 and 0.0 < beta_c < 1.0):
        raise ValueError("eps_c and beta_c must lie in (0, 1)")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    radius = float(np.max(np.linalg.norm(samples, axis=1)))
    required_n = ceil(log(1.0 / beta_c) / log(1.0 / (1.0 - eps_c)))
    return radius, required_n, len(samples) >= required_n


def build_noise_model(samples: np.ndarray, target_clusters: int, eps_c: float,
                      beta_c: float, seed: int = 0) -> NoiseModel:
    clusters = cluster_samples(samples, target_clusters, seed)
    radius, required_n, satisfied = learn_support(samples, eps_c, beta_c)
    return NoiseModel(
        samples=np.atleast_2d(np.asarray(samples, dtype=float)),
        clusters=clusters,
        support_radius=radius,
        eps_c=eps_c,
        beta_c=beta_c,
        required_samples=required_n,
        support_satisfied=satisfied,
    )
