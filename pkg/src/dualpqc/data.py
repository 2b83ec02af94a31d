"""Calorimeter-profile datasets and evaluation metrics.

Dataset file format: one sample per line, comma-separated non-negative
energies, ``2**n`` values per line.  Blank lines and lines starting with
``#`` are ignored.  Rows are normalized to unit sum on load, so raw energies
are accepted.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammainc

from .errors import DatasetParseError, DomainError

KL_FLOOR = 1e-12

# synthetic shower model: depth range split into equal bins
SHOWER_DEPTH = 8.0
SHAPE_RANGE = (2.0, 4.5)
RATE_RANGE = (0.9, 1.6)


def normalize_rows(rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    return rows / rows.sum(axis=1, keepdims=True)


def gen_synthetic_dataset(n_samples: int, seed: int, n_pixels: int = 4) -> np.ndarray:
    """Longitudinal gamma-profile showers binned into ``n_pixels`` depth bins.

    Each sample draws shape ``a`` and rate ``b`` uniformly from
    ``SHAPE_RANGE`` / ``RATE_RANGE``; the energy in bin ``[t0, t1]`` of the
    profile ``t**(a-1) * exp(-b*t)`` is a difference of regularized lower
    incomplete gamma functions.
    """
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    shape = rng.uniform(*SHAPE_RANGE, size=n_samples)
    rate = rng.uniform(*RATE_RANGE, size=n_samples)
    edges = np.linspace(0.0, SHOWER_DEPTH, n_pixels + 1)
    cdf = gammainc(shape[:, None], rate[:, None] * edges[None, :])
    return normalize_rows(np.diff(cdf, axis=1))


def load_dataset(path, width: int = None) -> np.ndarray:
    """Read a dataset file; ``width`` defaults to the width of the first row."""
    text = Path(path).read_text()
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values = [float(tok) for tok in line.split(",")]
        except ValueError:
            raise DatasetParseError(f"non-numeric token in {line!r}", line=lineno) from None
        if width is None:
            width = len(values)
            if width < 2 or width & (width - 1):
                raise DatasetParseError(f"row width {width} is not a power of two >= 2", line=lineno)
        if len(values) != width:
            raise DatasetParseError(f"expected {width} values, got {len(values)}", line=lineno)
        if any(not np.isfinite(v) for v in values):
            raise DatasetParseError("non-finite energy", line=lineno)
        if any(v < 0 for v in values):
            raise DatasetParseError("negative energy", line=lineno)
        if sum(values) <= 0:
            raise DatasetParseError("row has zero total energy", line=lineno)
        rows.append(values)
    if not rows:
        raise DatasetParseError(f"{path}: no data rows")
    return normalize_rows(rows)


def save_dataset(data, path) -> None:
    data = np.asarray(data, dtype=float)
    header = "# " + ",".join(f"pixel_{j}" for j in range(data.shape[1]))
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in data)
    Path(path).write_text(header + "\n" + body + "\n")


@dataclass
class ClusterResult:
    assignments: np.ndarray
    means: np.ndarray
    # within-cluster sum of squares after each assignment step
    objective_history: list = field(default_factory=list)
    iterations: int = 0

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=len(self.means))


def _sq_dists(data, centers):
    return ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(data, k, rng):
    centers = [data[rng.integers(len(data))]]
    closest = _sq_dists(data, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point already coincides with a center
            idx = rng.integers(len(data))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.uniform(0, total), side="right"))
            idx = min(idx, len(data) - 1)
        centers.append(data[idx])
        closest = np.minimum(closest, _sq_dists(data, data[idx][None, :])[:, 0])
    return np.array(centers)


def kmeans(data, k: int, seed: int = 0, max_iters: int = 300) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding and squared-Euclidean assignment.

    Ties go to the lowest cluster index.  A cluster left empty after an
    update is re-seeded at the point farthest from its current center.
    """
    data = np.asarray(data, dtype=float)
    if not 1 <= k <= len(data):
        raise DomainError(f"k must be in [1, {len(data)}], got {k}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(data, k, rng)
    assignments = None
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        dists = _sq_dists(data, centers)
        new = np.argmin(dists, axis=1)
        history.append(float(dists[np.arange(len(data)), new].sum()))
        if assignments is not None and np.array_equal(new, assignments):
            break
        assignments = new
        for c in range(k):
            members = assignments == c
            if members.any():
                centers[c] = data[members].mean(axis=0)
        empty = [c for c in range(k) if not np.any(assignments == c)]
        if empty:
            own = dists[np.arange(len(data)), assignments]
            for c in empty:
                far = int(np.argmax(own))
                own[far] = -np.inf
                centers[c] = data[far]
                assignments[far] = c
    means = np.array([data[assignments == c].mean(axis=0) for c in range(k)])
    return ClusterResult(assignments=assignments, means=means, objective_history=history, iterations=it)


def relative_entropy(p, q) -> float:
    """KL(p || q) after flooring both at ``KL_FLOOR`` and renormalizing."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DomainError(f"length mismatch: {p.shape} vs {q.shape}")
    p = np.maximum(p, KL_FLOOR)
    q = np.maximum(q, KL_FLOOR)
    p = p / p.sum()
    q = q / q.sum()
    return max(0.0, float(np.sum(p * np.log(p / q))))


def kl_matrix(cluster_means, images) -> np.ndarray:
    """``out[s, i] = relative_entropy(cluster_means[s], images[i])``."""
    return np.array([[relative_entropy(m, img) for img in images] for m in cluster_means])


@dataclass
class Bijection:
    # perm[i] is the cluster matched to generated image i
    perm: tuple
    pair_kl: np.ndarray
    total_kl: float


def match_bijection(images, cluster_means) -> Bijection:
    """Exhaustive search for the image-to-cluster permutation of least total KL.

    Ties resolve to the lexicographically first permutation.
    """
    images = np.asarray(images, dtype=float)
    cluster_means = np.asarray(cluster_means, dtype=float)
    if images.shape != cluster_means.shape:
        raise DomainError(f"image set {images.shape} and cluster means {cluster_means.shape} differ")
    cost = kl_matrix(cluster_means, images)  # [set, image]
    idx = np.arange(len(images))
    best, best_total = None, np.inf
    for perm in itertools.permutations(range(len(images))):
        total = float(cost[list(perm), idx].sum())
        if total < best_total:
            best, best_total = perm, total
    return Bijection(perm=best, pair_kl=cost[list(best), idx], total_kl=best_total)
