"""SSL content features and the disentanglement baselines (standardization, k-means)."""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.cluster import KMeans

from .containers import CODEBOOK_MAGIC, FEATURE_MAGIC, read_matrix, write_matrix
from .errors import (
    ConfigError,
    ContractViolation,
    EmptyFeaturesError,
    InsufficientDataError,
    InsufficientFramesError,
)

logger = logging.getLogger(__name__)

# Frames compared against the codebook per chunk in discretize()
_DISTANCE_CHUNK = 256

# Largest K ** frames solved by exhaustive partition search in fit_kmeans()
_EXACT_SEARCH_LIMIT = 20000


@dataclass
class SSLFeatureMatrix:
    """Frame-level content-encoder output of shape (T_ssl, s)."""

    vectors: np.ndarray
    frame_hop_samples: int
    source_sample_rate: int

    @property
    def s(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def num_frames(self) -> int:
        return int(self.vectors.shape[0])

    def replace(self, vectors: np.ndarray) -> "SSLFeatureMatrix":
        return SSLFeatureMatrix(
            vectors=np.ascontiguousarray(vectors, dtype=np.float32),
            frame_hop_samples=self.frame_hop_samples,
            source_sample_rate=self.source_sample_rate,
        )

    def save(self, path: Union[str, Path]) -> Path:
        return write_matrix(path, FEATURE_MAGIC, self.vectors, self.frame_hop_samples,
                            self.source_sample_rate)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SSLFeatureMatrix":
        vectors, hop, rate = read_matrix(path, FEATURE_MAGIC)
        return cls(vectors=vectors, frame_hop_samples=hop, source_sample_rate=rate)


@dataclass(frozen=True)
class ContentEncoderSpec:
    """Which pretrained encoder to run and which layer to tap."""

    backend_id: str
    layer_index: int = 15
    expected_dim: int = 1024

    def __post_init__(self):
        if self.layer_index < 0:
            raise ConfigError(f"layer_index must be >= 0, got {self.layer_index}")
        if self.expected_dim < 1:
            raise ConfigError(f"expected_dim must be >= 1, got {self.expected_dim}")


@dataclass
class KMeansCodebook:
    """K centroids of dimension s."""

    centroids: np.ndarray
    wcss_history: Optional[List[float]] = None

    @property
    def K(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def s(self) -> int:
        return int(self.centroids.shape[1])

    def save(self, path: Union[str, Path]) -> Path:
        return write_matrix(path, CODEBOOK_MAGIC, self.centroids, 0, 0)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "KMeansCodebook":
        centroids, _, _ = read_matrix(path, CODEBOOK_MAGIC)
        return cls(centroids=centroids)


class FeatureTransform(str, Enum):
    RAW = "raw"
    STANDARDIZE = "standardize"
    DISCRETIZE = "discretize"


def extract_features(clip, spec: ContentEncoderSpec, backend) -> SSLFeatureMatrix:
    """Run the content encoder on a clip.

    Args:
        clip: AudioClip at the backend's sample rate
        spec: Encoder spec (layer to tap, expected dimension)
        backend: Content-encoder adapter

    Returns:
        SSLFeatureMatrix with s == spec.expected_dim
    """
    if clip.sample_rate != backend.sample_rate:
        raise ContractViolation(
            f"Encoder '{backend.name}' expects {backend.sample_rate} Hz audio, got {clip.sample_rate} Hz"
        )
    if len(clip.samples) < backend.frame_hop_samples:
        raise EmptyFeaturesError(
            f"Clip of {len(clip.samples)} samples is shorter than one encoder frame "
            f"({backend.frame_hop_samples} samples)"
        )

    vectors = backend.safe_call("encode", clip.samples, layer_index=spec.layer_index)
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise EmptyFeaturesError(f"Encoder '{backend.name}' returned no frames")
    if vectors.shape[1] != spec.expected_dim:
        raise ContractViolation(
            f"Encoder '{backend.name}' produced {vectors.shape[1]}-dim features, "
            f"expected {spec.expected_dim}"
        )
    if not np.all(np.isfinite(vectors)):
        raise ContractViolation(f"Encoder '{backend.name}' produced non-finite features")

    return SSLFeatureMatrix(
        vectors=np.ascontiguousarray(vectors),
        frame_hop_samples=backend.frame_hop_samples,
        source_sample_rate=clip.sample_rate,
    )


def standardize_per_utterance(f: SSLFeatureMatrix) -> SSLFeatureMatrix:
    """Zero mean, unit (population) std per dimension over the utterance's frames.

    Constant dimensions map to 0.
    """
    if f.num_frames < 2:
        raise InsufficientFramesError(
            f"Per-utterance standardization needs at least 2 frames, got {f.num_frames}"
        )
    x = f.vectors.astype(np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std <= 1e-12
    out = (x - mean) / np.where(constant, 1.0, std)
    out[:, constant] = 0.0
    return f.replace(out)


def _farthest_point_seeds(points: np.ndarray, K: int, first: int) -> np.ndarray:
    chosen = [first]
    min_dist = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(1, K):
        # argmax returns the lowest index on ties
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    labels = np.empty(points.shape[0], dtype=np.int64)
    for start in range(0, points.shape[0], _DISTANCE_CHUNK):
        chunk = points[start:start + _DISTANCE_CHUNK]
        dist = np.sum((chunk[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels[start:start + _DISTANCE_CHUNK] = np.argmin(dist, axis=1)
    return labels


def _wcss(points: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.sum((points - centroids[_assign(points, centroids)]) ** 2))


def _exact_partition(points: np.ndarray, K: int) -> Tuple[np.ndarray, float]:
    """Globally optimal clustering by scoring every labeling of the points.

    A cluster's sum of squares equals its summed pairwise squared distances
    over its size, so only the (n, n) distance matrix is needed.
    """
    n = points.shape[0]
    dist = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    labelings = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64)
    onehot = (labelings[:, :, None] == np.arange(K)).astype(np.float64)
    counts = onehot.sum(axis=1)
    pair_sums = np.einsum("mik,ij,mjk->mk", onehot, dist, onehot) / 2.0
    cost = np.sum(pair_sums / np.maximum(counts, 1.0), axis=1)
    # every cluster non-empty; the first optimal labeling wins
    cost[np.any(counts == 0, axis=1)] = np.inf
    best = int(np.argmin(cost))
    members = onehot[best]
    centroids = (members.T @ points) / counts[best][:, None]
    return centroids, float(cost[best])


def fit_kmeans(features: Sequence[SSLFeatureMatrix], K: int, seed: int,
               max_iter: int = 100, n_init: int = 4) -> KMeansCodebook:
    """Fit a k-means codebook over all frames of the given utterances.

    Small problems (at most ``_EXACT_SEARCH_LIMIT`` labelings) are solved
    exactly. Otherwise sklearn's Lloyd k-means runs from ``n_init``
    farthest-point seedings, whose first seed is drawn from a generator seeded
    with ``seed``, and the restart with the lowest within-cluster sum of
    squares wins.

    Args:
        features: Utterance feature matrices (same s)
        K: Number of clusters
        seed: RNG seed
        max_iter: Iteration cap per restart
        n_init: Number of restarts

    Returns:
        KMeansCodebook whose ``wcss_history`` holds the seeding and final WCSS
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if not features:
        raise InsufficientDataError("No feature matrices given to fit_kmeans")
    dims = {f.s for f in features}
    if len(dims) != 1:
        raise ContractViolation(f"Feature matrices disagree on dimension: {sorted(dims)}")

    points = np.concatenate([f.vectors for f in features], axis=0).astype(np.float64)
    if points.shape[0] < K:
        raise InsufficientDataError(f"Need at least K={K} frames, got {points.shape[0]}")

    if K == 1:
        centroids = points.mean(axis=0, keepdims=True)
        history = [float(np.sum((points - centroids) ** 2))]
    elif points.shape[0] <= 64 and K ** points.shape[0] <= _EXACT_SEARCH_LIMIT:
        centroids, wcss = _exact_partition(points, K)
        history = [wcss]
    else:
        rng = np.random.default_rng(seed)
        starts = rng.permutation(points.shape[0])[:max(1, n_init)]
        best = None
        for first in starts:
            seeds = _farthest_point_seeds(points, K, int(first))
            km = KMeans(n_clusters=K, init=seeds, n_init=1, max_iter=max_iter,
                        algorithm="lloyd", random_state=seed).fit(points)
            if best is None or km.inertia_ < best[1][-1]:
                best = (km.cluster_centers_, [_wcss(points, seeds), float(km.inertia_)])
        centroids, history = best

    logger.info("Fitted k-means codebook", extra={"K": K, "frames": int(points.shape[0]),
                                                  "wcss": history[-1]})
    return KMeansCodebook(centroids=centroids.astype(np.float32), wcss_history=history)


def discretize(f: SSLFeatureMatrix, codebook: KMeansCodebook) -> SSLFeatureMatrix:
    """Replace each frame by its nearest centroid (Euclidean, lowest index on ties)."""
    if codebook.s != f.s:
        raise ContractViolation(f"Codebook dimension {codebook.s} does not match features ({f.s})")
    labels = _assign(f.vectors.astype(np.float64), codebook.centroids.astype(np.float64))
    return f.replace(codebook.centroids[labels])


def apply_feature_transform(f: SSLFeatureMatrix, transform: Union[str, FeatureTransform],
                            codebook: Optional[KMeansCodebook] = None) -> SSLFeatureMatrix:
    """Apply one of the disentanglement variants before the acoustic model."""
    transform = FeatureTransform(transform)
    if transform is FeatureTransform.RAW:
        return f
    if transform is FeatureTransform.STANDARDIZE:
        return standardize_per_utterance(f)
    if codebook is None:
        raise ConfigError("The 'discretize' feature transform needs a codebook")
    return discretize(f, codebook)
