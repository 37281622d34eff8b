"""Tests for SSL feature extraction, standardization and the k-means codebook."""

import itertools

import numpy as np
import pytest

from src.adapters.builtin_adapters import SyntheticEncoder
from src.audio import AudioClip
from src.errors import (
    ConfigError,
    ContractViolation,
    DecodeError,
    EmptyFeaturesError,
    InsufficientDataError,
    InsufficientFramesError,
)
from src.features import (
    ContentEncoderSpec,
    FeatureTransform,
    KMeansCodebook,
    SSLFeatureMatrix,
    apply_feature_transform,
    discretize,
    extract_features,
    fit_kmeans,
    standardize_per_utterance,
)

from conftest import TINY_DIM, voice


def matrix(values) -> SSLFeatureMatrix:
    return SSLFeatureMatrix(vectors=np.asarray(values, dtype=np.float32), frame_hop_samples=320,
                            source_sample_rate=16000)


def test_extract_features_has_one_frame_per_hop(tiny_encoder_spec):
    clip = AudioClip(samples=voice(1.0, 150.0, seed=0), sample_rate=16000)
    f = extract_features(clip, tiny_encoder_spec, SyntheticEncoder(dim=TINY_DIM))
    assert f.vectors.shape == (50, TINY_DIM)
    assert f.frame_hop_samples == 320
    assert f.source_sample_rate == 16000


def test_extract_features_contract_errors(tiny_encoder_spec):
    encoder = SyntheticEncoder(dim=TINY_DIM)
    with pytest.raises(ContractViolation):
        extract_features(AudioClip(samples=voice(0.5, 150.0, seed=0, rate=22050), sample_rate=22050),
                         tiny_encoder_spec, encoder)
    with pytest.raises(EmptyFeaturesError):
        extract_features(AudioClip(samples=np.zeros(100, dtype=np.float32), sample_rate=16000),
                         tiny_encoder_spec, encoder)
    wide = ContentEncoderSpec(backend_id="synthetic", layer_index=0, expected_dim=2 * TINY_DIM)
    with pytest.raises(ContractViolation):
        extract_features(AudioClip(samples=voice(0.5, 150.0, seed=0), sample_rate=16000), wide, encoder)


def test_encoder_spec_validation():
    with pytest.raises(ConfigError):
        ContentEncoderSpec(backend_id="wavlm", layer_index=-1)
    with pytest.raises(ConfigError):
        ContentEncoderSpec(backend_id="wavlm", expected_dim=0)


def test_standardization_gives_zero_mean_unit_std():
    rng = np.random.default_rng(0)
    f = matrix(rng.normal(3.0, 2.5, size=(40, 8)))
    out = standardize_per_utterance(f).vectors.astype(np.float64)
    assert np.all(np.abs(out.mean(axis=0)) < 1e-5)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-4)


def test_standardization_is_idempotent():
    rng = np.random.default_rng(1)
    once = standardize_per_utterance(matrix(rng.normal(size=(30, 6))))
    twice = standardize_per_utterance(once)
    np.testing.assert_allclose(twice.vectors, once.vectors, atol=1e-5)


def test_standardization_maps_constant_dimensions_to_zero():
    rng = np.random.default_rng(2)
    values = rng.normal(size=(10, 3))
    values[:, 1] = 4.0
    out = standardize_per_utterance(matrix(values)).vectors
    assert np.all(out[:, 1] == 0.0)


def test_standardization_needs_two_frames():
    with pytest.raises(InsufficientFramesError):
        standardize_per_utterance(matrix(np.ones((1, 4))))


def brute_force_wcss(points: np.ndarray, K: int) -> float:
    best = np.inf
    for labels in itertools.product(range(K), repeat=len(points)):
        labels = np.asarray(labels)
        total = 0.0
        for k in range(K):
            members = points[labels == k]
            if len(members):
                total += float(np.sum((members - members.mean(axis=0)) ** 2))
        best = min(best, total)
    return best


@pytest.mark.parametrize("instance", range(20))
def test_kmeans_matches_exhaustive_partition_on_separated_blobs(instance):
    rng = np.random.default_rng(100 + instance)
    K = int(rng.integers(1, 4))
    n = int(rng.integers(K, 9))
    centers = rng.normal(scale=1.0, size=(K, 2)) + 100.0 * np.arange(K)[:, None]
    labels = np.concatenate([np.arange(K), rng.integers(0, K, size=n - K)])
    points = (centers[labels] + rng.normal(scale=1.0, size=(n, 2))).astype(np.float32).astype(np.float64)

    codebook = fit_kmeans([matrix(points)], K=K, seed=instance)
    assert codebook.K == K
    assert codebook.wcss_history[-1] <= brute_force_wcss(points, K) + 1e-6


def nearest_centroid_wcss(points: np.ndarray, centroids: np.ndarray) -> float:
    dist = np.sum((points[:, None, :] - centroids[None, :, :].astype(np.float64)) ** 2, axis=2)
    return float(dist.min(axis=1).sum())


@pytest.mark.parametrize("instance", range(60))
def test_kmeans_matches_exhaustive_partition_on_arbitrary_points(instance):
    # overlapping gaussian clouds, where Lloyd iterations alone stall in local optima
    rng = np.random.default_rng(500 + instance)
    K = int(rng.integers(2, 4))
    n = int(rng.integers(max(K, 4), 9))
    points = rng.normal(size=(n, int(rng.integers(1, 4)))).astype(np.float32).astype(np.float64)

    codebook = fit_kmeans([matrix(points)], K=K, seed=instance)
    optimum = brute_force_wcss(points, K)
    assert codebook.wcss_history[-1] == pytest.approx(optimum, abs=1e-9)
    assert nearest_centroid_wcss(points, codebook.centroids) == pytest.approx(optimum, rel=1e-5, abs=1e-5)


def test_kmeans_with_one_cluster_is_the_mean():
    points = np.random.default_rng(6).normal(size=(500, 3))
    codebook = fit_kmeans([matrix(points)], K=1, seed=0)
    np.testing.assert_allclose(codebook.centroids[0], points.mean(axis=0), atol=1e-6)


def test_kmeans_wcss_never_increases():
    rng = np.random.default_rng(3)
    points = rng.normal(size=(200, 4))
    history = fit_kmeans([matrix(points)], K=5, seed=0).wcss_history
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_kmeans_is_deterministic_for_a_seed():
    rng = np.random.default_rng(4)
    feats = [matrix(rng.normal(size=(50, 4))), matrix(rng.normal(size=(30, 4)))]
    a = fit_kmeans(feats, K=3, seed=11)
    b = fit_kmeans(feats, K=3, seed=11)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_errors():
    with pytest.raises(ConfigError):
        fit_kmeans([matrix(np.ones((4, 2)))], K=0, seed=0)
    with pytest.raises(InsufficientDataError):
        fit_kmeans([], K=2, seed=0)
    with pytest.raises(InsufficientDataError):
        fit_kmeans([matrix(np.ones((2, 2)))], K=3, seed=0)
    with pytest.raises(ContractViolation):
        fit_kmeans([matrix(np.ones((4, 2))), matrix(np.ones((4, 3)))], K=2, seed=0)


def test_discretize_snaps_to_centroids_and_is_idempotent():
    rng = np.random.default_rng(5)
    codebook = KMeansCodebook(centroids=rng.normal(size=(6, 4)).astype(np.float32))
    f = matrix(rng.normal(size=(25, 4)))
    once = discretize(f, codebook)
    for row in once.vectors:
        assert any(np.array_equal(row, c) for c in codebook.centroids)
    assert np.array_equal(discretize(once, codebook).vectors, once.vectors)


def test_discretize_breaks_ties_toward_lower_index():
    codebook = KMeansCodebook(centroids=np.array([[1.0, 0.0], [-1.0, 0.0]], dtype=np.float32))
    out = discretize(matrix([[0.0, 0.0]]), codebook)
    assert np.array_equal(out.vectors[0], codebook.centroids[0])


def test_discretize_rejects_dimension_mismatch():
    codebook = KMeansCodebook(centroids=np.zeros((2, 3), dtype=np.float32))
    with pytest.raises(ContractViolation):
        discretize(matrix(np.zeros((4, 2))), codebook)


def test_apply_feature_transform_dispatch():
    rng = np.random.default_rng(6)
    f = matrix(rng.normal(size=(12, 4)))
    assert apply_feature_transform(f, "raw") is f
    std = apply_feature_transform(f, FeatureTransform.STANDARDIZE)
    np.testing.assert_allclose(std.vectors, standardize_per_utterance(f).vectors)
    with pytest.raises(ConfigError):
        apply_feature_transform(f, "discretize")
    with pytest.raises(ValueError):
        apply_feature_transform(f, "whiten")


def test_feature_and_codebook_files_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    f = matrix(rng.normal(size=(9, 5)))
    back = SSLFeatureMatrix.load(f.save(tmp_path / "f.feat"))
    assert np.array_equal(back.vectors, f.vectors)
    assert (back.frame_hop_samples, back.source_sample_rate) == (320, 16000)

    codebook = KMeansCodebook(centroids=rng.normal(size=(3, 5)).astype(np.float32))
    assert np.array_equal(KMeansCodebook.load(codebook.save(tmp_path / "c.kmcb")).centroids,
                          codebook.centroids)


def test_loading_the_wrong_container_kind_fails(tmp_path):
    path = matrix(np.zeros((2, 2))).save(tmp_path / "f.feat")
    with pytest.raises(DecodeError):
        KMeansCodebook.load(path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DecodeError):
        SSLFeatureMatrix.load(path)
