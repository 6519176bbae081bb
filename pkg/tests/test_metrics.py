"""Fréchet-distance evaluation: statistics, embedders, and reports."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from xraygan.data import UnpairedDataset
from xraygan.metrics import (
    ClassifierEmbedder,
    FeatureStats,
    TokenizerEmbedder,
    embed_set,
    eval_run,
    feature_stats,
    format_table,
    frechet_between_sets,
    frechet_distance,
)

import oracles


def gaussian_stats(rng, dim=4, count=200, shift=0.0, scale=1.0):
    feats = rng.normal(shift, scale, size=(count, dim))
    return feature_stats(feats)


# ------------------------------------------------------------- feature stats


def test_feature_stats_hand_values():
    feats = np.array([[0.0, 0.0], [2.0, 2.0]])
    stats = feature_stats(feats)
    assert np.allclose(stats.mean, [1.0, 1.0])
    assert np.allclose(stats.cov, [[2.0, 2.0], [2.0, 2.0]])  # ddof=1
    assert stats.count == 2


def test_feature_stats_needs_two_rows():
    with pytest.raises(ValueError, match="count >= 2"):
        feature_stats(np.ones((1, 3)))


def test_feature_stats_one_dim_cov_is_matrix():
    stats = feature_stats(np.array([[1.0], [3.0], [5.0]]))
    assert stats.cov.shape == (1, 1)
    assert stats.cov[0, 0] == pytest.approx(4.0)


def test_validate_rejects_asymmetric_cov():
    stats = FeatureStats(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 10)
    with pytest.raises(ValueError, match="symmetric"):
        stats.validate()


def test_validate_rejects_indefinite_cov():
    stats = FeatureStats(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]), 10)
    with pytest.raises(ValueError, match="semidefinite"):
        stats.validate()


# ----------------------------------------------------------------- embed_set


def test_embed_set_batching_invariance(small_tokenizer, rng):
    images = torch.from_numpy(
        rng.uniform(-1, 1, size=(7, 1, 64, 64)).astype(np.float32)
    )
    emb = TokenizerEmbedder(small_tokenizer, (1, 2, 3))
    full = embed_set(images, emb, batch_size=32)
    chunked = embed_set(images, emb, batch_size=2)
    assert np.array_equal(full, chunked)
    assert full.shape == (7, emb.dim)
    assert full.dtype == np.float64


def test_embed_set_rejects_single_image(small_tokenizer):
    emb = TokenizerEmbedder(small_tokenizer, (3,))
    with pytest.raises(ValueError, match="at least 2"):
        embed_set(torch.zeros(1, 1, 64, 64), emb)


# ----------------------------------------------------------- frechet distance


def test_frechet_self_distance_is_zero(rng):
    stats = gaussian_stats(rng)
    assert frechet_distance(stats, stats) < 1e-3


def test_frechet_symmetry(rng):
    a, b = gaussian_stats(rng), gaussian_stats(rng, shift=0.7, scale=1.5)
    assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), abs=1e-6)


def test_frechet_equal_cov_reduces_to_mean_shift():
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    v = np.array([1.0, -2.0])
    a = FeatureStats(np.zeros(2), cov, 100)
    b = FeatureStats(v, cov, 100)
    assert frechet_distance(a, b) == pytest.approx(float(v @ v), abs=1e-3)


def test_frechet_one_dim_closed_form():
    a = FeatureStats(np.array([0.0]), np.array([[1.0]]), 100)
    b = FeatureStats(np.array([1.0]), np.array([[4.0]]), 100)
    # (0-1)^2 + 1 + 4 - 2*sqrt(4) = 2
    assert frechet_distance(a, b) == pytest.approx(2.0, abs=1e-6)
    assert frechet_distance(a, b) == pytest.approx(
        oracles.frechet_1d(0.0, 1.0, 1.0, 4.0), abs=1e-9
    )


def test_frechet_matches_scipy_oracle(rng):
    for _ in range(5):
        a = gaussian_stats(rng, dim=5, shift=rng.normal(), scale=abs(rng.normal()) + 0.5)
        b = gaussian_stats(rng, dim=5, shift=rng.normal(), scale=abs(rng.normal()) + 0.5)
        want = oracles.frechet_full(a.mean, a.cov, b.mean, b.cov)
        assert frechet_distance(a, b) == pytest.approx(want, rel=1e-6, abs=1e-8)


def test_frechet_dim_mismatch(rng):
    with pytest.raises(ValueError, match="dim mismatch"):
        frechet_distance(gaussian_stats(rng, dim=3), gaussian_stats(rng, dim=4))


def test_frechet_nonnegative_random(rng):
    for _ in range(20):
        a = gaussian_stats(rng, dim=3, count=10)
        b = gaussian_stats(rng, dim=3, count=10, shift=rng.normal())
        assert frechet_distance(a, b) >= 0.0


def test_frechet_handles_singular_covariance(rng):
    # rank-deficient: second coordinate is a copy of the first
    base = rng.normal(size=(50, 1))
    feats = np.concatenate([base, base], axis=1)
    a = feature_stats(feats)
    b = gaussian_stats(rng, dim=2)
    fd = frechet_distance(a, b)
    assert np.isfinite(fd) and fd >= 0.0


def test_frechet_between_sets_separates_domains(small_tokenizer, desk_dataset):
    emb = TokenizerEmbedder(small_tokenizer, (1, 2, 3))
    across = frechet_between_sets(desk_dataset.images_x, desk_dataset.images_y, emb)
    within = frechet_between_sets(
        desk_dataset.images_x[:32], desk_dataset.images_x[32:], emb
    )
    assert across > within


# ------------------------------------------------------------------ embedders


def test_tokenizer_embedder_matches_manual_pool(small_tokenizer, rng):
    from xraygan.tokenizer import extract_features

    images = torch.from_numpy(
        rng.uniform(-1, 1, size=(3, 1, 64, 64)).astype(np.float32)
    )
    emb = TokenizerEmbedder(small_tokenizer, (0, 2))
    got = emb(images)
    stack = extract_features(small_tokenizer, images, (0, 2))
    want = stack.deepest.tokens.mean(dim=-2).detach().numpy()
    assert np.allclose(got, want)
    assert np.isfinite(got).all()


def test_classifier_embedder_roundtrip(tmp_path, rng):
    class Flatten8(torch.nn.Module):
        def forward(self, x):
            return x.mean(dim=(2, 3)).repeat(1, 8)

    path = tmp_path / "clf.pt"
    torch.jit.save(torch.jit.script(Flatten8()), str(path))
    emb = ClassifierEmbedder(path)
    images = torch.from_numpy(
        rng.uniform(-1, 1, size=(4, 1, 16, 16)).astype(np.float32)
    )
    out = emb(images)
    assert out.shape == (4, 8)
    assert out.dtype == np.float64


# -------------------------------------------------------------------- reports


def test_eval_run_keys_and_identity_reference(tiny_checkpoint, tiny_corpus):
    from xraygan.data import load_unpaired

    ds = load_unpaired(tiny_corpus["dir_x"], tiny_corpus["dir_y"])
    same = UnpairedDataset(ds.images_x, ds.images_x, ds.names_x, ds.names_x)
    report = eval_run(tiny_checkpoint.checkpoint_path, same)
    assert set(report) == {
        "fid_generated_vs_y",
        "fid_x_vs_y",
        "latency_ms",
        "param_count",
        "train_seconds_per_epoch",
    }
    assert report["fid_x_vs_y"] < 1e-3  # x against itself
    assert report["fid_generated_vs_y"] >= 0.0
    assert report["param_count"] > 0
    assert set(report["latency_ms"]) == {"mean", "median", "p95"}


def test_format_table_layout():
    rows = [
        {"method": "input x (no translation)", "fid": 8.87, "param_count": None,
         "train_seconds_per_epoch": None},
        {"method": "translated", "fid": 0.42, "param_count": 197634,
         "train_seconds_per_epoch": 0.9},
    ]
    table = format_table(rows)
    lines = table.splitlines()
    assert lines[0].startswith("Method")
    assert "FID Score" in lines[0] and "#Param" in lines[0]
    assert "Training Time" in lines[0]
    assert "input x (no translation)" in lines[2]
    assert "0.20M" in lines[3] and "0.9" in lines[3]
    assert "-" in lines[2]  # missing fields render as dashes
