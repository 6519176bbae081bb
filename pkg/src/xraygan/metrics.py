"""Fréchet-distance evaluation between image sets and report formatting.

The default embedder reuses the frozen patch-token extractor (deepest
selected block, mean-pooled), giving a "desk FID": internally consistent
for comparing runs of this codebase, but not comparable with published
scores from classifier-based embedders. A TorchScript classifier can be
plugged in for that purpose.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .networks import count_parameters
from .tokenizer import PatchTokenizer, extract_features
from .trainer import LoadedCheckpoint, load_checkpoint, translate

EIGEN_TOLERANCE = -1e-6
REGULARIZER = 1e-6


@dataclass
class FeatureStats:
    """Gaussian fit of an embedded image set."""

    mean: np.ndarray  # (m,)
    cov: np.ndarray  # (m, m)
    count: int

    def validate(self) -> None:
        if self.mean.ndim != 1 or self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("stats shape mismatch between mean and covariance")
        if self.count < 2:
            raise ValueError("need at least 2 samples for covariance")
        if not np.allclose(self.cov, self.cov.T, atol=1e-8):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh((self.cov + self.cov.T) / 2).min() < EIGEN_TOLERANCE:
            raise ValueError("covariance is not positive semidefinite")


def feature_stats(features: np.ndarray) -> FeatureStats:
    """Mean and unbiased covariance of a (count, m) feature matrix."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 2:
        raise ValueError("need a (count >= 2, m) feature matrix")
    mean = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    return FeatureStats(mean=mean, cov=cov, count=feats.shape[0])


class TokenizerEmbedder:
    """Mean-pooled deepest-block tokens from the frozen extractor."""

    def __init__(self, tokenizer: PatchTokenizer, block_ids: Sequence[int]):
        self.tokenizer = tokenizer
        self.block_ids = tuple(block_ids)

    @property
    def dim(self) -> int:
        return self.tokenizer.config.dim

    def __call__(self, batch: torch.Tensor) -> np.ndarray:
        with torch.no_grad():
            stack = extract_features(self.tokenizer, batch, self.block_ids)
            pooled = stack.deepest.tokens.mean(dim=-2)
        return pooled.cpu().numpy().astype(np.float64)


class ClassifierEmbedder:
    """TorchScript classifier mapping (B, C, H, W) in [-1, 1] to (B, m)."""

    def __init__(self, path: str | Path):
        self.module = torch.jit.load(str(path), map_location="cpu")
        self.module.eval()

    def __call__(self, batch: torch.Tensor) -> np.ndarray:
        with torch.no_grad():
            out = self.module(batch)
        return out.cpu().numpy().astype(np.float64)


def embed_set(
    images: torch.Tensor,
    embedder: Callable[[torch.Tensor], np.ndarray],
    batch_size: int = 32,
) -> np.ndarray:
    """Deterministic per-image embeddings, stacked as (count, m)."""
    if images.ndim == 3:
        images = images.unsqueeze(0)
    if images.shape[0] < 2:
        raise ValueError("need at least 2 images to embed a set")
    chunks = [
        np.asarray(embedder(images[i : i + batch_size]))
        for i in range(0, images.shape[0], batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, negatives clipped at 0."""
    vals, vecs = np.linalg.eigh((matrix + matrix.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _trace_sqrt_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    root_a = _sqrtm_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2)
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), clipped at 0."""
    if a.mean.shape != b.mean.shape:
        raise ValueError(
            f"embedding dim mismatch: {a.mean.shape} vs {b.mean.shape}"
        )
    a.validate()
    b.validate()
    diff = a.mean - b.mean
    try:
        tr = _trace_sqrt_product(a.cov, b.cov)
        if not np.isfinite(tr):
            raise np.linalg.LinAlgError("non-finite trace")
    except np.linalg.LinAlgError:
        eye = np.eye(a.cov.shape[0]) * REGULARIZER
        tr = _trace_sqrt_product(a.cov + eye, b.cov + eye)
        if not np.isfinite(tr):
            raise ValueError("matrix square root failed even after regularization")
    fd = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr)
    return max(fd, 0.0)


def frechet_between_sets(
    set_a: torch.Tensor,
    set_b: torch.Tensor,
    embedder: Callable[[torch.Tensor], np.ndarray],
) -> float:
    return frechet_distance(
        feature_stats(embed_set(set_a, embedder)),
        feature_stats(embed_set(set_b, embedder)),
    )


def eval_run(
    checkpoint: str | Path | LoadedCheckpoint,
    dataset,
    embedder: Callable[[torch.Tensor], np.ndarray] | None = None,
) -> dict:
    """Score a checkpoint on an unpaired dataset.

    Returns the translated-vs-real distance, the untrained x-vs-real
    reference distance, inference latency stats, and the trainable
    parameter count.
    """
    loaded = (
        checkpoint
        if isinstance(checkpoint, LoadedCheckpoint)
        else load_checkpoint(checkpoint)
    )
    if embedder is None:
        embedder = TokenizerEmbedder(loaded.tokenizer, loaded.config.block_ids)
    translated, latency = translate(loaded, dataset.images_x)
    stats_y = feature_stats(embed_set(dataset.images_y, embedder))
    fid_generated = frechet_distance(
        feature_stats(embed_set(translated, embedder)), stats_y
    )
    fid_raw = frechet_distance(
        feature_stats(embed_set(dataset.images_x, embedder)), stats_y
    )
    trainable = count_parameters(loaded.generator) + count_parameters(
        loaded.discriminator
    )
    return {
        "fid_generated_vs_y": fid_generated,
        "fid_x_vs_y": fid_raw,
        "latency_ms": latency,
        "param_count": trainable,
        "train_seconds_per_epoch": loaded.train_seconds_per_epoch,
    }


def format_table(rows: list[dict]) -> str:
    """Plain-text comparison table: method, FID, #Param, training time."""
    header = f"{'Method':<24}{'FID Score':>12}{'#Param':>12}{'Training Time':>16}"
    lines = [header, "-" * len(header)]
    for row in rows:
        params = row.get("param_count")
        param_str = f"{params / 1e6:.2f}M" if params is not None else "-"
        secs = row.get("train_seconds_per_epoch")
        secs_str = f"{secs:.1f}" if secs is not None else "-"
        lines.append(
            f"{row['method']:<24}{row['fid']:>12.2f}{param_str:>12}{secs_str:>16}"
        )
    return "\n".join(lines)
