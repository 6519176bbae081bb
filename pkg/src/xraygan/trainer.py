"""Alternating adversarial optimization over unpaired batches.

Each step first updates the discriminator on real images and detached
generator outputs, then updates the generator on the adversarial term plus
the weighted token-matching loss. The extractor stays frozen throughout;
only its activations participate in gradients. All randomness is seeded, so
a fixed config reproduces losses and weights exactly.
"""

from __future__ import annotations

import json
import os
import random
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig, train_config_from_dict
from .data import UnpairedDataset, load_unpaired
from .matching import LossReport, semantic_loss
from .networks import (
    Discriminator,
    Generator,
    build_discriminator,
    build_generator,
)
from .tokenizer import PatchTokenizer, extract_features, load_tokenizer

CHECKPOINT_FORMAT_VERSION = 1

# keeps log() finite when the head saturates
PROB_CLAMP = 1e-7


class NonFiniteLossError(RuntimeError):
    """A training step produced NaN/inf; message carries the batch index."""


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def _log(p: torch.Tensor) -> torch.Tensor:
    return torch.log(p.clamp(min=PROB_CLAMP, max=1.0 - PROB_CLAMP))


def _check_finite(value: torch.Tensor, what: str, batch_index: int) -> None:
    if not torch.isfinite(value).all():
        raise NonFiniteLossError(
            f"non-finite {what} at batch index {batch_index}; aborting step"
        )


def discriminator_step(
    d: Discriminator,
    g: Generator,
    tokenizer: PatchTokenizer,
    batch_x: torch.Tensor,
    batch_y: torch.Tensor,
    opt_d: torch.optim.Optimizer,
    block_ids,
    batch_index: int = 0,
) -> float:
    """One critic update; generator outputs are detached, G and extractor untouched."""
    if batch_x.shape[0] == 0 or batch_y.shape[0] == 0:
        raise ValueError("batches must be non-empty")
    with torch.no_grad():
        fake = g(batch_x)
        _check_finite(fake, "generator output", batch_index)
        feats_real = extract_features(tokenizer, batch_y, block_ids)
        feats_fake = extract_features(tokenizer, fake, block_ids)
    p_real = d(feats_real)
    p_fake = d(feats_fake)
    l_d = -_log(p_real).mean() - _log(1.0 - p_fake).mean()
    _check_finite(l_d, "discriminator loss", batch_index)
    opt_d.zero_grad()
    l_d.backward()
    opt_d.step()
    return float(l_d.detach())


def generator_step(
    g: Generator,
    d: Discriminator,
    tokenizer: PatchTokenizer,
    batch_x: torch.Tensor,
    loss_config,
    opt_g: torch.optim.Optimizer,
    adversarial: str = "saturating",
    batch_index: int = 0,
) -> LossReport:
    """One generator update on the adversarial term plus lambda * matching loss."""
    if batch_x.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    yhat = g(batch_x)
    _check_finite(yhat, "generator output", batch_index)
    with torch.no_grad():
        feats_x = extract_features(tokenizer, batch_x, loss_config.block_ids)
    feats_yhat = extract_features(tokenizer, yhat, loss_config.block_ids)
    if loss_config.lam > 0.0:
        l_self, l_cross, l_sem = semantic_loss(feats_x, feats_yhat, loss_config)
    else:
        with torch.no_grad():  # matching terms logged but unweighted
            l_self, l_cross, l_sem = semantic_loss(feats_x, feats_yhat, loss_config)
    p_fake = d(feats_yhat)
    if adversarial == "non_saturating":
        adv = -_log(p_fake).mean()
    else:
        adv = _log(1.0 - p_fake).mean()
    l_g = adv + loss_config.lam * l_sem
    _check_finite(l_g, "generator loss", batch_index)
    opt_g.zero_grad()
    l_g.backward()
    opt_g.step()
    return LossReport(
        l_self=float(l_self.detach()),
        l_cross=float(l_cross.detach()),
        l_sem=float(l_sem.detach()),
        l_g=float(l_g.detach()),
    )


def _atomic_torch_save(payload: dict, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def save_checkpoint(
    path: str | Path,
    config: TrainConfig,
    generator: Generator,
    discriminator: Discriminator,
    tokenizer: PatchTokenizer,
    step: int,
    train_seconds_per_epoch: float | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "translation_checkpoint",
        "config": config.to_dict(),
        "generator_state": generator.state_dict(),
        "discriminator_state": discriminator.state_dict(),
        "tokenizer_state": tokenizer.state_dict(),
        "step": step,
        "train_seconds_per_epoch": train_seconds_per_epoch,
    }
    _atomic_torch_save(payload, Path(path))


@dataclass
class LoadedCheckpoint:
    config: TrainConfig
    generator: Generator
    discriminator: Discriminator
    tokenizer: PatchTokenizer
    step: int
    train_seconds_per_epoch: float | None


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ValueError(f"corrupt checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != "translation_checkpoint":
        raise ValueError(f"{path} is not a translation checkpoint")
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format version {payload.get('format_version')}"
        )
    config = train_config_from_dict(payload["config"])
    generator = Generator(config.generator)
    discriminator = Discriminator(config.tokenizer.dim, config.discriminator)
    tokenizer = PatchTokenizer(config.tokenizer)
    try:
        generator.load_state_dict(payload["generator_state"])
        discriminator.load_state_dict(payload["discriminator_state"])
        tokenizer.load_state_dict(payload["tokenizer_state"])
    except RuntimeError as exc:
        raise ValueError(f"checkpoint config/weights mismatch in {path}: {exc}") from exc
    for p in tokenizer.parameters():
        p.requires_grad_(False)
    tokenizer.eval()
    generator.eval()
    discriminator.eval()
    return LoadedCheckpoint(
        config=config,
        generator=generator,
        discriminator=discriminator,
        tokenizer=tokenizer,
        step=int(payload["step"]),
        train_seconds_per_epoch=payload.get("train_seconds_per_epoch"),
    )


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    epoch_summaries: list[dict]
    config: TrainConfig

    @property
    def seconds_per_epoch(self) -> float:
        return float(np.mean([e["seconds"] for e in self.epoch_summaries]))


def _epoch_order(rng: np.random.Generator, count: int, steps: int, batch: int) -> np.ndarray:
    """Shuffled indices covering steps*batch draws, wrapping around the set."""
    need = steps * batch
    reps = -(-need // count)
    order = np.concatenate([rng.permutation(count) for _ in range(reps)])
    return order[:need]


def train(
    config: TrainConfig,
    dataset: UnpairedDataset | None = None,
    out_dir: str | Path = "runs/latest",
) -> TrainResult:
    """Run the full training loop; writes metrics JSONL and checkpoints."""
    config.validate()
    if dataset is None:
        if not config.data.dir_x or not config.data.dir_y:
            raise ValueError("data.dir_x and data.dir_y are required to train")
        dataset = load_unpaired(
            config.data.dir_x,
            config.data.dir_y,
            config.data.image_size,
            config.data.channels,
        )
    nx, ny = dataset.sizes
    if nx < 1 or ny < 1:
        raise ValueError("both domains must contain at least one image")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed_everything(config.seed)
    tokenizer = load_tokenizer(config.tokenizer)
    generator = build_generator(config.generator, seed=config.seed)
    discriminator = build_discriminator(
        config.tokenizer.dim, config.discriminator, seed=config.seed + 1
    )
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr_g, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(
        discriminator.parameters(), lr=config.lr_d, betas=(0.5, 0.999)
    )
    loss_config = config.loss_config()
    order_rng = np.random.default_rng(config.seed)

    batch = config.batch_size
    steps_per_epoch = max(1, max(nx, ny) // batch)
    metrics_path = out / "metrics.jsonl"
    checkpoint_path = out / "checkpoint.pt"
    epoch_summaries: list[dict] = []
    step = 0

    generator.train()
    discriminator.train()
    with metrics_path.open("w") as metrics_file:
        for epoch in range(config.epochs):
            epoch_start = time.perf_counter()
            idx_x = _epoch_order(order_rng, nx, steps_per_epoch, batch)
            idx_y = _epoch_order(order_rng, ny, steps_per_epoch, batch)
            records: list[LossReport] = []
            for s in range(steps_per_epoch):
                step_start = time.perf_counter()
                bx = dataset.images_x[idx_x[s * batch : (s + 1) * batch]]
                by = dataset.images_y[idx_y[s * batch : (s + 1) * batch]]
                l_d = discriminator_step(
                    discriminator, generator, tokenizer, bx, by, opt_d,
                    loss_config.block_ids, batch_index=s,
                )
                report = generator_step(
                    generator, discriminator, tokenizer, bx, loss_config, opt_g,
                    adversarial=config.adversarial, batch_index=s,
                )
                report.l_d = l_d
                records.append(report)
                record = {"step": step, "epoch": epoch}
                record.update(report.to_dict())
                record["seconds"] = time.perf_counter() - step_start
                metrics_file.write(json.dumps(record) + "\n")
                step += 1
            metrics_file.flush()
            summary = {
                "epoch": epoch,
                "seconds": time.perf_counter() - epoch_start,
            }
            for key in ("l_d", "l_g", "l_self", "l_cross", "l_sem"):
                summary[key] = float(np.mean([r.to_dict()[key] for r in records]))
            epoch_summaries.append(summary)
            if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                save_checkpoint(
                    out / f"checkpoint_epoch{epoch:04d}.pt",
                    config, generator, discriminator, tokenizer, step,
                )

    seconds_per_epoch = float(np.mean([e["seconds"] for e in epoch_summaries]))
    save_checkpoint(
        checkpoint_path, config, generator, discriminator, tokenizer, step,
        train_seconds_per_epoch=seconds_per_epoch,
    )
    (out / "epoch_summaries.jsonl").write_text(
        "".join(json.dumps(e) + "\n" for e in epoch_summaries)
    )
    return TrainResult(
        checkpoint_path=checkpoint_path,
        metrics_path=metrics_path,
        epoch_summaries=epoch_summaries,
        config=config,
    )


def translate(
    checkpoint: str | Path | LoadedCheckpoint,
    images: torch.Tensor,
) -> tuple[torch.Tensor, dict]:
    """Apply the trained translator; returns (outputs, per-image latency stats).

    Latency is measured per single-image forward pass, in milliseconds.
    """
    loaded = (
        checkpoint
        if isinstance(checkpoint, LoadedCheckpoint)
        else load_checkpoint(checkpoint)
    )
    g = loaded.generator
    g.eval()
    if images.ndim == 3:
        images = images.unsqueeze(0)
    if images.shape[1] != loaded.config.generator.channels:
        raise ValueError(
            f"checkpoint expects {loaded.config.generator.channels} channels, "
            f"got {images.shape[1]}"
        )
    outputs = []
    times_ms = []
    with torch.no_grad():
        for i in range(images.shape[0]):
            start = time.perf_counter()
            outputs.append(g(images[i : i + 1]))
            times_ms.append((time.perf_counter() - start) * 1000.0)
    stats = {
        "mean": float(np.mean(times_ms)),
        "median": float(np.median(times_ms)),
        "p95": float(np.percentile(times_ms, 95)),
    }
    return torch.cat(outputs, dim=0), stats
