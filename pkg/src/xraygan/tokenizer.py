"""Frozen patch-token extractor.

Images are split into non-overlapping patches that act as tokens and pushed
through a small transformer encoder. Token sequences from several
intermediate blocks (with the leading summary token stripped) feed both the
matching losses and the discriminator head. The extractor's weights never
train; it is either loaded from a weight file or scratch-initialized from a
seeded config.

Image convention: channels-first float tensors, (C, H, W) or (B, C, H, W),
with pixel values in [-1, 1].
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import Tensor, nn

from .config import TokenizerConfig

TOKENIZER_FORMAT_VERSION = 1

_RANGE_EPS = 1e-6


def check_image(image: Tensor, patch_size: int | None = None) -> None:
    """Validate the image contract: rank, value range, patch divisibility."""
    if image.ndim not in (3, 4):
        raise ValueError(f"image must be (C,H,W) or (B,C,H,W), got {image.ndim}D")
    if not torch.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    lo, hi = image.min().item(), image.max().item()
    if lo < -1.0 - _RANGE_EPS or hi > 1.0 + _RANGE_EPS:
        raise ValueError(f"image values outside [-1, 1]: min={lo:.4g} max={hi:.4g}")
    if patch_size is not None:
        h, w = image.shape[-2], image.shape[-1]
        if h % patch_size or w % patch_size:
            raise ValueError(
                f"image {h}x{w} not divisible by patch size {patch_size}"
            )


def patchify(image: Tensor, patch_size: int) -> Tensor:
    """Split into row-major non-overlapping patches, one flat row per patch.

    (C, H, W) -> (n, P*P*C) with n = (H/P)*(W/P); a leading batch dimension
    is carried through. Within a patch, values are ordered pixel-row,
    pixel-column, channel.
    """
    check_image(image, patch_size)
    squeeze = image.ndim == 3
    x = image.unsqueeze(0) if squeeze else image
    b, c, h, w = x.shape
    gh, gw = h // patch_size, w // patch_size
    x = x.reshape(b, c, gh, patch_size, gw, patch_size)
    x = x.permute(0, 2, 4, 3, 5, 1)  # (b, gh, gw, P, P, C)
    patches = x.reshape(b, gh * gw, patch_size * patch_size * c)
    return patches.squeeze(0) if squeeze else patches


def unpatchify(patches: Tensor, image_shape: Sequence[int], patch_size: int) -> Tensor:
    """Inverse tiling of :func:`patchify`; exact reconstruction."""
    c, h, w = image_shape
    squeeze = patches.ndim == 2
    p = patches.unsqueeze(0) if squeeze else patches
    b = p.shape[0]
    gh, gw = h // patch_size, w // patch_size
    x = p.reshape(b, gh, gw, patch_size, patch_size, c)
    x = x.permute(0, 5, 1, 3, 2, 4)  # (b, C, gh, P, gw, P)
    image = x.reshape(b, c, h, w)
    return image.squeeze(0) if squeeze else image


@dataclass
class TokenSet:
    """Patch tokens of one image (or a batch) at one extractor block."""

    tokens: Tensor  # (n, d) or (B, n, d)
    block_id: int

    def __post_init__(self) -> None:
        if self.tokens.ndim not in (2, 3):
            raise ValueError(
                f"tokens must be (n,d) or (B,n,d), got {self.tokens.ndim}D"
            )

    @property
    def n(self) -> int:
        return self.tokens.shape[-2]

    @property
    def d(self) -> int:
        return self.tokens.shape[-1]


@dataclass
class FeatureStack:
    """TokenSets from the selected intermediate blocks, shallow to deep."""

    sets: list[TokenSet]

    def __post_init__(self) -> None:
        if not self.sets:
            raise ValueError("feature stack needs at least one block")
        ids = [s.block_id for s in self.sets]
        if ids != sorted(set(ids)):
            raise ValueError(f"block ids must be strictly increasing, got {ids}")
        n, d = self.sets[0].n, self.sets[0].d
        for s in self.sets:
            if (s.n, s.d) != (n, d):
                raise ValueError("all blocks must share token count and dim")

    @property
    def block_ids(self) -> tuple[int, ...]:
        return tuple(s.block_id for s in self.sets)

    @property
    def num_blocks(self) -> int:
        return len(self.sets)

    @property
    def deepest(self) -> TokenSet:
        return self.sets[-1]


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim)
        )

    def forward(self, x: Tensor) -> Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class PatchTokenizer(nn.Module):
    """Small ViT-style encoder exposing per-block token sequences.

    A learned summary token is prepended before the blocks and stripped from
    every extracted TokenSet, so token i always corresponds to patch i of
    the image grid.
    """

    def __init__(self, config: TokenizerConfig):
        super().__init__()
        config.validate()
        self.config = config
        patch_dim = config.patch_size**2 * config.channels
        self.patch_embed = nn.Linear(patch_dim, config.dim)
        self.cls_token = nn.Parameter(torch.randn(1, 1, config.dim) * 0.02)
        self.pos_embed = nn.Parameter(
            torch.randn(1, config.num_tokens + 1, config.dim) * 0.02
        )
        self.blocks = nn.ModuleList(
            TransformerBlock(config.dim, config.heads, config.mlp_ratio)
            for _ in range(config.depth)
        )

    @property
    def depth(self) -> int:
        return self.config.depth

    def forward_blocks(self, images: Tensor, block_ids: Sequence[int]) -> list[Tensor]:
        """Token sequences (summary token stripped) after each requested block."""
        ids = list(block_ids)
        if ids != sorted(set(ids)):
            raise ValueError(f"block_ids must be strictly increasing, got {ids}")
        if any(i < 0 or i >= self.depth for i in ids):
            raise IndexError(f"block_ids {ids} out of range for depth {self.depth}")
        squeeze = images.ndim == 3
        x = images.unsqueeze(0) if squeeze else images
        tokens = self.patch_embed(patchify(x, self.config.patch_size))
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        x = torch.cat([cls, tokens], dim=1) + self.pos_embed
        wanted = set(ids)
        out: list[Tensor] = []
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i in wanted:
                t = x[:, 1:, :]
                out.append(t.squeeze(0) if squeeze else t)
            if i == ids[-1]:
                break
        return out


def extract_features(
    model: PatchTokenizer, image: Tensor, block_ids: Sequence[int]
) -> FeatureStack:
    """Run the frozen extractor and collect TokenSets for the given blocks."""
    check_image(image, model.config.patch_size)
    outputs = model.forward_blocks(image, block_ids)
    sets = []
    for block_id, tokens in zip(block_ids, outputs):
        if not torch.isfinite(tokens).all():
            raise RuntimeError(
                f"non-finite activations at block {block_id}; weights look corrupt"
            )
        sets.append(TokenSet(tokens=tokens, block_id=block_id))
    return FeatureStack(sets=sets)


def _freeze(model: PatchTokenizer) -> PatchTokenizer:
    for p in model.parameters():
        p.requires_grad_(False)
    model.eval()
    return model


def build_tokenizer(config: TokenizerConfig) -> PatchTokenizer:
    """Scratch-initialize from the config's seed; weights come out frozen."""
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        model = PatchTokenizer(config)
    return _freeze(model)


def save_tokenizer(model: PatchTokenizer, path: str | Path) -> None:
    payload = {
        "format_version": TOKENIZER_FORMAT_VERSION,
        "kind": "tokenizer",
        "config": dataclasses.asdict(model.config),
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)


def load_tokenizer(source: str | Path | TokenizerConfig) -> PatchTokenizer:
    """Build the frozen extractor from a weight file or a scratch config."""
    if isinstance(source, TokenizerConfig):
        if source.weights is not None:
            return load_tokenizer(source.weights)
        return build_tokenizer(source)
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"tokenizer weight file not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ValueError(f"corrupt tokenizer weight file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != "tokenizer":
        raise ValueError(f"{path} is not a tokenizer weight file")
    if payload.get("format_version") != TOKENIZER_FORMAT_VERSION:
        raise ValueError(
            f"unsupported tokenizer format version {payload.get('format_version')}"
        )
    config = TokenizerConfig(**payload["config"])
    model = PatchTokenizer(config)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise ValueError(
            f"tokenizer config/weights shape mismatch in {path}: {exc}"
        ) from exc
    return _freeze(model)
