"""Trainable networks: the image translator and the feature-space critic.

The generator is a residual encoder-decoder (two downsampling stages, a
stack of residual blocks, two upsampling stages) with a tanh output so
translated images stay in [-1, 1]. The discriminator is a single MLP over
the mean-pooled tokens of the deepest extracted block; it never sees raw
pixels, only frozen extractor features.
"""

from __future__ import annotations

import hashlib

import torch
from torch import Tensor, nn

from .config import ConfigError, DiscriminatorConfig, GeneratorConfig
from .tokenizer import FeatureStack, check_image


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x: Tensor) -> Tensor:
        return x + self.body(x)


class Generator(nn.Module):
    """Image-to-image translator; output shape equals input shape."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        config.validate()
        self.config = config
        c, w = config.channels, config.width
        layers: list[nn.Module] = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(c, w, 7),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
        ]
        ch = w
        for _ in range(2):  # downsample x2
            layers += [
                nn.Conv2d(ch, ch * 2, 3, stride=2, padding=1),
                nn.InstanceNorm2d(ch * 2),
                nn.ReLU(inplace=True),
            ]
            ch *= 2
        layers += [ResidualBlock(ch) for _ in range(config.residual_blocks)]
        for _ in range(2):  # upsample x2 (nearest + conv avoids checkerboarding)
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(ch, ch // 2, 3, padding=1),
                nn.InstanceNorm2d(ch // 2),
                nn.ReLU(inplace=True),
            ]
            ch //= 2
        self.backbone = nn.Sequential(*layers)
        self.output_conv = nn.Conv2d(ch, c, 7)
        self.head = nn.Sequential(nn.ReflectionPad2d(3), self.output_conv, nn.Tanh())

    def forward(self, x: Tensor) -> Tensor:
        return self.head(self.backbone(x))


class Discriminator(nn.Module):
    """MLP head scoring mean-pooled deepest-block tokens; sigmoid output."""

    def __init__(self, input_dim: int, config: DiscriminatorConfig):
        super().__init__()
        config.validate()
        if input_dim <= 0:
            raise ValueError("discriminator input_dim must be positive")
        self.config = config
        self.input_dim = input_dim
        if config.hidden == 0:
            self.mlp = nn.Linear(input_dim, 1)
        else:
            self.mlp = nn.Sequential(
                nn.Linear(input_dim, config.hidden),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Linear(config.hidden, 1),
            )

    def pool(self, features: FeatureStack) -> Tensor:
        tokens = features.deepest.tokens
        if tokens.shape[-1] != self.input_dim:
            raise ValueError(
                f"feature dim {tokens.shape[-1]} != head input dim {self.input_dim}"
            )
        return tokens.mean(dim=-2)

    def forward_logit(self, features: FeatureStack) -> Tensor:
        return self.mlp(self.pool(features)).squeeze(-1)

    def forward(self, features: FeatureStack) -> Tensor:
        return torch.sigmoid(self.forward_logit(features))


def generate(g: Generator, x: Tensor) -> Tensor:
    """Translate an image (or batch) in evaluation mode; deterministic."""
    check_image(x)
    if x.shape[-3] != g.config.channels:
        raise ValueError(
            f"generator expects {g.config.channels} channels, got {x.shape[-3]}"
        )
    was_training = g.training
    g.eval()
    with torch.no_grad():
        out = g(x.unsqueeze(0)).squeeze(0) if x.ndim == 3 else g(x)
    if was_training:
        g.train()
    return out


def discriminate(d: Discriminator, features: FeatureStack) -> Tensor:
    """Per-image realness probability in (0, 1)."""
    return d(features)


def build_generator(config: GeneratorConfig, seed: int = 0) -> Generator:
    config.validate()
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        g = Generator(config)
        _init_gan_weights(g)
    return g


def build_discriminator(
    input_dim: int, config: DiscriminatorConfig, seed: int = 0
) -> Discriminator:
    config.validate()
    if input_dim < 1:
        raise ConfigError("discriminator input dimension must be positive")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return Discriminator(input_dim, config)


def _init_gan_weights(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def count_parameters(model: nn.Module) -> int:
    """Exact number of trainable scalars; frozen weights are excluded."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def parameter_checksum(model: nn.Module) -> str:
    """SHA-256 over all parameters and buffers; detects any weight change."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
