"""Token-matching losses that tie a translated image to its source.

Two relation matrices are built from patch tokens. Matching every token of
an image against all tokens of the same image gives an n x n self-relation
(Gram-style) matrix; doing so between the source and the translated image
gives a cross-relation matrix pair that also carries the style gap. The
per-block distance between corresponding matrices is a row-wise cosine
distance, averaged over the extractor blocks, and the final loss blends
the self and cross terms with a weight alpha.

All functions are pure, differentiable, dtype-preserving, and accept an
optional leading batch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .config import LossConfig
from .tokenizer import FeatureStack, TokenSet

# Floor for row norms so all-zero rows (e.g. constant black patches) yield a
# defined cosine instead of a crash. A floor rather than an additive term
# keeps the distance exactly invariant to positive rescaling whenever the
# scaled norms stay above the floor.
COSINE_EPS = 1e-8


@dataclass
class LossReport:
    """Scalar loss terms recorded for one training step."""

    l_self: float
    l_cross: float
    l_sem: float
    l_d: float = 0.0
    l_g: float = 0.0

    def to_dict(self) -> dict[str, float]:
        return {
            "l_self": self.l_self,
            "l_cross": self.l_cross,
            "l_sem": self.l_sem,
            "l_d": self.l_d,
            "l_g": self.l_g,
        }


def _tokens_of(x) -> Tensor:
    tokens = x.tokens if isinstance(x, TokenSet) else x
    if tokens.ndim < 2:
        raise ValueError(f"tokens must be (..., n, d), got shape {tuple(tokens.shape)}")
    return tokens


def self_domain_matrix(tokens) -> Tensor:
    """All-pairs dot products of an image's tokens: entry (i, j) = t_i . t_j."""
    t = _tokens_of(tokens)
    if not torch.isfinite(t).all():
        raise ValueError("non-finite token values")
    return t @ t.transpose(-1, -2)


def cross_domain_matrices(tokens_x, tokens_yhat) -> tuple[Tensor, Tensor]:
    """Dot products of each source token with all translated tokens and vice versa.

    Row i of the first matrix is x-token i against every yhat token; row i of
    the second is yhat-token i against every x token. The second is exactly
    the transpose of the first, and is returned as such.
    """
    tx = _tokens_of(tokens_x)
    ty = _tokens_of(tokens_yhat)
    if tx.shape[-1] != ty.shape[-1]:
        raise ValueError(
            f"token dim mismatch: {tx.shape[-1]} vs {ty.shape[-1]}"
        )
    if tx.shape[-2] != ty.shape[-2]:
        raise ValueError(
            f"token count mismatch: {tx.shape[-2]} vs {ty.shape[-2]}"
        )
    m_x = tx @ ty.transpose(-1, -2)
    return m_x, m_x.transpose(-1, -2)


def matrix_distance(a: Tensor, b: Tensor, mode: str = "rowwise") -> Tensor:
    """Cosine distance between two relation matrices, in [0, 2].

    "rowwise" (default) averages 1 - cos(a_i, b_i) over corresponding rows;
    "flat" treats each matrix as a single vector. Leading batch dimensions
    are averaged into the returned scalar.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if mode == "flat":
        a = a.flatten(-2).unsqueeze(-2)
        b = b.flatten(-2).unsqueeze(-2)
    elif mode != "rowwise":
        raise ValueError(f"unknown distance mode {mode!r}")
    dot = (a * b).sum(dim=-1)
    norm_a = torch.linalg.vector_norm(a, dim=-1)
    norm_b = torch.linalg.vector_norm(b, dim=-1)
    cos = dot / (norm_a.clamp(min=COSINE_EPS) * norm_b.clamp(min=COSINE_EPS))
    return (1.0 - cos).mean()


def _block_weights(config: LossConfig | None, n_blocks: int, dtype, device) -> Tensor:
    if config is not None and config.block_weights is not None:
        w = torch.tensor(config.block_weights, dtype=dtype, device=device)
        return w / w.sum()
    return torch.full((n_blocks,), 1.0 / n_blocks, dtype=dtype, device=device)


def _check_stacks(stack_x: FeatureStack, stack_yhat: FeatureStack) -> None:
    if stack_x.num_blocks != stack_yhat.num_blocks:
        raise ValueError(
            f"stack depth mismatch: {stack_x.num_blocks} vs {stack_yhat.num_blocks}"
        )
    for sx, sy in zip(stack_x.sets, stack_yhat.sets):
        if sx.tokens.shape != sy.tokens.shape:
            raise ValueError(
                f"block {sx.block_id}: token shape mismatch "
                f"{tuple(sx.tokens.shape)} vs {tuple(sy.tokens.shape)}"
            )


def self_loss(
    stack_x: FeatureStack,
    stack_yhat: FeatureStack,
    config: LossConfig | None = None,
) -> Tensor:
    """Distance between per-image relation structure, averaged over blocks."""
    _check_stacks(stack_x, stack_yhat)
    mode = config.distance if config is not None else "rowwise"
    per_block = [
        matrix_distance(
            self_domain_matrix(sx.tokens), self_domain_matrix(sy.tokens), mode
        )
        for sx, sy in zip(stack_x.sets, stack_yhat.sets)
    ]
    stacked = torch.stack(per_block)
    weights = _block_weights(config, len(per_block), stacked.dtype, stacked.device)
    return (weights * stacked).sum()


def cross_loss(
    stack_x: FeatureStack,
    stack_yhat: FeatureStack,
    config: LossConfig | None = None,
) -> Tensor:
    """Distance between the two cross-relation matrices, averaged over blocks."""
    _check_stacks(stack_x, stack_yhat)
    mode = config.distance if config is not None else "rowwise"
    per_block = []
    for sx, sy in zip(stack_x.sets, stack_yhat.sets):
        m_x, m_yhat = cross_domain_matrices(sx.tokens, sy.tokens)
        per_block.append(matrix_distance(m_x, m_yhat, mode))
    stacked = torch.stack(per_block)
    weights = _block_weights(config, len(per_block), stacked.dtype, stacked.device)
    return (weights * stacked).sum()


def semantic_loss(
    stack_x: FeatureStack,
    stack_yhat: FeatureStack,
    config: LossConfig,
) -> tuple[Tensor, Tensor, Tensor]:
    """Blended matching loss: returns (l_self, l_cross, l_sem) as 0-dim tensors.

    l_sem = alpha * l_self + (1 - alpha) * l_cross. At alpha endpoints the
    blend is bitwise equal to the surviving term.
    """
    l_self = self_loss(stack_x, stack_yhat, config)
    l_cross = cross_loss(stack_x, stack_yhat, config)
    l_sem = config.alpha * l_self + (1.0 - config.alpha) * l_cross
    return l_self, l_cross, l_sem
