"""Unpaired image-to-image translation with multi-scale token matching.

A generator is trained adversarially against an MLP discriminator that
reads features from a frozen patch-token extractor, plus self-domain and
cross-domain token-similarity matching losses that tie translated images
to the structure of their inputs.
"""

from .config import (
    ConfigError,
    DataConfig,
    DiscriminatorConfig,
    GeneratorConfig,
    LossConfig,
    TokenizerConfig,
    TrainConfig,
    load_train_config,
    save_train_config,
)
from .data import UnpairedDataset, load_unpaired, preprocess, synth_corpus
from .matching import (
    LossReport,
    cross_domain_matrices,
    matrix_distance,
    self_domain_matrix,
    semantic_loss,
)
from .metrics import (
    FeatureStats,
    TokenizerEmbedder,
    embed_set,
    eval_run,
    feature_stats,
    frechet_distance,
)
from .networks import Discriminator, Generator, build_discriminator, build_generator
from .tokenizer import (
    FeatureStack,
    PatchTokenizer,
    TokenSet,
    build_tokenizer,
    extract_features,
    load_tokenizer,
    save_tokenizer,
)
from .trainer import load_checkpoint, save_checkpoint, train, translate

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataConfig",
    "DiscriminatorConfig",
    "Discriminator",
    "FeatureStack",
    "FeatureStats",
    "Generator",
    "GeneratorConfig",
    "LossConfig",
    "LossReport",
    "PatchTokenizer",
    "TokenSet",
    "TokenizerConfig",
    "TokenizerEmbedder",
    "TrainConfig",
    "UnpairedDataset",
    "build_discriminator",
    "build_generator",
    "build_tokenizer",
    "cross_domain_matrices",
    "embed_set",
    "eval_run",
    "extract_features",
    "feature_stats",
    "frechet_distance",
    "load_checkpoint",
    "load_train_config",
    "load_tokenizer",
    "load_unpaired",
    "matrix_distance",
    "preprocess",
    "save_checkpoint",
    "save_train_config",
    "save_tokenizer",
    "self_domain_matrix",
    "semantic_loss",
    "synth_corpus",
    "train",
    "translate",
    "__version__",
]
