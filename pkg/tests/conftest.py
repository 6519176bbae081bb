"""Shared fixtures: corpora, trained runs, and the acceptance summary."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from xraygan.config import DataConfig, TokenizerConfig, TrainConfig
from xraygan.data import load_unpaired, synth_corpus
from xraygan.metrics import eval_run
from xraygan.tokenizer import build_tokenizer
from xraygan.trainer import train

# ------------------------------------------------------------ acceptance log

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record_criterion(num: int, status: str, detail: str) -> None:
    _ACCEPTANCE[num] = (status, detail)


def check_criterion(num: int, ok: bool, detail: str) -> None:
    """Record one acceptance criterion outcome and assert it."""
    record_criterion(num, "PASS" if ok else "FAIL", detail)
    assert ok, f"criterion {num}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d} [{status}] {detail}")


# ------------------------------------------------------------------ fixtures


@pytest.fixture(scope="session")
def small_tokenizer():
    return build_tokenizer(TokenizerConfig())


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """8+8 images at 64x64; enough for smoke and plumbing tests."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    manifest = synth_corpus(seed=1, n_x=8, n_y=8, image_size=64, out_dir=root)
    return manifest


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """The 64+64 image corpus the end-to-end acceptance checks run on."""
    root = tmp_path_factory.mktemp("desk_corpus")
    manifest = synth_corpus(seed=0, n_x=64, n_y=64, image_size=64, out_dir=root)
    return manifest


@pytest.fixture(scope="session")
def desk_dataset(desk_corpus):
    return load_unpaired(desk_corpus["dir_x"], desk_corpus["dir_y"])


def desk_train_config(corpus_manifest: dict, **overrides) -> TrainConfig:
    config = TrainConfig(
        data=DataConfig(
            dir_x=corpus_manifest["dir_x"], dir_y=corpus_manifest["dir_y"]
        )
    )
    return config.replace(**overrides) if overrides else config


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_corpus, tmp_path_factory):
    """A 1-epoch checkpoint for load/translate/eval plumbing tests."""
    out = tmp_path_factory.mktemp("tiny_run")
    config = desk_train_config(tiny_corpus, epochs=1, seed=3)
    return train(config, out_dir=out)


@pytest.fixture(scope="session")
def full_runs(desk_corpus, desk_dataset, tmp_path_factory):
    """Three seeded 20-epoch full-mode runs with their desk-FID reports."""
    out_root = tmp_path_factory.mktemp("full_runs")
    runs = {}
    for seed in (0, 1, 2):
        config = desk_train_config(desk_corpus, seed=seed)
        result = train(config, out_dir=out_root / f"seed{seed}")
        report = eval_run(result.checkpoint_path, desk_dataset)
        runs[seed] = (result, report)
    return runs


@pytest.fixture(scope="session")
def ablation_reports(desk_corpus, desk_dataset, full_runs, tmp_path_factory):
    """Mean desk-FID per loss mode over the same three seeds."""
    out_root = tmp_path_factory.mktemp("ablation_runs")
    means = {
        "full": float(
            np.mean([rep["fid_generated_vs_y"] for _, rep in full_runs.values()])
        )
    }
    for mode in ("no_self", "no_cross"):
        fids = []
        for seed in (0, 1, 2):
            config = desk_train_config(desk_corpus, seed=seed, ablation=mode)
            result = train(config, out_dir=out_root / f"{mode}_seed{seed}")
            report = eval_run(result.checkpoint_path, desk_dataset)
            fids.append(report["fid_generated_vs_y"])
        means[mode] = float(np.mean(fids))
    return means


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_deterministic():
    torch.manual_seed(0)
