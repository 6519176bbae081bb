"""Command-line entry points for the translation experiments.

Subcommands:
  synth      write a synthetic unpaired corpus to disk
  train      train a translator from a YAML config
  translate  run a trained generator over a directory of images
  eval       Fréchet-distance report for a checkpoint
  ablate     train full / no_self / no_cross variants and tabulate them

Exit codes: 0 success, 1 runtime failure, 2 bad usage/config.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import torch

from .config import ConfigError, load_train_config, save_train_config
from .data import load_unpaired, preprocess, save_png, synth_corpus
from .metrics import (
    ClassifierEmbedder,
    TokenizerEmbedder,
    eval_run,
    format_table,
)
from .trainer import load_checkpoint, train, translate


def _fail(message: str, code: int = 1) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _write_manifest(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_training(config, out_dir: Path, overrides: dict | None = None):
    """Train with a run manifest written before the loop and sealed after it."""
    from . import __version__

    out_dir.mkdir(parents=True, exist_ok=True)
    save_train_config(config, out_dir / "config.yaml")
    manifest_path = out_dir / "run.json"
    manifest = {
        "version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "overrides": overrides or {},
        "outputs": {
            "checkpoint": str(out_dir / "checkpoint.pt"),
            "metrics": str(out_dir / "metrics.jsonl"),
            "config_echo": str(out_dir / "config.yaml"),
        },
        "start_timestamp": time.time(),
        "end_timestamp": None,
        "status": "running",
    }
    _write_manifest(manifest_path, manifest)
    try:
        result = train(config, out_dir=out_dir)
    except Exception as exc:
        manifest["end_timestamp"] = time.time()
        manifest["status"] = f"failed: {exc}"
        _write_manifest(manifest_path, manifest)
        raise
    manifest["end_timestamp"] = time.time()
    manifest["status"] = "done"
    manifest["seconds_per_epoch"] = result.seconds_per_epoch
    _write_manifest(manifest_path, manifest)
    return result, manifest_path


def cmd_synth(args: argparse.Namespace) -> int:
    if args.nx < 1 or args.ny < 1:
        return _fail("--nx and --ny must be >= 1", 2)
    if args.size < 8:
        return _fail("--size must be >= 8", 2)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        return _fail(f"{out} is not empty; pass --force to overwrite", 2)
    manifest = synth_corpus(
        seed=args.seed,
        n_x=args.nx,
        n_y=args.ny,
        image_size=args.size,
        out_dir=out,
    )
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {
        key: value
        for key, value in (
            ("ablation", args.ablation),
            ("seed", args.seed),
            ("epochs", args.epochs),
        )
        if value is not None
    }
    try:
        config = load_train_config(args.config)
        if overrides:
            config = config.replace(**overrides)
        config.validate()
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        return _fail(str(exc), 2)
    try:
        result, _ = _run_training(config, Path(args.out), overrides)
    except Exception as exc:  # noqa: BLE001 - failure already recorded in run.json
        return _fail(str(exc))
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics: {result.metrics_path}")
    print(f"seconds/epoch: {result.seconds_per_epoch:.2f}")
    return 0


def cmd_translate(args: argparse.Namespace) -> int:
    try:
        loaded = load_checkpoint(args.checkpoint)
    except (FileNotFoundError, ValueError) as exc:
        return _fail(str(exc), 2)
    in_dir = Path(args.input)
    if not in_dir.is_dir():
        return _fail(f"{in_dir} is not a directory", 2)
    paths = sorted(
        p for p in in_dir.iterdir() if p.suffix.lower() == ".png" and p.is_file()
    )
    if not paths:
        return _fail(f"no .png images under {in_dir}", 2)
    size = loaded.config.data.image_size
    channels = loaded.config.data.channels
    images = torch.stack([preprocess(p, size, channels) for p in paths], dim=0)
    outputs, latency = translate(loaded, images)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path, image in zip(paths, outputs):
        save_png(image, out_dir / path.name)
    print(f"translated {len(paths)} images to {out_dir}")
    print(f"latency ms/image: mean {latency['mean']:.2f} median {latency['median']:.2f}")
    return 0


def _build_embedder(spec: str, loaded) -> object:
    if spec == "tokenizer":
        return TokenizerEmbedder(loaded.tokenizer, loaded.config.block_ids)
    if spec.startswith("classifier:"):
        return ClassifierEmbedder(spec.split(":", 1)[1])
    raise ConfigError(
        f"unknown embedder {spec!r}; use 'tokenizer' or 'classifier:<path>'"
    )


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        loaded = load_checkpoint(args.checkpoint)
        embedder = _build_embedder(args.embedder, loaded)
    except (FileNotFoundError, ValueError) as exc:
        return _fail(str(exc), 2)
    dataset = load_unpaired(
        args.data_x,
        args.data_y,
        image_size=loaded.config.data.image_size,
        channels=loaded.config.data.channels,
    )
    report = eval_run(loaded, dataset, embedder)
    report["checkpoint"] = str(args.checkpoint)
    report["embedder"] = args.embedder
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    rows = [
        {
            "method": "input x (no translation)",
            "fid": report["fid_x_vs_y"],
            "param_count": None,
            "train_seconds_per_epoch": None,
        },
        {
            "method": "translated",
            "fid": report["fid_generated_vs_y"],
            "param_count": report["param_count"],
            "train_seconds_per_epoch": report["train_seconds_per_epoch"],
        },
    ]
    print(format_table(rows))
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    try:
        base = load_train_config(args.config)
        base.validate()
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        return _fail(str(exc), 2)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    dataset = load_unpaired(
        base.data.dir_x,
        base.data.dir_y,
        image_size=base.data.image_size,
        channels=base.data.channels,
    )
    rows = []
    runs = {}
    for mode in ("full", "no_self", "no_cross"):
        fids = []
        manifests = []
        for seed_offset in range(args.seeds):
            seed = base.seed + seed_offset
            config = base.replace(ablation=mode, seed=seed)
            result, manifest_path = _run_training(
                config, out_root / f"{mode}_seed{seed}"
            )
            report = eval_run(result.checkpoint_path, dataset)
            fids.append(report["fid_generated_vs_y"])
            manifests.append(str(manifest_path))
            runs[f"{mode}_seed{seed}"] = {
                "manifest": str(manifest_path),
                "checkpoint": str(result.checkpoint_path),
                "fid_generated_vs_y": report["fid_generated_vs_y"],
                "fid_x_vs_y": report["fid_x_vs_y"],
            }
            print(f"{mode} seed {seed}: FID {fids[-1]:.2f}")
        rows.append(
            {
                "method": mode,
                "fid": sum(fids) / len(fids),
                "param_count": None,
                "train_seconds_per_epoch": None,
                "manifests": manifests,
            }
        )
    _write_manifest(out_root / "ablation.json", {"runs": runs})
    print(format_table(rows))
    for row in rows:
        print(f"{row['method']}: {', '.join(row['manifests'])}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xraygan",
        description="Unpaired image translation with token-matching losses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic unpaired corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=64)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a translator from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--ablation", choices=["full", "no_self", "no_cross", "gan_only"])
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="run a trained generator over a directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval", help="Fréchet-distance report for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-x", required=True)
    p.add_argument("--data-y", required=True)
    p.add_argument("--embedder", default="tokenizer")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score matching-loss ablations")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc), 2)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
