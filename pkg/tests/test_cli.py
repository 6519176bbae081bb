"""End-to-end command-line behavior: exit codes, artifacts, and output text."""

from __future__ import annotations

import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from xraygan.cli import main
from xraygan.data import load_unpaired, preprocess

from conftest import desk_train_config


def write_config(tmp_path, corpus, **train_overrides):
    cfg = desk_train_config(corpus, **train_overrides)
    from xraygan.config import save_train_config

    path = tmp_path / "config.yaml"
    save_train_config(cfg, path)
    return path


def read_metrics(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def strip_seconds(rows):
    return [{k: v for k, v in r.items() if k != "seconds"} for r in rows]


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------- synth


def test_synth_writes_corpus_and_manifest(tmp_path, capsys):
    out = tmp_path / "corpus"
    rc = main(["synth", "--seed", "3", "--nx", "2", "--ny", "3",
               "--size", "32", "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["counts"] == {"x": 2, "y": 3}
    assert len(list((out / "x").glob("*.png"))) == 2
    assert len(list((out / "y").glob("*.png"))) == 3
    printed = json.loads(capsys.readouterr().out)
    assert printed == manifest


def test_synth_refuses_nonempty_out_without_force(tmp_path, capsys):
    out = tmp_path / "corpus"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    rc = main(["synth", "--out", str(out)])
    assert rc == 2
    assert "--force" in capsys.readouterr().err
    rc = main(["synth", "--nx", "1", "--ny", "1", "--out", str(out), "--force"])
    assert rc == 0


def test_synth_rejects_bad_counts_and_size(tmp_path):
    assert main(["synth", "--nx", "0", "--out", str(tmp_path / "a")]) == 2
    assert main(["synth", "--size", "4", "--out", str(tmp_path / "b")]) == 2


# ---------------------------------------------------------------------- train


def test_train_writes_run_manifest(tiny_corpus, tmp_path, capsys):
    cfg_path = write_config(tmp_path, tiny_corpus, epochs=1)
    out = tmp_path / "run"
    rc = main(["train", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 0
    run = json.loads((out / "run.json").read_text())
    assert run["status"] == "done"
    assert run["seed"] == 0
    assert run["end_timestamp"] > run["start_timestamp"]
    assert run["seconds_per_epoch"] > 0
    assert run["config"]["train"]["epochs"] == 1
    assert (out / "checkpoint.pt").exists()
    assert (out / "config.yaml").exists()
    echoed = yaml.safe_load((out / "config.yaml").read_text())
    assert echoed == run["config"]
    stdout = capsys.readouterr().out
    assert "checkpoint:" in stdout and "seconds/epoch:" in stdout


def test_train_cli_overrides_recorded(tiny_corpus, tmp_path):
    cfg_path = write_config(tmp_path, tiny_corpus, epochs=1)
    out = tmp_path / "run"
    rc = main(["train", "--config", str(cfg_path), "--out", str(out),
               "--ablation", "no_self", "--seed", "4", "--epochs", "2"])
    assert rc == 0
    run = json.loads((out / "run.json").read_text())
    assert run["overrides"] == {"ablation": "no_self", "seed": 4, "epochs": 2}
    assert run["config"]["train"]["ablation"] == "no_self"
    assert run["config"]["train"]["seed"] == 4
    assert run["seed"] == 4


def test_train_bad_config_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  epochs: -3\n")
    rc = main(["train", "--config", str(bad), "--out", str(tmp_path / "run")])
    assert rc == 2
    assert "epochs" in capsys.readouterr().err


def test_train_missing_config_is_usage_error(tmp_path):
    rc = main(["train", "--config", str(tmp_path / "nope.yaml"),
               "--out", str(tmp_path / "run")])
    assert rc == 2


def test_train_runtime_failure_sealed_in_manifest(tiny_corpus, tmp_path):
    cfg_path = write_config(tmp_path, tiny_corpus, epochs=1)
    cfg = yaml.safe_load(cfg_path.read_text())
    cfg["data"]["dir_x"] = str(tmp_path / "missing")
    cfg_path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / "run"
    rc = main(["train", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 1
    run = json.loads((out / "run.json").read_text())
    assert run["status"].startswith("failed:")
    assert run["end_timestamp"] is not None


def test_train_deterministic_across_invocations(tiny_corpus, tmp_path):
    cfg_path = write_config(tmp_path, tiny_corpus, epochs=1, seed=11)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", str(cfg_path), "--out", str(out_a)]) == 0
    assert main(["train", "--config", str(cfg_path), "--out", str(out_b)]) == 0
    rows_a = strip_seconds(read_metrics(out_a / "metrics.jsonl"))
    rows_b = strip_seconds(read_metrics(out_b / "metrics.jsonl"))
    assert rows_a == rows_b
    from xraygan.networks import parameter_checksum
    from xraygan.trainer import load_checkpoint

    ck_a = load_checkpoint(out_a / "checkpoint.pt")
    ck_b = load_checkpoint(out_b / "checkpoint.pt")
    assert parameter_checksum(ck_a.generator) == parameter_checksum(ck_b.generator)
    assert parameter_checksum(ck_a.discriminator) == parameter_checksum(
        ck_b.discriminator
    )


# ------------------------------------------------------------------ translate


def test_translate_preserves_names_and_reports_latency(
    tiny_checkpoint, tiny_corpus, tmp_path, capsys
):
    out = tmp_path / "translated"
    rc = main(["translate", "--checkpoint", str(tiny_checkpoint.checkpoint_path),
               "--in", tiny_corpus["dir_x"], "--out", str(out)])
    assert rc == 0
    in_names = sorted(p.name for p in
                      Path(tiny_corpus["dir_x"]).glob("*.png"))
    out_names = sorted(p.name for p in out.glob("*.png"))
    assert out_names == in_names
    stdout = capsys.readouterr().out
    assert "ms" in stdout
    # outputs decode and are valid [-1, 1] grayscale of the right size
    img = preprocess(out / out_names[0], image_size=64)
    assert img.shape == (1, 64, 64)


def test_translate_missing_checkpoint_is_usage_error(tiny_corpus, tmp_path):
    rc = main(["translate", "--checkpoint", str(tmp_path / "nope.pt"),
               "--in", tiny_corpus["dir_x"], "--out", str(tmp_path / "o")])
    assert rc == 2


def test_translate_empty_input_dir_fails(tiny_checkpoint, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    rc = main(["translate", "--checkpoint", str(tiny_checkpoint.checkpoint_path),
               "--in", str(empty), "--out", str(tmp_path / "o")])
    assert rc != 0


# ----------------------------------------------------------------------- eval


def test_eval_writes_report_and_table(tiny_checkpoint, tiny_corpus, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    rc = main(["eval", "--checkpoint", str(tiny_checkpoint.checkpoint_path),
               "--data-x", tiny_corpus["dir_x"], "--data-y", tiny_corpus["dir_y"],
               "--out", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text())
    for key in ("fid_generated_vs_y", "fid_x_vs_y", "latency_ms", "param_count"):
        assert key in report
    assert report["embedder"] == "tokenizer"
    stdout = capsys.readouterr().out
    assert "input x (no translation)" in stdout
    assert "translated" in stdout
    assert "FID Score" in stdout


def test_eval_domain_gap_is_large_without_training(
    tiny_checkpoint, tiny_corpus, tmp_path
):
    report_path = tmp_path / "report.json"
    rc = main(["eval", "--checkpoint", str(tiny_checkpoint.checkpoint_path),
               "--data-x", tiny_corpus["dir_x"], "--data-y", tiny_corpus["dir_y"],
               "--out", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text())
    # untranslated x sits far from y under the frozen embedder
    assert report["fid_x_vs_y"] > 1.0


def test_eval_unknown_embedder_is_usage_error(tiny_checkpoint, tiny_corpus, tmp_path):
    rc = main(["eval", "--checkpoint", str(tiny_checkpoint.checkpoint_path),
               "--data-x", tiny_corpus["dir_x"], "--data-y", tiny_corpus["dir_y"],
               "--embedder", "resnet"])
    assert rc == 2


# --------------------------------------------------------------------- ablate


@pytest.mark.slow
def test_ablate_tabulates_three_modes(tiny_corpus, tmp_path, capsys):
    cfg_path = write_config(tmp_path, tiny_corpus, epochs=1)
    out = tmp_path / "ablate"
    rc = main(["ablate", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "ablation.json").read_text())
    assert set(summary["runs"]) == {"full_seed0", "no_self_seed0", "no_cross_seed0"}
    for run in summary["runs"].values():
        assert json.loads(
            Path(run["manifest"]).read_text()
        )["status"] == "done"
    stdout = capsys.readouterr().out
    for mode in ("full", "no_self", "no_cross"):
        assert mode in stdout
    assert "run.json" in stdout  # manifest paths listed per mode


# --------------------------------------------------------------- installation


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "xraygan.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    for cmd in ("synth", "train", "translate", "eval", "ablate"):
        assert cmd in proc.stdout
