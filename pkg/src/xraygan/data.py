"""Unpaired image corpora: disk loading and procedural synthesis.

The synthetic corpus stands in for clinical data at desk scale: domain X is
clean dark frames crossed by thin bright catheter-like spline curves;
domain Y overlays the same kind of curves on vessel-like soft ridges with
blur and film grain, mimicking radiographic texture. Everything is seeded
and byte-reproducible.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .tokenizer import check_image


@dataclass
class UnpairedDataset:
    """Two independent image sets with no pairing structure."""

    images_x: torch.Tensor  # (Nx, C, H, W) in [-1, 1]
    images_y: torch.Tensor  # (Ny, C, H, W) in [-1, 1]
    names_x: list[str]
    names_y: list[str]

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.images_x), len(self.images_y)


def normalize_u8(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit intensities onto [-1, 1]; 0 -> -1.0 and 255 -> 1.0 exactly."""
    return pixels.astype(np.float32) / 127.5 - 1.0


def denormalize_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((values + 1.0) * 127.5), 0, 255).astype(np.uint8)


def resize_bilinear(image: torch.Tensor, size: int) -> torch.Tensor:
    """Deterministic bilinear resize (pixel-center alignment, no antialias)."""
    squeeze = image.ndim == 3
    x = image.unsqueeze(0) if squeeze else image
    x = F.interpolate(
        x, size=(size, size), mode="bilinear", align_corners=False, antialias=False
    )
    return x.squeeze(0) if squeeze else x


def preprocess(source, image_size: int, channels: int = 1) -> torch.Tensor:
    """Decode -> channel convert -> bilinear resize -> normalize to [-1, 1].

    ``source`` may be raw PNG bytes, a file path, or a PIL image. Returns a
    (C, H, W) float32 tensor.
    """
    if isinstance(source, Image.Image):
        img = source
    elif isinstance(source, (bytes, bytearray)):
        img = Image.open(io.BytesIO(source))
    else:
        img = Image.open(source)
    img = img.convert("L" if channels == 1 else "RGB")
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    tensor = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))
    if tensor.shape[-1] != image_size or tensor.shape[-2] != image_size:
        tensor = resize_bilinear(tensor, image_size)
    out = tensor / 127.5 - 1.0
    out = out.clamp(-1.0, 1.0)
    check_image(out)
    return out


def save_png(image: torch.Tensor, path: str | Path) -> None:
    """Write a (C, H, W) tensor in [-1, 1] as an 8-bit PNG."""
    arr = denormalize_u8(image.detach().cpu().numpy())
    if arr.shape[0] == 1:
        pil = Image.fromarray(arr[0], mode="L")
    else:
        pil = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    pil.save(path, format="PNG")


def _png_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def _load_dir(directory: Path, image_size: int, channels: int):
    if not directory.is_dir():
        raise FileNotFoundError(f"image directory not found: {directory}")
    files = _png_files(directory)
    if not files:
        raise ValueError(f"no PNG files in {directory}")
    images, names = [], []
    for path in files:
        try:
            images.append(preprocess(path, image_size, channels))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            warnings.warn(f"skipping undecodable image {path}: {exc}")
            continue
        names.append(path.name)
    if not images:
        raise ValueError(f"no decodable PNG files in {directory}")
    return torch.stack(images), names


def load_unpaired(
    dir_x: str | Path, dir_y: str | Path, image_size: int = 64, channels: int = 1
) -> UnpairedDataset:
    """Load two directories of PNGs into a normalized unpaired dataset."""
    images_x, names_x = _load_dir(Path(dir_x), image_size, channels)
    images_y, names_y = _load_dir(Path(dir_y), image_size, channels)
    return UnpairedDataset(images_x, images_y, names_x, names_y)


def _catmull_rom(ctrl: np.ndarray, samples_per_seg: int) -> np.ndarray:
    """Dense polyline through the control points (Catmull-Rom spline)."""
    pts = []
    last = len(ctrl) - 1
    for i in range(last):
        p0 = ctrl[max(i - 1, 0)]
        p1, p2 = ctrl[i], ctrl[i + 1]
        p3 = ctrl[min(i + 2, last)]
        t = np.linspace(0.0, 1.0, samples_per_seg, endpoint=(i == last - 1))[:, None]
        pts.append(
            0.5
            * (
                2 * p1
                + (p2 - p0) * t
                + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t**2
                + (3 * p1 - p0 - 3 * p2 + p3) * t**3
            )
        )
    return np.concatenate(pts)


def _stamp_curve(canvas: np.ndarray, pts: np.ndarray, radius: int, value: float):
    """Set pixels within ``radius`` of the polyline to at least ``value``."""
    h, w = canvas.shape
    rows = np.clip(np.rint(pts[:, 0]).astype(int), 0, h - 1)
    cols = np.clip(np.rint(pts[:, 1]).astype(int), 0, w - 1)
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr * dr + dc * dc > radius * radius:
                continue
            r = np.clip(rows + dr, 0, h - 1)
            c = np.clip(cols + dc, 0, w - 1)
            np.maximum.at(canvas, (r, c), value)


def _random_curve(rng: np.random.Generator, size: int) -> np.ndarray:
    n_ctrl = int(rng.integers(3, 6))
    ctrl = rng.uniform(0.05 * size, 0.95 * size, size=(n_ctrl, 2))
    return _catmull_rom(ctrl, samples_per_seg=4 * size)


def _domain_x_image(rng: np.random.Generator, size: int) -> np.ndarray:
    # clean dark field, thin bright curves
    base = -0.96 + rng.uniform(0.0, 0.04)
    img = np.full((size, size), base, dtype=np.float64)
    for _ in range(int(rng.integers(1, 3))):
        _stamp_curve(img, _random_curve(rng, size), radius=1,
                     value=0.85 + rng.uniform(0.0, 0.1))
    return np.clip(img, -1.0, 1.0)


def _domain_y_image(rng: np.random.Generator, size: int) -> np.ndarray:
    # vessel-like soft ridges over a mid-dark field, then curves, blur, grain
    base = -0.35 + rng.uniform(-0.1, 0.1)
    img = np.full((size, size), base, dtype=np.float64)
    for _ in range(int(rng.integers(2, 5))):
        ridge = np.zeros((size, size))
        _stamp_curve(ridge, _random_curve(rng, size),
                     radius=int(rng.integers(2, 5)), value=1.0)
        ridge = gaussian_filter(ridge, sigma=rng.uniform(1.5, 3.0))
        img += rng.uniform(-0.3, 0.35) * ridge
    cloud = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 8)
    img += 0.15 * cloud
    for _ in range(int(rng.integers(1, 3))):
        _stamp_curve(img, _random_curve(rng, size), radius=1,
                     value=0.55 + rng.uniform(0.0, 0.2))
    img = gaussian_filter(img, sigma=0.6)
    img += rng.normal(0.0, 0.03, size=(size, size))
    return np.clip(img, -1.0, 1.0)


def synth_corpus(
    seed: int, n_x: int, n_y: int, image_size: int, out_dir: str | Path
) -> dict:
    """Write a seeded synthetic unpaired corpus; returns the manifest dict.

    Layout: ``out_dir/x/*.png``, ``out_dir/y/*.png``, ``out_dir/manifest.json``.
    Identical seeds produce byte-identical files.
    """
    if n_x < 1 or n_y < 1:
        raise ValueError("corpus sizes must be >= 1")
    if image_size < 8:
        raise ValueError("image_size must be >= 8")
    out = Path(out_dir)
    dir_x, dir_y = out / "x", out / "y"
    dir_x.mkdir(parents=True, exist_ok=True)
    dir_y.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_x):
        img = torch.from_numpy(_domain_x_image(rng, image_size)[None].astype(np.float32))
        save_png(img, dir_x / f"x_{i:04d}.png")
    for i in range(n_y):
        img = torch.from_numpy(_domain_y_image(rng, image_size)[None].astype(np.float32))
        save_png(img, dir_y / f"y_{i:04d}.png")
    manifest = {
        "seed": seed,
        "counts": {"x": n_x, "y": n_y},
        "size": image_size,
        "dir_x": str(dir_x),
        "dir_y": str(dir_y),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
