"""Synthetic texture datasets, image-folder ingestion and augmentation."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import ConfigError, DatasetError

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".gif")

# OCT-PD composition: 1584 control images, 666 case images
DEFAULT_CLASS_RATIO = (1584 / 2250, 666 / 2250)


@dataclass
class DatasetSpec:
    kind: str = "synthetic_texture"
    num_samples: int = 600
    class_ratio: tuple = DEFAULT_CLASS_RATIO
    image_size: tuple = (64, 64)
    seed: int = 0
    # synthetic texture knobs
    spectral_slope: float = 2.0
    noise_cutoff: float = 0.35
    grating_frequency: float = 0.1875
    contrast: float = 0.5
    root: str | None = None

    def validate(self):
        if self.kind not in ("synthetic_texture", "image_folder"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        ratio = np.asarray(self.class_ratio, dtype=np.float64)
        if self.kind == "synthetic_texture":
            if ratio.size < 2 or np.any(ratio <= 0) or abs(ratio.sum() - 1.0) > 1e-9:
                raise ConfigError("class_ratio must be positive and sum to 1")
        H, W = self.image_size
        if H % 2 or W % 2 or H < 2 or W < 2:
            raise ConfigError(f"image sizes must be even, got {H}x{W}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["class_ratio"] = [float(r) for r in self.class_ratio]
        d["image_size"] = list(self.image_size)
        return d


@dataclass
class Dataset:
    splits: dict
    num_classes: int
    class_names: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def __getitem__(self, name):
        return self.splits[name]

    def class_counts(self, split="train"):
        return np.bincount(self.splits[split][1], minlength=self.num_classes).tolist()

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        arrays = {}
        for name, (X, y) in self.splits.items():
            arrays[f"{name}_X"], arrays[f"{name}_y"] = X, y
        np.savez(os.path.join(directory, "dataset.npz"), **arrays)
        meta = {"num_classes": self.num_classes, "class_names": self.class_names, "skipped": self.skipped}
        with open(os.path.join(directory, "dataset.json"), "w") as fh:
            json.dump(meta, fh, indent=2)

    @classmethod
    def load(cls, directory):
        path = os.path.join(directory, "dataset.npz")
        if not os.path.exists(path):
            raise DatasetError(f"no dataset.npz in {directory}")
        with np.load(path) as npz:
            splits = {name: (npz[f"{name}_X"], npz[f"{name}_y"]) for name in SPLITS}
        with open(os.path.join(directory, "dataset.json")) as fh:
            meta = json.load(fh)
        return cls(splits, meta["num_classes"], meta.get("class_names", []), meta.get("skipped", []))


def normalize_image(img, eps=1e-8):
    """Zero mean, unit variance; a constant image maps to zeros."""
    img = np.asarray(img, dtype=np.float64)
    centered = img - img.mean()
    return centered / np.sqrt(centered.var() + eps)


def stratified_split(labels, rng, fractions=SPLIT_FRACTIONS):
    """Indices for train/val/test, stratified by class."""
    labels = np.asarray(labels)
    parts = {name: [] for name in SPLITS}
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_val = int(round(fractions[1] * idx.size))
        n_test = int(round(fractions[2] * idx.size))
        n_train = idx.size - n_val - n_test
        if min(n_train, n_val, n_test) < 1:
            raise ConfigError(
                f"class {c} has {idx.size} samples, too few for a stratified 70/15/15 split"
            )
        parts["train"].append(idx[:n_train])
        parts["val"].append(idx[n_train:n_train + n_val])
        parts["test"].append(idx[n_train + n_val:])
    return {name: np.sort(np.concatenate(p)) for name, p in parts.items()}


def _radial_frequency(H, W):
    fy = np.fft.fftfreq(H)[:, None]
    fx = np.fft.fftfreq(W)[None, :]
    return np.hypot(fy, fx)


def smooth_noise(rng, shape, slope, cutoff):
    """Gaussian noise with power ~ f^-slope, zeroed above ``cutoff`` cycles/pixel."""
    H, W = shape
    f = _radial_frequency(H, W)
    amp = np.zeros_like(f)
    band = (f > 0) & (f <= cutoff)
    amp[band] = f[band] ** (-slope / 2.0)
    spectrum = np.fft.fft2(rng.standard_normal(shape)) * amp
    return np.real(np.fft.ifft2(spectrum))


def grating(rng, shape, frequency, orientation=None):
    H, W = shape
    theta = rng.uniform(0, np.pi) if orientation is None else orientation
    phase = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:H, 0:W]
    return np.sin(2 * np.pi * frequency * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)


def class_sizes(num_samples, ratio):
    ratio = np.asarray(ratio, dtype=np.float64)
    sizes = np.floor(num_samples * ratio).astype(int)
    # hand the remainder to the largest fractional parts
    remainder = num_samples - sizes.sum()
    order = np.argsort(-(num_samples * ratio - sizes), kind="stable")
    sizes[order[:remainder]] += 1
    return sizes


def synthesize_image(rng, label, spec: DatasetSpec):
    """Class 0: band-limited 1/f noise. Class k > 0: same noise plus a grating
    at ``grating_frequency * (1 + 0.5 (k - 1))``. Every image is standardized."""
    noise = smooth_noise(rng, spec.image_size, spec.spectral_slope, spec.noise_cutoff)
    img = noise / noise.std()
    if label > 0:
        freq = spec.grating_frequency * (1 + 0.5 * (label - 1))
        img = img + spec.contrast * np.sqrt(2) * grating(rng, spec.image_size, freq)
    return normalize_image(img)


def generate_synthetic(spec: DatasetSpec) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    sizes = class_sizes(spec.num_samples, spec.class_ratio)
    labels = rng.permutation(np.repeat(np.arange(len(sizes)), sizes))
    splits = stratified_split(labels, rng)
    images = np.stack([synthesize_image(rng, int(c), spec) for c in labels]).astype(np.float32)
    images = images[:, None]
    out = {name: (images[idx], labels[idx].astype(np.int64)) for name, idx in splits.items()}
    names = ["control"] + [f"case{k}" if len(sizes) > 2 else "case" for k in range(1, len(sizes))]
    return Dataset(out, len(sizes), names)


def band_energy(images, frequency, width=0.03):
    """Mean spectral energy per image inside an annulus around ``frequency``."""
    images = np.asarray(images, dtype=np.float64)
    H, W = images.shape[-2:]
    f = _radial_frequency(H, W)
    mask = np.abs(f - frequency) <= width
    power = np.abs(np.fft.fft2(images.reshape(-1, H, W))) ** 2 / (H * W)
    return power[:, mask].sum(axis=1)


def ingest_images(root, spec: DatasetSpec) -> Dataset:
    """Load ``root/<class>/<image>`` files as grayscale, resized, normalized samples."""
    from PIL import Image, UnidentifiedImageError

    spec.validate()
    classes = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    if len(classes) < 2:
        raise DatasetError(f"{root} needs at least two class directories")
    H, W = spec.image_size
    images, labels, skipped = [], [], []
    for label, name in enumerate(classes):
        folder = os.path.join(root, name)
        files = sorted(f for f in os.listdir(folder) if f.lower().endswith(IMAGE_EXTENSIONS))
        if not files:
            raise DatasetError(f"class directory {folder} contains no images")
        loaded = 0
        for fname in files:
            path = os.path.join(folder, fname)
            try:
                with Image.open(path) as im:
                    gray = im.convert("L").resize((W, H), Image.BILINEAR)
                    arr = np.asarray(gray, dtype=np.float64)
            except (OSError, UnidentifiedImageError) as exc:
                logger.warning("skipping unreadable image %s: %s", path, exc)
                skipped.append(path)
                continue
            images.append(normalize_image(arr))
            labels.append(label)
            loaded += 1
        if loaded == 0:
            raise DatasetError(f"no readable images in {folder}")
    X = np.stack(images).astype(np.float32)[:, None]
    y = np.asarray(labels, dtype=np.int64)
    splits = stratified_split(y, np.random.default_rng(spec.seed))
    out = {name: (X[idx], y[idx]) for name, idx in splits.items()}
    return Dataset(out, len(classes), classes, skipped)


def load_dataset(spec: DatasetSpec) -> Dataset:
    if spec.kind == "image_folder":
        if not spec.root:
            raise ConfigError("image_folder datasets need a root directory")
        return ingest_images(spec.root, spec)
    return generate_synthetic(spec)


def random_rotate(batch, rng, max_degrees=10.0):
    """Rotate each [1, H, W] image by a uniform angle in +-max_degrees (bilinear),
    then re-standardize."""
    if max_degrees <= 0:
        return batch
    out = np.empty_like(batch)
    angles = rng.uniform(-max_degrees, max_degrees, size=len(batch))
    for i, (img, angle) in enumerate(zip(batch, angles)):
        rotated = ndimage.rotate(img[0], angle, reshape=False, order=1, mode="reflect")
        out[i, 0] = normalize_image(rotated)
    return out
