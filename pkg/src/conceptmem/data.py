"""Dataset construction and loading.

Synthetic Gaussian classes for desk-scale experiments, an orthogonal
oracle dataset whose identity embeddings make nearest-prototype exact,
and the Omniglot glyph archive (grayscale, ink = 1, area-averaged down
to 28x28, path-sorted 1200/423 class split, optional rotation classes).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .episodes import Dataset
from .errors import ConfigError, DataLoadError
from .rng import Xoshiro256, derive_seed

OMNIGLOT_SIDE = 28
TRAIN_CLASSES = 1200


@dataclass
class SyntheticSpec:
    n_classes: int
    dim: int
    center_scale: float = 5.0
    noise_sigma: float = 1.0
    samples_per_class: int = 40

    def __post_init__(self):
        if self.n_classes < 1 or self.dim < 1 or self.samples_per_class < 1:
            raise ConfigError(
                f"synthetic spec needs positive counts, got n_classes="
                f"{self.n_classes}, dim={self.dim}, samples={self.samples_per_class}")
        if self.noise_sigma <= 0:
            raise ConfigError(f"noise_sigma must be > 0, got {self.noise_sigma}")


def separability_ratio(centers: np.ndarray, sigma: float) -> float:
    """Min pairwise center distance over the within-class noise scale."""
    n = centers.shape[0]
    if n < 2:
        return float("inf")
    best = np.inf
    for i in range(n):
        d = np.linalg.norm(centers[i + 1:] - centers[i][None, :], axis=1)
        if d.size:
            best = min(best, float(d.min()))
    return best / sigma


def make_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    """Gaussian blobs: centers ~ center_scale * N(0, I), samples = center
    + noise_sigma * N(0, I). The separability ratio lands in metadata."""
    rng = Xoshiro256(derive_seed(seed, "synthetic"))
    centers = rng.normal_array((spec.n_classes, spec.dim), 0.0, spec.center_scale)
    samples = {}
    for c in range(spec.n_classes):
        noise = rng.normal_array((spec.samples_per_class, spec.dim), 0.0, spec.noise_sigma)
        samples[c] = centers[c][None, :] + noise
    meta = {
        "kind": "synthetic",
        "seed": seed,
        "centers": centers,
        "noise_sigma": spec.noise_sigma,
        "separability_ratio": separability_ratio(centers, spec.noise_sigma),
    }
    return Dataset(samples=samples, input_shape=(spec.dim,), meta=meta)


def make_orthogonal_oracle(n_classes: int, dim: int | None = None,
                           samples_per_class: int = 20, scale: float = 1.0) -> Dataset:
    """Noise-free dataset where class c's every sample is scale * e_c.

    With the identity embedder this makes slot prototypes exact class
    markers, so nearest-prototype classification cannot miss.
    """
    dim = dim or n_classes
    if dim < n_classes:
        raise ConfigError(f"need dim >= n_classes, got {dim} < {n_classes}")
    samples = {}
    for c in range(n_classes):
        v = np.zeros(dim)
        v[c] = scale
        samples[c] = np.repeat(v[None, :], samples_per_class, axis=0)
    return Dataset(samples=samples, input_shape=(dim,), meta={"kind": "orthogonal-oracle"})


def make_uninformative(n_classes: int, dim: int, samples_per_class: int = 40,
                       sigma: float = 1.0, seed: int = 0) -> Dataset:
    """All class centers at the origin: class labels carry no information,
    so any content-based classifier sits exactly at chance."""
    rng = Xoshiro256(derive_seed(seed, "uninformative"))
    samples = {c: rng.normal_array((samples_per_class, dim), 0.0, sigma)
               for c in range(n_classes)}
    return Dataset(samples=samples, input_shape=(dim,),
                   meta={"kind": "uninformative", "separability_ratio": 0.0})


# -- synthetic dataset round-trip (synth-gen CLI) ----------------------------


def save_dataset(dataset: Dataset, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    arrays = {f"class_{c}": dataset.samples[c] for c in dataset.class_ids()}
    np.savez(os.path.join(out_dir, "samples.npz"), **arrays)
    meta = {k: v for k, v in dataset.meta.items() if not isinstance(v, np.ndarray)}
    meta["input_shape"] = list(dataset.input_shape)
    meta["n_classes"] = dataset.n_classes
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_dataset(in_dir: str) -> Dataset:
    npz_path = os.path.join(in_dir, "samples.npz")
    meta_path = os.path.join(in_dir, "meta.json")
    if not os.path.exists(npz_path) or not os.path.exists(meta_path):
        raise DataLoadError(f"{in_dir}: expected samples.npz and meta.json")
    with open(meta_path) as fh:
        meta = json.load(fh)
    with np.load(npz_path) as npz:
        samples = {int(name.split("_", 1)[1]): np.asarray(npz[name], dtype=np.float64)
                   for name in npz.files}
    return Dataset(samples=samples, input_shape=tuple(meta["input_shape"]), meta=meta)


# -- Omniglot -----------------------------------------------------------------


def _resize_area(img: np.ndarray, side: int) -> np.ndarray:
    """Box-filter (area-average) resize of a square grayscale image.

    Implemented as two weight-matrix products, where row i of the weight
    matrix holds each source pixel's overlap with destination cell i.
    Exact for any integer sizes, deterministic, parameter-free.
    """
    src = img.shape[0]
    if img.shape != (src, src):
        raise DataLoadError(f"resize expects a square image, got {img.shape}")
    w = _overlap_matrix(src, side)
    return w @ img @ w.T


def _overlap_matrix(src: int, dst: int) -> np.ndarray:
    w = np.zeros((dst, src))
    ratio = src / dst
    for i in range(dst):
        lo, hi = i * ratio, (i + 1) * ratio
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, src)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                w[i, j] = overlap / ratio
    return w


def load_omniglot(root: str | None = None, train_classes: int = TRAIN_CLASSES,
                  side: int = OMNIGLOT_SIDE) -> tuple[Dataset, Dataset]:
    """Load the glyph archive from `root` (default $CONCEPT_DATA_DIR).

    Expects images_background/ and images_evaluation/ alphabet trees of
    PNGs. All characters are pooled and sorted by path; the first
    `train_classes` become the training split. Pixels are inverted so
    ink is 1 on a 0 background, then area-averaged to `side` x `side`.
    """
    try:
        from PIL import Image
    except ImportError as exc:
        raise DataLoadError("Pillow is required to decode the glyph archive") from exc

    root = root or os.environ.get("CONCEPT_DATA_DIR", "")
    if not root or not os.path.isdir(root):
        raise DataLoadError(
            f"dataset root {root!r} not found; pass a path or set CONCEPT_DATA_DIR")
    subdirs = [d for d in ("images_background", "images_evaluation")
               if os.path.isdir(os.path.join(root, d))]
    if not subdirs:
        raise DataLoadError(
            f"{root}: expected images_background/ and images_evaluation/ "
            "alphabet directories")

    char_dirs = []
    for sub in subdirs:
        base = os.path.join(root, sub)
        for alphabet in sorted(os.listdir(base)):
            a_dir = os.path.join(base, alphabet)
            if not os.path.isdir(a_dir):
                continue
            for character in sorted(os.listdir(a_dir)):
                c_dir = os.path.join(a_dir, character)
                if os.path.isdir(c_dir):
                    char_dirs.append(c_dir)
    char_dirs.sort()
    if len(char_dirs) <= train_classes:
        raise DataLoadError(
            f"{root}: found {len(char_dirs)} character classes, need more "
            f"than {train_classes} for a train/eval split")

    def load_class(c_dir: str) -> np.ndarray:
        out = []
        for name in sorted(os.listdir(c_dir)):
            if not name.lower().endswith(".png"):
                continue
            path = os.path.join(c_dir, name)
            try:
                with Image.open(path) as im:
                    arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            except Exception as exc:
                raise DataLoadError(f"corrupt image {path}: {exc}") from exc
            arr = 1.0 - arr  # ink = 1
            out.append(_resize_area(arr, side)[None, :, :])
        if not out:
            raise DataLoadError(f"{c_dir}: no PNG samples")
        return np.stack(out)

    def build(dirs: list[str]) -> Dataset:
        samples = {i: load_class(d) for i, d in enumerate(dirs)}
        return Dataset(samples=samples, input_shape=(1, side, side),
                       meta={"kind": "omniglot", "paths": dirs})

    return build(char_dirs[:train_classes]), build(char_dirs[train_classes:])


def augment_rotations(dataset: Dataset) -> Dataset:
    """Spawn 4 classes per class: 0/90/180/270-degree rotations of all
    samples. Intended for the training split only."""
    shape = dataset.input_shape
    if len(shape) != 3 or shape[1] != shape[2]:
        raise DataLoadError(f"rotation augmentation needs square images, got {shape}")
    samples = {}
    for c in dataset.class_ids():
        base = dataset.samples[c]
        for r in range(4):
            samples[4 * c + r] = np.ascontiguousarray(np.rot90(base, k=r, axes=(2, 3)))
    meta = dict(dataset.meta)
    meta["rotations"] = True
    return Dataset(samples=samples, input_shape=shape, meta=meta)
