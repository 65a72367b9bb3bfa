"""Datasets: CIFAR-10 binary batches, seeded synthetic corpora, subsetting and standardisation."""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import CifarFormatError, ConfigError

CIFAR_SHAPE = (3, 32, 32)
CIFAR_PIXELS = 3 * 32 * 32
CIFAR_RECORD = 1 + CIFAR_PIXELS
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {self.num_classes}")
        if len(self.images) != len(labels):
            raise ValueError(f"{len(self.images)} images but {len(labels)} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def take(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.images[index], self.labels[index], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


# -- CIFAR-10 ------------------------------------------------------------------

def parse_cifar_records(buf: bytes, source: str = "<bytes>") -> tuple:
    """(uint8 images [N, 3, 32, 32], uint8 labels [N]) from raw record bytes."""
    if len(buf) % CIFAR_RECORD:
        offset = len(buf) - len(buf) % CIFAR_RECORD
        raise CifarFormatError(
            f"{source}: size {len(buf)} is not a multiple of {CIFAR_RECORD}; "
            f"incomplete record at offset {offset}")
    records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].copy()
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        i = int(bad[0])
        raise CifarFormatError(
            f"{source}: label byte {labels[i]} > 9 at offset {i * CIFAR_RECORD}")
    return records[:, 1:].reshape(-1, *CIFAR_SHAPE).copy(), labels


def serialize_cifar_records(images: np.ndarray, labels) -> bytes:
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.dtype != np.uint8 or images.shape[1:] != CIFAR_SHAPE:
        raise ValueError(f"expected uint8 images of shape [N, 3, 32, 32], got {images.dtype} {images.shape}")
    out = np.empty((len(images), CIFAR_RECORD), dtype=np.uint8)
    out[:, 0] = labels
    out[:, 1:] = images.reshape(len(images), -1)
    return out.tobytes()


def to_uint8(images: np.ndarray) -> np.ndarray:
    """Invert the /255 pixel scaling."""
    return np.rint(np.asarray(images, dtype=np.float64) * 255).astype(np.uint8)


def read_cifar_batch(path) -> Dataset:
    with open(path, "rb") as fh:
        images, labels = parse_cifar_records(fh.read(), os.fspath(path))
    return Dataset(images.astype(np.float32) / np.float32(255), labels, 10)


def _concat(parts) -> Dataset:
    return Dataset(np.concatenate([p.images for p in parts]),
                   np.concatenate([p.labels for p in parts]), parts[0].num_classes)


def load_cifar10(dir_path) -> tuple:
    """(train, test) from the five training batches and the test batch of a CIFAR-10 binary directory."""
    names = CIFAR_TRAIN_FILES + (CIFAR_TEST_FILE,)
    missing = [n for n in names if not os.path.isfile(os.path.join(dir_path, n))]
    if missing:
        raise FileNotFoundError(f"{dir_path}: missing CIFAR-10 files {missing}")
    train = _concat([read_cifar_batch(os.path.join(dir_path, n)) for n in CIFAR_TRAIN_FILES])
    return train, read_cifar_batch(os.path.join(dir_path, CIFAR_TEST_FILE))


# -- subsetting and normalisation --------------------------------------------------

def subset(ds: Dataset, n: int, seed: int, stratified: bool = False) -> Dataset:
    """Seeded sample of ``n`` items, kept in original order.

    Stratified sampling deals classes round-robin in a seeded order, so class
    counts differ by at most one while every class has items left.
    """
    if not 0 <= n <= len(ds):
        raise ValueError(f"cannot take {n} items from a dataset of {len(ds)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    if not stratified:
        return ds.take(np.sort(rng.permutation(len(ds))[:n]))
    pools = [list(rng.permutation(np.flatnonzero(ds.labels == c))) for c in range(ds.num_classes)]
    order = rng.permutation(ds.num_classes)
    picked = []
    while len(picked) < n:
        for c in order:
            if pools[c] and len(picked) < n:
                picked.append(pools[c].pop())
    return ds.take(np.sort(np.asarray(picked, dtype=np.int64)))


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be 1-d arrays of equal length")
        if not np.all(std > 0):
            raise ValueError(f"std must be > 0 per channel, got {std}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def identity(cls, channels: int) -> "NormalizationStats":
        return cls(np.zeros(channels), np.ones(channels))


def _channel_view(images: np.ndarray) -> tuple:
    axes = (0,) + tuple(range(2, images.ndim))
    bshape = (1, -1) + (1,) * (images.ndim - 2)
    return axes, bshape


def normalize(ds: Dataset, stats: NormalizationStats | None = None) -> tuple:
    """Per-channel (x - mean) / std over axis 1; statistics come from ``ds`` unless given."""
    x = np.asarray(ds.images, dtype=np.float64)
    axes, bshape = _channel_view(x)
    if stats is None:
        mean = x.mean(axis=axes)
        std = x.std(axis=axes)
        zero = np.flatnonzero(std <= 1e-12)
        if zero.size:
            raise ValueError(f"channel(s) {zero.tolist()} have zero standard deviation")
        stats = NormalizationStats(mean, std)
    if stats.mean.shape[0] != x.shape[1]:
        raise ValueError(f"stats cover {stats.mean.shape[0]} channels, data has {x.shape[1]}")
    out = ((x - stats.mean.reshape(bshape)) / stats.std.reshape(bshape)).astype(np.float32)
    if not np.all(np.isfinite(out)):
        raise ValueError("normalisation produced non-finite values")
    return replace(ds, images=out), stats


# -- synthetic corpora -----------------------------------------------------------------

def simplex_vertices(k: int) -> np.ndarray:
    """k points in R^(k-1) with unit pairwise distance, centred on the origin (Helmert basis)."""
    h = np.zeros((k - 1, k))
    for j in range(1, k):
        h[j - 1, :j] = 1.0 / np.sqrt(j * (j + 1))
        h[j - 1, j] = -j / np.sqrt(j * (j + 1))
    return h.T / np.sqrt(2.0)


def _balanced_labels(rng, n: int, classes: int) -> np.ndarray:
    return rng.permutation(np.arange(n) % classes)


def synth_gaussians(seed: int, n: int, classes: int, dim: int, separation: float = 4.0,
                    sigma: float = 1.0) -> Dataset:
    """Balanced isotropic Gaussian blobs whose means form a regular simplex of edge ``separation``."""
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    if dim < classes - 1:
        raise ConfigError(f"a {classes}-class simplex needs dim >= {classes - 1}, got {dim}")
    rng = np.random.Generator(np.random.PCG64(seed))
    means = np.zeros((classes, dim))
    means[:, :classes - 1] = simplex_vertices(classes) * separation
    labels = _balanced_labels(rng, n, classes)
    x = means[labels] + sigma * rng.standard_normal((n, dim))
    return Dataset(x.astype(np.float32), labels, classes)


def synth_images(seed: int, n: int, classes: int = 10, shape=CIFAR_SHAPE, noise: float = 0.3,
                 distractor: float = 0.7, template_seed: int = 1234) -> Dataset:
    """CIFAR-shaped stand-in: a shifted class template, a weaker template of a
    random other class, and pixel noise.

    Templates depend only on ``template_seed`` so train and test sets drawn with
    different ``seed`` share classes. Pixels are quantised to k/255 like real
    CIFAR bytes.
    """
    c, h, w = shape
    trng = np.random.Generator(np.random.PCG64(template_seed))
    coarse = trng.standard_normal((classes, c, 4, 4))
    templates = np.kron(coarse, np.ones((1, 1, -(-h // 4), -(-w // 4))))[:, :, :h, :w]
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = _balanced_labels(rng, n, classes)
    other = (labels + rng.integers(1, classes, size=n)) % classes
    shift = rng.integers(-4, 5, size=(n, 4))
    x = np.empty((n, c, h, w))
    for i in range(n):
        x[i] = np.roll(templates[labels[i]], tuple(shift[i, :2]), axis=(1, 2))
        x[i] += distractor * np.roll(templates[other[i]], tuple(shift[i, 2:]), axis=(1, 2))
    x = 0.5 + 0.1 * x + noise * rng.standard_normal(x.shape)
    pixels = np.clip(np.rint(x * 255), 0, 255)
    return Dataset((pixels / 255).astype(np.float32), labels, classes)


def augment_batch(x: np.ndarray, rng: np.random.Generator, flip: bool = True,
                  crop_pad: int = 0) -> np.ndarray:
    """Random horizontal flips and zero-padded random crops of an NCHW batch."""
    out = x.copy()
    if flip:
        mask = rng.random(len(x)) < 0.5
        out[mask] = out[mask][..., ::-1]
    if crop_pad:
        p = crop_pad
        padded = np.pad(out, ((0, 0), (0, 0), (p, p), (p, p)))
        offs = rng.integers(0, 2 * p + 1, size=(len(x), 2))
        h, w = x.shape[2:]
        for i, (di, dj) in enumerate(offs):
            out[i] = padded[i, :, di:di + h, dj:dj + w]
    return out
