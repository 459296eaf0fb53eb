"""Dataset ingestion and partitioning.

Covers IDX binary files (the classic big-endian MNIST container), a
deterministic synthetic Gaussian-blob generator for desk-scale runs,
IID/Dirichlet client partitioning, stratified seed-set sampling, and the
d-fold replication that turns the seed set into the shared public set.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError, InfeasibilityError

__all__ = [
    "LabeledDataset",
    "PartitionConfig",
    "concat",
    "load_idx",
    "synth_dataset",
    "partition",
    "partition_indices",
    "sample_seed",
    "sample_seed_indices",
    "replicate",
]

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    """Images (N, C, H, W) as float32 in [0, 1] plus integer labels in [0, L)."""

    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DataError(f"images must be (N, C, H, W), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.images) < 1:
            raise DataError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise DataError(
                f"labels must lie in [0, {self.class_count}), got "
                f"[{self.labels.min()}, {self.labels.max()}]")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[idx], self.labels[idx], self.class_count)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


def concat(parts) -> LabeledDataset:
    parts = list(parts)
    if not parts:
        raise DataError("nothing to concatenate")
    l = parts[0].class_count
    if any(p.class_count != l for p in parts):
        raise DataError("class counts differ across parts")
    return LabeledDataset(
        np.concatenate([p.images for p in parts], axis=0),
        np.concatenate([p.labels for p in parts], axis=0),
        l,
    )


@dataclass
class PartitionConfig:
    """How to split a dataset across clients."""

    mode: str  # "iid" or "dirichlet"
    client_count: int
    alpha: float = 0.5  # Dirichlet concentration; smaller = more skew
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("iid", "dirichlet"):
            raise DataError(f"unknown partition mode {self.mode!r}")
        if self.client_count < 1:
            raise DataError("client_count must be >= 1")
        if self.mode == "dirichlet" and not self.alpha > 0:
            raise DataError(f"dirichlet alpha must be positive, got {self.alpha}")


# --------------------------------------------------------------------------
# IDX files
# --------------------------------------------------------------------------

def _read_exact(fh, count, path):
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError(f"{path}: truncated file (wanted {count} more bytes, got {len(buf)})")
    return buf


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load a grayscale IDX image/label file pair.

    Pixel bytes are scaled by 1/255 into [0, 1]. Raises FormatError naming
    the offending file on bad magic, truncation, or an image/label count
    mismatch.
    """
    with open(images_path, "rb") as fh:
        magic, n, h, w = struct.unpack(">IIII", _read_exact(fh, 16, images_path))
        if magic != _IDX_IMAGES_MAGIC:
            raise FormatError(f"{images_path}: bad magic 0x{magic:08x}, expected 0x{_IDX_IMAGES_MAGIC:08x}")
        raw = _read_exact(fh, n * h * w, images_path)
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, labels_path))
        if magic != _IDX_LABELS_MAGIC:
            raise FormatError(f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{_IDX_LABELS_MAGIC:08x}")
        labels = np.frombuffer(_read_exact(fh, n_labels, labels_path), dtype=np.uint8)
    if n != n_labels:
        raise FormatError(f"{labels_path}: {n_labels} labels for {n} images in {images_path}")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, 1, h, w).astype(np.float32) / 255.0
    return LabeledDataset(images, labels.astype(np.int64), int(labels.max()) + 1)


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

def synth_dataset(classes: int, per_class: int, dims=(1, 12, 12), rng_seed: int = 0,
                  noise: float = 0.08, blob_sigma: float = 0.0) -> LabeledDataset:
    """Gaussian-blob images, one blob location per class.

    Class c gets a fixed blob center on a circle around the image center;
    each sample jitters the center by up to half a pixel and adds Gaussian
    pixel noise, then clips to [0, 1]. blob_sigma sets the blob width in
    pixels (0 picks min(h, w)/8); smaller blobs concentrate the class
    evidence in fewer pixels, which makes the task less redundant and
    model-corruption attacks correspondingly more damaging. Deterministic
    in rng_seed, and easy enough that a small MLP exceeds 90% held-out
    accuracy within 50 epochs.
    """
    if classes < 2:
        raise DataError("need at least 2 classes")
    if per_class < 1:
        raise DataError("need at least 1 sample per class")
    c, h, w = dims
    rng = np.random.default_rng(rng_seed)
    yy, xx = np.mgrid[0:h, 0:w]
    radius = min(h, w) / 3.2
    sigma = blob_sigma if blob_sigma > 0 else min(h, w) / 8.0
    n = classes * per_class
    images = np.empty((n, c, h, w), dtype=np.float32)
    labels = np.repeat(np.arange(classes), per_class)
    for i, label in enumerate(labels):
        angle = 2 * np.pi * label / classes
        cy = (h - 1) / 2 + radius * np.sin(angle) + rng.uniform(-0.5, 0.5)
        cx = (w - 1) / 2 + radius * np.cos(angle) + rng.uniform(-0.5, 0.5)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        img = blob[None, :, :] + rng.normal(0.0, noise, size=(c, h, w))
        images[i] = np.clip(img, 0.0, 1.0)
    order = rng.permutation(n)
    return LabeledDataset(images[order], labels[order], classes)


# --------------------------------------------------------------------------
# Partitioning
# --------------------------------------------------------------------------

def partition_indices(labels: np.ndarray, class_count: int, cfg: PartitionConfig) -> list:
    """Index arrays per client forming an exact partition of range(N).

    iid: one global shuffle, then an even split with the remainder going to
    the lowest-index clients. dirichlet: per class, a proportion vector
    p ~ Dir(alpha * 1_n) converted to slice boundaries by rounding the
    cumulative sums, so no sample is lost to rounding. Clients left empty
    by an extreme draw receive one sample donated by the largest client.
    """
    n_clients = cfg.client_count
    n = len(labels)
    if n_clients > n:
        raise InfeasibilityError(f"cannot split {n} samples across {n_clients} clients")
    rng = np.random.default_rng(cfg.rng_seed)
    if cfg.mode == "iid":
        parts = [np.sort(chunk) for chunk in np.array_split(rng.permutation(n), n_clients)]
    else:
        buckets = [[] for _ in range(n_clients)]
        for cls in range(class_count):
            idx = np.flatnonzero(labels == cls)
            if len(idx) == 0:
                continue
            idx = rng.permutation(idx)
            props = rng.dirichlet(np.full(n_clients, cfg.alpha))
            bounds = np.rint(np.cumsum(props) * len(idx)).astype(np.int64)
            bounds = np.maximum.accumulate(bounds)
            bounds[-1] = len(idx)
            start = 0
            for client, stop in enumerate(bounds):
                if stop > start:
                    buckets[client].append(idx[start:stop])
                start = stop
        parts = [np.sort(np.concatenate(b)) if b else np.empty(0, dtype=np.int64)
                 for b in buckets]
    # repair rule: every client trains locally, so nobody may end up empty
    while any(len(p) == 0 for p in parts):
        empty = min(i for i, p in enumerate(parts) if len(p) == 0)
        donor = int(np.argmax([len(p) for p in parts]))
        parts[empty] = parts[donor][-1:]
        parts[donor] = parts[donor][:-1]
    return parts


def partition(dataset: LabeledDataset, cfg: PartitionConfig) -> list:
    """Split a dataset into disjoint per-client datasets covering the input."""
    parts = partition_indices(dataset.labels, dataset.class_count, cfg)
    return [dataset.subset(p) for p in parts]


# --------------------------------------------------------------------------
# Seed sampling and replication
# --------------------------------------------------------------------------

def sample_seed_indices(dataset: LabeledDataset, fraction: float, rng_seed: int) -> np.ndarray:
    """Indices of a stratified sample of size max(L, round(fraction * N)).

    Every class present in the source contributes at least one sample;
    the rest of the budget is spread proportionally to class frequency
    (largest remainder, capped by class size).
    """
    if not 0 < fraction <= 1:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    n = len(dataset)
    counts = dataset.class_histogram()
    present = np.flatnonzero(counts)
    size = min(n, max(dataset.class_count, int(round(fraction * n))))
    take = np.zeros(dataset.class_count, dtype=np.int64)
    take[present] = 1
    remaining = size - take.sum()
    if remaining > 0:
        capacity = counts - take
        quota = capacity / capacity.sum() * remaining
        take += np.floor(quota).astype(np.int64)
        shortfall = remaining - int(np.floor(quota).sum())
        # hand out leftovers by largest fractional remainder, class index breaking ties
        order = np.lexsort((np.arange(dataset.class_count), -(quota - np.floor(quota))))
        for cls in order:
            if shortfall == 0:
                break
            if take[cls] < counts[cls]:
                take[cls] += 1
                shortfall -= 1
    rng = np.random.default_rng(rng_seed)
    chosen = []
    for cls in present:
        idx = np.flatnonzero(dataset.labels == cls)
        chosen.append(rng.choice(idx, size=take[cls], replace=False))
    return np.concatenate(chosen)


def sample_seed(dataset: LabeledDataset, fraction: float, rng_seed: int) -> LabeledDataset:
    """Stratified seed sample; see sample_seed_indices for the size rule."""
    return dataset.subset(sample_seed_indices(dataset, fraction, rng_seed))


def replicate(seed_ds: LabeledDataset, d: int) -> LabeledDataset:
    """Concatenate d exact copies of the seed dataset in block order."""
    if d < 1:
        raise DataError(f"replication factor must be >= 1, got {d}")
    if d == 1:
        return LabeledDataset(seed_ds.images.copy(), seed_ds.labels.copy(), seed_ds.class_count)
    return LabeledDataset(
        np.tile(seed_ds.images, (d, 1, 1, 1)),
        np.tile(seed_ds.labels, d),
        seed_ds.class_count,
    )
