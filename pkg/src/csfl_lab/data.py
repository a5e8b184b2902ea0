"""Dataset generation, IDX-format ingestion, and federated partitioning.

Inputs are float64 features in [0, 1]; labels are integer class indices.
Every generator and partitioner is deterministic per seed. Shards index
into a dataset's training split and never overlap.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """An IDX file is malformed: wrong magic, truncated, or inconsistent."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, labels, and a disjoint train/test index split."""

    inputs: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    num_classes: int

    def __post_init__(self):
        n = self.inputs.shape[0]
        if self.labels.shape != (n,):
            raise ValueError(f"labels shape {self.labels.shape} does not match {n} samples")
        combined = np.concatenate([self.train_idx, self.test_idx])
        if len(np.unique(combined)) != n or len(combined) != n:
            raise ValueError("train and test indices must partition the sample range")

    @property
    def num_samples(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class Shard:
    """One client's slice of the training indices plus its batch geometry."""

    client_id: str
    indices: np.ndarray
    batch_size: int

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.batches < 1:
            raise ValueError(
                f"shard for client {self.client_id!r} has {len(self.indices)} samples, "
                f"fewer than one batch of {self.batch_size}"
            )

    @property
    def batches(self) -> int:
        return len(self.indices) // self.batch_size


def synth_blobs(
    num_classes: int,
    dim: int,
    samples_per_class: int,
    spread: float,
    seed: int,
) -> Dataset:
    """Gaussian clusters, one per class, min-max scaled to [0, 1].

    Per-feature scaling is affine, so with spread=0 every sample still
    coincides with its (scaled) class mean. The sample order is class 0
    block first; an 80/20 train/test split is drawn by seeded shuffle.
    """
    if num_classes < 1 or dim < 1 or samples_per_class < 1:
        raise ValueError("num_classes, dim, and samples_per_class must be positive")
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 1.0, size=(num_classes, dim))
    inputs = np.repeat(means, samples_per_class, axis=0)
    inputs = inputs + spread * rng.standard_normal(inputs.shape)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), samples_per_class)

    lo = inputs.min(axis=0)
    span = inputs.max(axis=0) - lo
    span = np.where(span > 0, span, 1.0)
    inputs = (inputs - lo) / span

    n = inputs.shape[0]
    perm = rng.permutation(n)
    n_train = n * 8 // 10
    return Dataset(
        inputs=inputs,
        labels=labels,
        train_idx=np.sort(perm[:n_train]),
        test_idx=np.sort(perm[n_train:]),
        num_classes=num_classes,
    )


def _read_header(data: bytes, count: int, path: str) -> tuple[int, ...]:
    if len(data) < 4 * count:
        raise IdxFormatError(f"{path}: truncated header")
    return struct.unpack(f">{count}I", data[: 4 * count])


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Pixels are flattened row-major and scaled to [0, 1]. All samples land
    in the train split; pair a second load with merge_datasets() to attach
    a held-out set.
    """
    with open(images_path, "rb") as fh:
        img_data = fh.read()
    with open(labels_path, "rb") as fh:
        lbl_data = fh.read()

    magic, n_img, rows, cols = _read_header(img_data, 4, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"{images_path}: wrong magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    payload = img_data[16:]
    if len(payload) != n_img * rows * cols:
        raise IdxFormatError(
            f"{images_path}: truncated payload, expected {n_img * rows * cols} bytes, "
            f"got {len(payload)}"
        )

    lmagic, n_lbl = _read_header(lbl_data, 2, labels_path)
    if lmagic != IDX_LABEL_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: wrong magic 0x{lmagic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    lbl_payload = lbl_data[8:]
    if len(lbl_payload) != n_lbl:
        raise IdxFormatError(
            f"{labels_path}: truncated payload, expected {n_lbl} bytes, "
            f"got {len(lbl_payload)}"
        )
    if n_img != n_lbl:
        raise IdxFormatError(
            f"image/label count mismatch: {n_img} images vs {n_lbl} labels"
        )

    inputs = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    inputs = inputs.reshape(n_img, rows * cols)
    labels = np.frombuffer(lbl_payload, dtype=np.uint8).astype(np.int64)
    num_classes = int(labels.max()) + 1 if n_img else 1
    return Dataset(
        inputs=inputs,
        labels=labels,
        train_idx=np.arange(n_img),
        test_idx=np.arange(0),
        num_classes=num_classes,
    )


def save_idx(dataset: Dataset, images_path: str, labels_path: str) -> None:
    """Persist features (rounded to bytes) and labels as an IDX pair."""
    n, dim = dataset.inputs.shape
    pixels = np.clip(np.rint(dataset.inputs * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGE_MAGIC, n, 1, dim))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABEL_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def merge_datasets(train: Dataset, test: Dataset) -> Dataset:
    """Stack two datasets, keeping the first as train and the second as test."""
    if train.inputs.shape[1] != test.inputs.shape[1]:
        raise ValueError("train and test feature widths differ")
    n_train = train.num_samples
    return Dataset(
        inputs=np.concatenate([train.inputs, test.inputs]),
        labels=np.concatenate([train.labels, test.labels]),
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, n_train + test.num_samples),
        num_classes=max(train.num_classes, test.num_classes),
    )


def _client_ids(num_clients: int, client_ids) -> list[str]:
    if client_ids is None:
        return [str(i) for i in range(num_clients)]
    ids = [str(c) for c in client_ids]
    if len(ids) != num_clients:
        raise ValueError(f"got {len(ids)} client ids for {num_clients} clients")
    return ids


def partition_iid(
    dataset: Dataset,
    num_clients: int,
    batch_size: int,
    seed: int,
    client_ids=None,
) -> list[Shard]:
    """Class-balanced partition: per-class seeded shuffle, round-robin deal.

    The dealing cursor carries over between classes, so shard sizes differ
    by at most one overall while staying balanced within each class.
    """
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    train = dataset.train_idx
    if num_clients > len(train):
        raise ValueError(
            f"cannot split {len(train)} training samples across {num_clients} clients"
        )
    ids = _client_ids(num_clients, client_ids)
    rng = np.random.default_rng(seed)
    train_labels = dataset.labels[train]

    buckets: list[list[int]] = [[] for _ in range(num_clients)]
    cursor = 0
    for cls in range(dataset.num_classes):
        members = train[train_labels == cls]
        members = members[rng.permutation(len(members))]
        for i, sample in enumerate(members):
            buckets[(cursor + i) % num_clients].append(int(sample))
        cursor = (cursor + len(members)) % num_clients

    return [
        Shard(client_id=ids[i], indices=np.array(sorted(b), dtype=np.int64), batch_size=batch_size)
        for i, b in enumerate(buckets)
    ]


def partition_noniid(
    dataset: Dataset,
    num_clients: int,
    shards_per_client: int,
    batch_size: int,
    seed: int,
    client_ids=None,
) -> list[Shard]:
    """Label-sorted shard dealing: each client draws a few contiguous label slices.

    Training indices are sorted by label, cut into num_clients *
    shards_per_client contiguous slices, and each client receives
    shards_per_client of them by seeded permutation, so clients see only
    a handful of label groups.
    """
    if num_clients < 1 or shards_per_client < 1:
        raise ValueError("num_clients and shards_per_client must be >= 1")
    train = dataset.train_idx
    total_slices = num_clients * shards_per_client
    if total_slices > len(train):
        raise ValueError(
            f"insufficient data: {len(train)} training samples for {total_slices} slices"
        )
    ids = _client_ids(num_clients, client_ids)
    rng = np.random.default_rng(seed)

    order = np.argsort(dataset.labels[train], kind="stable")
    slices = np.array_split(train[order], total_slices)
    perm = rng.permutation(total_slices)

    shards = []
    for i in range(num_clients):
        chosen = perm[i * shards_per_client : (i + 1) * shards_per_client]
        indices = np.concatenate([slices[j] for j in chosen])
        shards.append(
            Shard(client_id=ids[i], indices=np.sort(indices), batch_size=batch_size)
        )
    return shards
