"""Dataset ingestion: IDX files, image directories, and synthetic blobs.

All loaders normalize pixels onto [0, 1].  Flattening is row-major with the
channel index varying fastest (HWC order), so flat coordinate
``(row * width + col) * channels + channel`` addresses one channel component;
an RGB image of q spatial pixels therefore has p = 3q perturbable coordinates.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InputError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Image:
    """One image as a flat float64 pixel vector in [0, 1]."""

    pixels: np.ndarray
    width: int
    height: int
    channels: int = 1
    label: int | None = None

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        if pixels.ndim != 1:
            raise InputError("pixels must be a flat vector")
        if pixels.shape[0] != self.width * self.height * self.channels:
            raise InputError(
                f"{pixels.shape[0]} pixels != {self.width}x{self.height}x{self.channels}"
            )
        if not np.isfinite(pixels).all():
            raise InputError("non-finite pixel value")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise InputError("pixel values must lie in [0, 1]")

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


@dataclass
class Dataset:
    images: list[Image]
    labels: list[int]
    num_classes: int
    name: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise InputError("images and labels differ in length")
        if any(not (0 <= y < self.num_classes) for y in self.labels):
            raise InputError(f"labels must lie in 0..{self.num_classes - 1}")
        shapes = {(im.width, im.height, im.channels) for im in self.images}
        if len(shapes) > 1:
            raise InputError(f"mixed image shapes in dataset: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.images)

    def pixel_matrix(self) -> np.ndarray:
        return np.stack([im.pixels for im in self.images])


def _read_be32(fh, path, what):
    raw = fh.read(4)
    if len(raw) != 4:
        raise DataError(f"{path}: truncated reading {what} at byte {fh.tell() - len(raw)}")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path, num_classes=None, name="") -> Dataset:
    """Load an IDX image/label file pair (the MNIST container format).

    Pixel bytes are scaled onto [0, 1] by division with 255.  ``num_classes``
    defaults to ``max(label) + 1``; when given, out-of-range labels are a
    :class:`DataError`.
    """
    with open(images_path, "rb") as fh:
        magic = _read_be32(fh, images_path, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise DataError(f"{images_path}: bad image magic 0x{magic:08x} at byte 0")
        count = _read_be32(fh, images_path, "count")
        rows = _read_be32(fh, images_path, "rows")
        cols = _read_be32(fh, images_path, "cols")
        payload = fh.read()
    expected = count * rows * cols
    if len(payload) != expected:
        raise DataError(
            f"{images_path}: payload is {len(payload)} bytes at byte 16, expected {expected}"
        )
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as fh:
        magic = _read_be32(fh, labels_path, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise DataError(f"{labels_path}: bad label magic 0x{magic:08x} at byte 0")
        label_count = _read_be32(fh, labels_path, "count")
        label_payload = fh.read()
    if len(label_payload) != label_count:
        raise DataError(
            f"{labels_path}: payload is {len(label_payload)} bytes at byte 8, "
            f"expected {label_count}"
        )
    if label_count != count:
        raise DataError(
            f"label count {label_count} != image count {count} "
            f"({labels_path} vs {images_path})"
        )
    labels = np.frombuffer(label_payload, dtype=np.uint8)
    k = num_classes if num_classes is not None else int(labels.max()) + 1 if count else 0
    bad = np.nonzero(labels >= k)[0]
    if bad.size:
        raise DataError(
            f"{labels_path}: label {labels[bad[0]]} at item {bad[0]} out of range for K={k}"
        )
    images = [
        Image(raw[i] / 255.0, width=cols, height=rows, channels=1, label=int(labels[i]))
        for i in range(count)
    ]
    return Dataset(images, [int(y) for y in labels], k, name or Path(images_path).stem)


def save_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Write a grayscale Dataset as an IDX pair (pixels quantized to 1/255)."""
    if dataset.images and dataset.images[0].channels != 1:
        raise InputError("IDX output supports single-channel images only")
    n = len(dataset)
    rows = dataset.images[0].height if n else 0
    cols = dataset.images[0].width if n else 0
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        for im in dataset.images:
            fh.write(np.round(im.pixels * 255.0).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        fh.write(bytes(int(y) for y in dataset.labels))


def load_image_dir(directory, labels_csv=None, num_classes=None, name="") -> Dataset:
    """Load raster images from a directory with a ``filename,label`` CSV.

    The CSV defaults to ``<directory>/labels.csv``.  All problems (missing
    label rows, undecodable files) are collected and reported together.
    """
    from PIL import Image as PilImage, UnidentifiedImageError

    directory = Path(directory)
    labels_csv = Path(labels_csv) if labels_csv else directory / "labels.csv"
    if not labels_csv.is_file():
        raise DataError(f"{labels_csv}: label file not found")
    with open(labels_csv, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if rows and rows[0][:2] == ["filename", "label"]:
        rows = rows[1:]

    problems, images, labels = [], [], []
    for row in rows:
        if len(row) < 2:
            problems.append(f"{labels_csv}: malformed row {row!r}")
            continue
        fname, label_text = row[0], row[1]
        path = directory / fname
        try:
            label = int(label_text)
        except ValueError:
            problems.append(f"{fname}: label {label_text!r} is not an integer")
            continue
        if not path.is_file():
            problems.append(f"{fname}: file not found")
            continue
        try:
            with PilImage.open(path) as pil:
                pil = pil.convert("RGB") if pil.mode not in ("L", "RGB") else pil
                arr = np.asarray(pil, dtype=np.float64) / 255.0
        except (UnidentifiedImageError, OSError) as exc:
            problems.append(f"{fname}: cannot decode ({exc})")
            continue
        if arr.ndim == 2:
            arr = arr[:, :, None]
        images.append(
            Image(arr.ravel(), width=arr.shape[1], height=arr.shape[0],
                  channels=arr.shape[2], label=label)
        )
        labels.append(label)
    if problems:
        raise DataError(f"{len(problems)} bad entries: " + "; ".join(problems))
    k = num_classes if num_classes is not None else (max(labels) + 1 if labels else 0)
    if any(y >= k for y in labels):
        raise DataError(f"label out of range for K={k}")
    return Dataset(images, labels, k, name or directory.name)


BLOB_BACKGROUND = 0.21
BLOB_PATCH = 0.34


def _blob_templates(num_classes: int, side: int) -> np.ndarray:
    """Class templates: one bright square patch per class on a dim background.

    The patch/background contrast is deliberately modest relative to the
    noise level so the trained classifier keeps a population of genuinely
    ambiguous images; crank BLOB_PATCH up for a trivially separable task.
    """
    anchors = [
        (1, 1), (side - 4, side - 4), (1, side - 4), (side - 4, 1),
        (side // 2 - 1, side // 2 - 1), (1, side // 2 - 1), (side - 4, side // 2 - 1),
        (side // 2 - 1, 1), (side // 2 - 1, side - 4),
    ]
    if num_classes > len(anchors):
        raise InputError(f"synthetic blobs support at most {len(anchors)} classes")
    if side < 5:
        raise InputError("synthetic blobs need side >= 5")
    templates = np.full((num_classes, side, side), BLOB_BACKGROUND)
    for k in range(num_classes):
        r, c = anchors[k]
        templates[k, r : r + 3, c : c + 3] = BLOB_PATCH
    return templates.reshape(num_classes, side * side)


def synth_blobs(num_classes=3, n_per_class=200, side=8, noise_sd=0.1, seed=0) -> Dataset:
    """Deterministic synthetic dataset: patch templates plus clipped noise."""
    rng = np.random.default_rng(seed)
    templates = _blob_templates(num_classes, side)
    images, labels = [], []
    for k in range(num_classes):
        noise = rng.normal(0.0, noise_sd, (n_per_class, side * side))
        batch = np.clip(templates[k] + noise, 0.0, 1.0)
        for row in batch:
            images.append(Image(row, width=side, height=side, channels=1, label=k))
            labels.append(k)
    return Dataset(images, labels, num_classes, f"blobs-k{num_classes}-s{seed}")


def split(dataset: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded random split into (rest, held-out fraction)."""
    if not 0.0 <= fraction <= 1.0:
        raise InputError("fraction must lie in [0, 1]")
    n = len(dataset)
    n_val = int(round(n * fraction))
    order = np.random.default_rng(seed).permutation(n)
    val_idx = set(order[:n_val].tolist())
    train_imgs, train_labels, val_imgs, val_labels = [], [], [], []
    for i in range(n):
        if i in val_idx:
            val_imgs.append(dataset.images[i])
            val_labels.append(dataset.labels[i])
        else:
            train_imgs.append(dataset.images[i])
            train_labels.append(dataset.labels[i])
    return (
        Dataset(train_imgs, train_labels, dataset.num_classes, dataset.name + "-train"),
        Dataset(val_imgs, val_labels, dataset.num_classes, dataset.name + "-val"),
    )
