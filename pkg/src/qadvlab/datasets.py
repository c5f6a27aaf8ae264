"""Classical data ingestion and angle encoding.

Pipeline: IDX files (or an image directory with a JSON manifest) ->
grayscale images in [0, 1] -> area-weighted downsample to 16x16 -> flatten
-> L2-normalize and scale to rotation angles -> pad -> train/test split.
"""
from __future__ import annotations

import base64
import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SNAPSHOT_SCHEMA_VERSION = 1


class IdxFormatError(ValueError):
    pass


@dataclass
class Sample:
    x: np.ndarray  # raw features in [0, 1], length 256
    x_encoded: np.ndarray  # scaled unit vector plus zero padding
    a: np.ndarray  # one-hot label pair
    source_id: str


@dataclass
class DatasetSplit:
    train: list[Sample]
    test: list[Sample]


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_idx(images_path, labels_path, keep_labels=None) -> tuple[np.ndarray, np.ndarray]:
    """Read an IDX image/label file pair; pixels are mapped to [0, 1].

    keep_labels: optional set of labels to retain (e.g. {0, 1}).
    """
    with _open_maybe_gzip(images_path) as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise IdxFormatError("truncated image header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x}")
        payload = fh.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise IdxFormatError("truncated image payload")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)

    with _open_maybe_gzip(labels_path) as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise IdxFormatError("truncated label header")
        magic, lcount = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x}")
        lpayload = fh.read(lcount)
        if len(lpayload) != lcount:
            raise IdxFormatError("truncated label payload")
    labels = np.frombuffer(lpayload, dtype=np.uint8)
    if lcount != count:
        raise IdxFormatError(f"image count {count} != label count {lcount}")

    images = images.astype(float) / 255.0
    if keep_labels is not None:
        keep = np.isin(labels, sorted(keep_labels))
        images, labels = images[keep], labels[keep]
    return images, labels.astype(int)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write images (N, H, W) in [0, 1] and labels to canonical IDX files."""
    pix = np.clip(np.round(np.asarray(images) * 255.0), 0, 255).astype(np.uint8)
    n, h, w = pix.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        fh.write(pix.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def _overlap_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) fractional-overlap weights; each row sums to 1."""
    w = np.zeros((dst, src))
    step = src / dst
    for i in range(dst):
        lo, hi = i * step, (i + 1) * step
        for r in range(int(np.floor(lo)), int(np.ceil(hi))):
            w[i, r] = (min(hi, r + 1) - max(lo, r)) / step
    return w


def downsample(image: np.ndarray, out_h: int = 16, out_w: int = 16) -> np.ndarray:
    """Area-weighted mean pooling; preserves the global mean for exact
    integer ratios and maps constants to the same constant."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    if h < out_h or w < out_w:
        raise ValueError(f"cannot downsample {h}x{w} below {out_h}x{out_w}")
    return _overlap_weights(h, out_h) @ image @ _overlap_weights(w, out_w).T


def encode(x: np.ndarray, pad_to: int = 260, scale: float = 2.0,
           mode: str = "l2") -> np.ndarray:
    """Map features to rotation angles.

    "l2": scale * x / ||x||_2 (scale-invariant, the default);
    "range": per-pixel map x * pi (assumes x in [0, 1]).
    Zero-pads up to `pad_to` entries.
    """
    x = np.asarray(x, dtype=float).ravel()
    if pad_to < len(x):
        raise ValueError("pad_to is smaller than the feature count")
    if mode == "l2":
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            raise ValueError("cannot L2-encode the zero vector")
        body = scale * x / norm
    elif mode == "range":
        body = x * np.pi
    else:
        raise ValueError(f"unknown encoding mode {mode!r}")
    return np.concatenate([body, np.zeros(pad_to - len(x))])


def make_samples(images: np.ndarray, labels: np.ndarray, class_labels,
                 pad_to: int = 260, mode: str = "l2", id_prefix: str = "") -> list[Sample]:
    """Downsample to 16x16, encode, and one-hot against `class_labels`."""
    lab_to_col = {int(l): i for i, l in enumerate(class_labels)}
    out = []
    for i, (img, lab) in enumerate(zip(images, labels)):
        small = downsample(img) if img.shape != (16, 16) else np.asarray(img, float)
        x = small.ravel()
        a = np.zeros(2)
        a[lab_to_col[int(lab)]] = 1.0
        out.append(Sample(x, encode(x, pad_to=pad_to, mode=mode), a,
                          f"{id_prefix}{i}"))
    return out


def make_split(images: np.ndarray, labels: np.ndarray, n_train: int = 500,
               n_test: int = 100, seed: int = 0, class_labels=(0, 1),
               pad_to: int = 260, mode: str = "l2") -> DatasetSplit:
    """Seeded, class-balanced, disjoint train/test split."""
    rng = np.random.default_rng(seed)
    per_class_train = n_train // len(class_labels)
    per_class_test = n_test // len(class_labels)
    train_idx, test_idx = [], []
    for lab in class_labels:
        pool = np.nonzero(labels == lab)[0]
        need = per_class_train + per_class_test
        if len(pool) < need:
            raise ValueError(f"class {lab} has {len(pool)} items, need {need}")
        picked = rng.permutation(pool)[:need]
        train_idx.extend(picked[:per_class_train])
        test_idx.extend(picked[per_class_train:])
    train_idx = np.array(sorted(train_idx))
    test_idx = np.array(sorted(test_idx))
    train = make_samples(images[train_idx], labels[train_idx], class_labels,
                         pad_to, mode, id_prefix="train-")
    test = make_samples(images[test_idx], labels[test_idx], class_labels,
                        pad_to, mode, id_prefix="test-")
    return DatasetSplit(train, test)


def load_image_dir(manifest_path) -> tuple[np.ndarray, np.ndarray]:
    """Load a directory of grayscale images via a JSON manifest.

    Manifest: a list of {"path": ..., "label": ...}; paths are relative to
    the manifest file. Supported formats: .csv (rows of pixel values in
    [0, 1] or [0, 255]) and PGM (P2/P5).
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        entries = json.load(fh)
    images, labels = [], []
    for entry in entries:
        p = manifest_path.parent / entry["path"]
        if p.suffix == ".csv":
            img = np.loadtxt(p, delimiter=",", dtype=float)
            if img.max() > 1.0:
                img = img / 255.0
        elif p.suffix == ".pgm":
            img = _read_pgm(p)
        else:
            raise ValueError(f"unsupported image format {p.suffix}")
        images.append(img)
        labels.append(int(entry["label"]))
    return np.array(images), np.array(labels)


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P5":
        pix = np.frombuffer(data[i + 1 : i + 1 + w * h], dtype=np.uint8)
    elif magic == b"P2":
        pix = np.array(data[i:].split()[: w * h], dtype=float)
    else:
        raise ValueError("not a PGM file")
    return pix.reshape(h, w).astype(float) / maxval


def _b64_f64(arr: np.ndarray) -> str:
    return base64.b64encode(np.asarray(arr, "<f8").tobytes()).decode("ascii")


def _unb64_f64(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").copy()


def save_split(split: DatasetSplit, path) -> None:
    def pack(samples):
        return [{"x": _b64_f64(s.x), "x_encoded": _b64_f64(s.x_encoded),
                 "a": s.a.tolist(), "source_id": s.source_id} for s in samples]

    with open(path, "w") as fh:
        json.dump({"schema_version": SNAPSHOT_SCHEMA_VERSION,
                   "train": pack(split.train), "test": pack(split.test)}, fh)


def load_split(path) -> DatasetSplit:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SNAPSHOT_SCHEMA_VERSION:
        raise ValueError("unsupported dataset snapshot version")

    def unpack(rows):
        return [Sample(_unb64_f64(r["x"]), _unb64_f64(r["x_encoded"]),
                       np.array(r["a"], float), r["source_id"]) for r in rows]

    return DatasetSplit(unpack(doc["train"]), unpack(doc["test"]))


def split_to_arrays(samples: list[Sample]):
    """(X_raw, X_encoded, A) matrices in sample order."""
    X = np.stack([s.x for s in samples])
    Xe = np.stack([s.x_encoded for s in samples])
    A = np.stack([s.a for s in samples])
    return X, Xe, A


def synthetic_digits(n: int, seed: int = 0, size: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """MNIST-style stand-in: class 0 draws an elliptical ring, class 1 a
    near-vertical stroke, both with jittered geometry and pixel noise.

    Used where the real handwritten-digit files are not available; the
    ingestion pipeline (IDX -> downsample -> encode) is identical.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    images = np.zeros((n, size, size))
    labels = np.zeros(n, dtype=int)
    for i in range(n):
        lab = i % 2
        labels[i] = lab
        cx = size / 2 + rng.uniform(-2.5, 2.5)
        cy = size / 2 + rng.uniform(-2.5, 2.5)
        if lab == 0:
            rx = rng.uniform(5.5, 9.0)
            ry = rng.uniform(6.5, 10.0)
            thick = rng.uniform(1.2, 2.2)
            r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
            img = np.exp(-((r - 1.0) * max(rx, ry) / thick) ** 2)
        else:
            slant = rng.uniform(-0.25, 0.25)
            half = rng.uniform(7.0, 10.5)
            thick = rng.uniform(1.0, 2.0)
            dx = xx - (cx + slant * (yy - cy))
            img = np.exp(-((dx / thick) ** 2)) * (np.abs(yy - cy) < half)
        img = img + rng.normal(0.0, 0.02, (size, size))
        images[i] = np.clip(img, 0.0, 1.0)
    return images, labels
