"""MNIST (IDX) and CIFAR-10 (binary batches) loaders plus seeded batching.

Pixels are kept as ``uint8`` and scaled by 1/255 on access; there is no
mean-centering, so inputs to every layer lie in [0, 1].
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import XorShift64Star, derive_seed

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


class DataFormatError(ValueError):
    pass


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes, name: str = "<bytes>") -> np.ndarray:
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise DataFormatError(f"{name}: bad IDX magic {raw[:4].hex()}")
    code, ndim = raw[2], raw[3]
    if code not in _IDX_TYPES:
        raise DataFormatError(f"{name}: unknown IDX element type 0x{code:02x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{name}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_TYPES[code]
    want = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(raw) - header < want:
        raise DataFormatError(f"{name}: truncated IDX body, expected {want} bytes, found {len(raw) - header}")
    if len(raw) - header > want:
        raise DataFormatError(f"{name}: {len(raw) - header - want} trailing bytes after IDX body")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)


def serialize_idx(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    for code, dt in _IDX_TYPES.items():
        if arr.dtype.kind == dt.kind and arr.dtype.itemsize == dt.itemsize:
            break
    else:
        raise DataFormatError(f"dtype {arr.dtype} has no IDX encoding")
    head = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + arr.astype(dt, copy=False).tobytes()


def read_idx(path) -> np.ndarray:
    path = Path(path)
    return parse_idx(_read_bytes(path), str(path))


@dataclass(frozen=True)
class Dataset:
    pixels: np.ndarray  # uint8 [count, C, N, N]
    labels: np.ndarray  # int64 [count]
    split: str

    def __post_init__(self):
        if self.pixels.ndim != 4 or self.pixels.shape[2] != self.pixels.shape[3]:
            raise DataFormatError(f"images must be [count, C, N, N], got {self.pixels.shape}")
        if len(self.pixels) != len(self.labels):
            raise DataFormatError(f"{len(self.pixels)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= 10):
            raise DataFormatError("labels must lie in [0, 10)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def channels(self) -> int:
        return self.pixels.shape[1]

    @property
    def size(self) -> int:
        return self.pixels.shape[2]

    @property
    def images(self) -> np.ndarray:
        return self.take(slice(None))

    def take(self, index) -> np.ndarray:
        return self.pixels[index].astype(np.float64) / 255.0

    def subset(self, count: int | None) -> Dataset:
        if count is None or count >= len(self):
            return self
        return Dataset(self.pixels[:count], self.labels[:count], self.split)


def default_data_dir() -> Path:
    return Path(os.environ.get("DATA_DIR", "data"))


def _find(directory: Path, stems: list[str]) -> Path:
    for stem in stems:
        for suffix in ("", ".gz"):
            p = directory / f"{stem}{suffix}"
            if p.exists():
                return p
    raise FileNotFoundError(f"none of {stems} (optionally .gz) found in {directory}")


def _mnist_dir(root: Path) -> Path:
    for cand in (root, root / "mnist", root / "MNIST", root / "MNIST" / "raw"):
        if any((cand / f"train-images-idx3-ubyte{s}").exists() for s in ("", ".gz")):
            return cand
    return root


def load_mnist_split(directory, split: str) -> Dataset:
    d = _mnist_dir(Path(directory))
    prefix = "train" if split == "train" else "t10k"
    img_path = _find(d, [f"{prefix}-images-idx3-ubyte", f"{prefix}-images.idx3-ubyte"])
    lab_path = _find(d, [f"{prefix}-labels-idx1-ubyte", f"{prefix}-labels.idx1-ubyte"])
    img_raw, lab_raw = _read_bytes(img_path), _read_bytes(lab_path)
    if struct.unpack(">I", img_raw[:4])[0] != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{img_path}: expected image magic 0x{IDX_IMAGES_MAGIC:08x}")
    if struct.unpack(">I", lab_raw[:4])[0] != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{lab_path}: expected label magic 0x{IDX_LABELS_MAGIC:08x}")
    images = parse_idx(img_raw, str(img_path))
    labels = parse_idx(lab_raw, str(lab_path))
    if len(images) != len(labels):
        raise DataFormatError(f"{img_path} has {len(images)} images but {lab_path} has {len(labels)} labels")
    return Dataset(np.ascontiguousarray(images[:, None]), labels.astype(np.int64), split)


def load_mnist(directory=None) -> tuple[Dataset, Dataset]:
    directory = default_data_dir() if directory is None else directory
    return load_mnist_split(directory, "train"), load_mnist_split(directory, "test")


def parse_cifar_batch(raw: bytes, name: str = "<bytes>") -> tuple[np.ndarray, np.ndarray]:
    if len(raw) % CIFAR_RECORD:
        raise DataFormatError(f"{name}: size {len(raw)} is not a multiple of the {CIFAR_RECORD}-byte record")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    return rec[:, 1:].reshape(-1, 3, 32, 32), rec[:, 0].astype(np.int64)


def _cifar_dir(root: Path) -> Path:
    for cand in (root, root / "cifar-10-batches-bin", root / "cifar10", root / "cifar10" / "cifar-10-batches-bin"):
        if any((cand / f"data_batch_1.bin{s}").exists() for s in ("", ".gz")):
            return cand
    return root


def load_cifar10(directory=None) -> tuple[Dataset, Dataset]:
    d = _cifar_dir(Path(default_data_dir() if directory is None else directory))
    parts = [parse_cifar_batch(_read_bytes(p), str(p))
             for p in (_find(d, [f"data_batch_{k}.bin"]) for k in range(1, 6))]
    train = Dataset(np.concatenate([x for x, _ in parts]), np.concatenate([y for _, y in parts]), "train")
    test_path = _find(d, ["test_batch.bin"])
    x, y = parse_cifar_batch(_read_bytes(test_path), str(test_path))
    return train, Dataset(x, y, "test")


def load_dataset(name: str, directory=None) -> tuple[Dataset, Dataset]:
    if name == "mnist":
        return load_mnist(directory)
    if name == "cifar10":
        return load_cifar10(directory)
    raise ValueError(f"unknown dataset {name!r}")


def batch_indices(count: int, batch_size: int, seed: int = 0, shuffle: bool = True, epoch: int = 0):
    """Yield index arrays; the final short batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = XorShift64Star(derive_seed(seed, epoch)).permutation(count) if shuffle else np.arange(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def batches(ds: Dataset, batch_size: int, seed: int = 0, shuffle: bool = True, epoch: int = 0):
    """Yield ``(images, labels)`` with images as float64 in [0, 1]."""
    for idx in batch_indices(len(ds), batch_size, seed, shuffle, epoch):
        yield ds.take(idx), ds.labels[idx]
