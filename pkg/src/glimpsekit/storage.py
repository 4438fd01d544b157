"""Binary artifact formats and atomic file I/O.

Two container layouts are used by the whole package:

- GLB1 image bank: magic ``GLB1``, then little-endian u32 fields
  (count N, H, W, g, s, grid_nx, grid_ny), then N*H*W little-endian
  float32 pixels, row-major, image-major.  Pixels are converted to
  float64 on load.
- header+blocks: a little-endian u32 byte length, a UTF-8 JSON header,
  then concatenated little-endian float64 blocks whose shapes are
  derivable from the header.  Used for model checkpoints and PCA banks.

All writes go through a temp file and ``os.replace`` so that artifacts
are either complete or absent.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .core import StorageError

GLB1_MAGIC = b"GLB1"
_GLB1_HEADER = struct.Struct("<7I")


def atomic_write_bytes(path, data: bytes):
    """Write ``data`` to ``path`` atomically (temp file + rename)."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    """Deterministic JSON encoding (sorted keys, no whitespace churn)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_bank(path, images: np.ndarray, g: int, s: int):
    """Write an (N, H, W) float array as a GLB1 bank file."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError(f"expected (N, H, W) images, got shape {images.shape}")
    n, h, w = images.shape
    nx = (w - g) // s + 1
    ny = (h - g) // s + 1
    header = GLB1_MAGIC + _GLB1_HEADER.pack(n, h, w, g, s, nx, ny)
    body = images.astype("<f4").tobytes()
    atomic_write_bytes(path, header + body)


def read_bank(path):
    """Read a GLB1 bank.  Returns (images float64 (N,H,W), g, s, nx, ny)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != GLB1_MAGIC:
            raise StorageError(f"{path}: not a GLB1 bank (magic {magic!r})")
        n, h, w, g, s, nx, ny = _GLB1_HEADER.unpack(fh.read(_GLB1_HEADER.size))
        raw = fh.read(n * h * w * 4)
    if len(raw) != n * h * w * 4:
        raise StorageError(f"{path}: truncated bank ({len(raw)} pixel bytes)")
    images = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, h, w)
    return images, g, s, nx, ny


class BankImageStore:
    """Random access to single images of a GLB1 bank without loading it all.

    ``load(i)`` reads one image from disk; candidate indices at or above
    the bank size refer to horizontally flipped images (used when a PCA
    bank was built with flip augmentation).
    """

    HEADER_BYTES = 4 + _GLB1_HEADER.size

    def __init__(self, path):
        self.path = os.fspath(path)
        with open(self.path, "rb") as fh:
            magic = fh.read(4)
            if magic != GLB1_MAGIC:
                raise StorageError(f"{path}: not a GLB1 bank")
            self.n, self.h, self.w, self.g, self.s, self.nx, self.ny = _GLB1_HEADER.unpack(
                fh.read(_GLB1_HEADER.size)
            )
        self._image_bytes = self.h * self.w * 4

    def load(self, index: int) -> np.ndarray:
        flip = index >= self.n
        base = index - self.n if flip else index
        if not (0 <= base < self.n):
            raise StorageError(f"image index {index} outside bank of {self.n}")
        with open(self.path, "rb") as fh:
            fh.seek(self.HEADER_BYTES + base * self._image_bytes)
            raw = fh.read(self._image_bytes)
        img = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(self.h, self.w)
        return img[:, ::-1].copy() if flip else img


class ArrayImageStore:
    """In-memory image store with the same ``load`` contract as the file one."""

    def __init__(self, images: np.ndarray):
        self.images = np.asarray(images, dtype=np.float64)
        self.n = self.images.shape[0]

    def load(self, index: int) -> np.ndarray:
        flip = index >= self.n
        base = index - self.n if flip else index
        if not (0 <= base < self.n):
            raise StorageError(f"image index {index} outside bank of {self.n}")
        img = self.images[base]
        return img[:, ::-1].copy() if flip else img.copy()


def write_blocks(path, header: dict, blocks):
    """Write a header+blocks artifact (JSON header, float64 LE blocks)."""
    hj = canonical_json(header).encode("utf-8")
    parts = [struct.pack("<I", len(hj)), hj]
    for b in blocks:
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_blocks(path, shapes_from_header):
    """Read a header+blocks artifact.

    ``shapes_from_header`` maps the decoded header to the list of block
    shapes, in file order.  Returns (header, [arrays]).
    """
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        blocks = []
        for shape in shapes_from_header(header):
            count = int(np.prod(shape)) if len(shape) else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise StorageError(f"{path}: truncated block of shape {shape}")
            blocks.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))
        extra = fh.read(1)
    if extra:
        raise StorageError(f"{path}: trailing bytes after declared blocks")
    return header, blocks
