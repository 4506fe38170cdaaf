"""Binary containers for matrices and models, the STL-10 reader and base-grid export.

Matrix file::

    b"EPLSMAT1" | rows u32 LE | cols u32 LE | dtype u8 (0: f32, 1: f64) | payload

Model file::

    b"EPLSMDL1" | N_d u32 LE | N_h u32 LE | activation tag u8 | W (N_d x N_h) f64 LE | b f64 LE

Payloads are row-major little-endian.  Both headers are 17 bytes.
"""

from __future__ import annotations

import math
import os
import struct

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    FormatError,
    ShapeError,
    TruncatedFileError,
    UnknownDtypeError,
)
from .model import ACTIVATIONS, ModelParams
from .pipeline import ImageSet

MATRIX_MAGIC = b"EPLSMAT1"
MODEL_MAGIC = b"EPLSMDL1"
_HEADER = struct.Struct("<8sIIB")
HEADER_SIZE = _HEADER.size  # 17
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}

STL10_SIDE = 96
STL10_IMAGE_BYTES = STL10_SIDE * STL10_SIDE * 3  # 27648


def _read_header(f, magic: bytes, path):
    raw = f.read(HEADER_SIZE)
    if len(raw) >= 8 and raw[:8] != magic:
        raise BadMagicError(f"{path}: expected magic {magic!r}, found {raw[:8]!r}")
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: header is {len(raw)} bytes, need {HEADER_SIZE}")
    return _HEADER.unpack(raw)[1:]


def _read_payload(f, dtype, count: int, path):
    nbytes = count * dtype.itemsize
    raw = f.read(nbytes)
    if len(raw) < nbytes:
        raise TruncatedFileError(f"{path}: payload has {len(raw)} of {nbytes} bytes")
    return np.frombuffer(raw, dtype=dtype, count=count)


def _u32(value, what):
    if not 0 <= value < 2 ** 32:
        raise ShapeError(f"{what} {value} does not fit in 32 bits")
    return value


def write_matrix(path, m, dtype="f8") -> None:
    """Write a 2-D array; ``dtype`` is ``"f8"`` (default) or ``"f4"``."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got shape {m.shape}")
    code = {"f4": 0, "f8": 1}.get(np.dtype(dtype).str[1:])
    if code is None:
        raise UnknownDtypeError(f"cannot store dtype {dtype!r}")
    rows, cols = m.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MATRIX_MAGIC, _u32(rows, "rows"), _u32(cols, "cols"), code))
        f.write(np.ascontiguousarray(m, dtype=_DTYPES[code]).tobytes())


def read_matrix(path) -> np.ndarray:
    """Read a matrix file into a ``float64`` array."""
    with open(path, "rb") as f:
        rows, cols, code = _read_header(f, MATRIX_MAGIC, path)
        if code not in _DTYPES:
            raise UnknownDtypeError(f"{path}: unknown dtype code {code}")
        data = _read_payload(f, _DTYPES[code], rows * cols, path)
    return data.astype(np.float64).reshape(rows, cols)


def write_model(path, params: ModelParams) -> None:
    n_in, n_out = params.W.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MODEL_MAGIC, _u32(n_in, "N_d"), _u32(n_out, "N_h"), params.activation.tag))
        f.write(np.ascontiguousarray(params.W, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(params.b, dtype="<f8").tobytes())


def read_model(path) -> ModelParams:
    with open(path, "rb") as f:
        n_in, n_out, tag = _read_header(f, MODEL_MAGIC, path)
        if tag not in ACTIVATIONS:
            raise FormatError(f"{path}: unknown activation tag {tag}")
        W = _read_payload(f, np.dtype("<f8"), n_in * n_out, path).reshape(n_in, n_out)
        b = _read_payload(f, np.dtype("<f8"), n_out, path)
    return ModelParams(W.astype(np.float64), b.astype(np.float64), ACTIVATIONS[tag])


def read_labels(path) -> np.ndarray:
    """Class indices from a matrix file (one column) or a raw STL-10 label file.

    Raw STL-10 labels (``uint8``, 1 to 10) are shifted to 0 to 9; matrix
    files are taken as they are.
    """
    with open(path, "rb") as f:
        head = f.read(8)
    if head == MATRIX_MAGIC:
        m = read_matrix(path)
        if m.ndim != 2 or min(m.shape) > 1:
            raise ShapeError(f"{path}: label matrix must have one row or one column")
        labels = m.reshape(-1)
        if not np.all(labels == np.round(labels)):
            raise FormatError(f"{path}: labels are not integers")
        return labels.astype(np.int64)
    return _stl10_labels(np.fromfile(path, dtype=np.uint8), path)


def _stl10_labels(raw, path):
    if raw.size and (raw.min() < 1 or raw.max() > 10):
        raise FormatError(f"{path}: STL-10 labels must lie in 1..10")
    return raw.astype(np.int64) - 1


def read_stl10(path_images, path_labels=None, limit: int | None = None) -> ImageSet:
    """Images (and optional labels) from the STL-10 binary files.

    The file stores each image as three 96x96 planes (R, G, B), each in
    column-major order.  Only the first ``limit`` images are read.
    """
    size = os.path.getsize(path_images)
    if size % STL10_IMAGE_BYTES:
        raise FormatError(
            f"{path_images}: size {size} is not a multiple of {STL10_IMAGE_BYTES}"
        )
    n = n_total = size // STL10_IMAGE_BYTES
    if limit is not None:
        if limit < 0:
            raise ConfigError("limit must be nonnegative")
        n = min(n, int(limit))
    raw = np.fromfile(path_images, dtype=np.uint8, count=n * STL10_IMAGE_BYTES)
    # (n, channel, col, row) -> (n, row, col, channel)
    images = raw.reshape(n, 3, STL10_SIDE, STL10_SIDE).transpose(0, 3, 2, 1)
    labels = None
    if path_labels is not None:
        n_labels = os.path.getsize(path_labels)
        if n_labels != n_total:
            raise FormatError(f"{path_labels}: {n_labels} labels for {n_total} images")
        labels = _stl10_labels(np.fromfile(path_labels, dtype=np.uint8, count=n), path_labels)
    return ImageSet(np.ascontiguousarray(images), labels)


def bases_grid(params: ModelParams, rf: int, channels: int) -> np.ndarray:
    """Tile every basis into a near-square grid with 1-pixel black separators.

    Each tile is rescaled to 0..255 on its own; a constant basis becomes
    mid-gray (128).  Returns a ``uint8`` array ``(height, width, channels)``.
    """
    n_in, n_out = params.W.shape
    if channels not in (1, 3) or rf < 1 or n_in != rf * rf * channels:
        raise ConfigError(
            f"N_d={n_in} is not rf^2*channels for rf={rf}, channels={channels}"
        )
    cols = math.ceil(math.sqrt(n_out))
    rows = math.ceil(n_out / cols) if n_out else 0
    out = np.zeros((rows * (rf + 1) - 1 if rows else 0, cols * (rf + 1) - 1 if cols else 0, channels),
                   dtype=np.uint8)
    for j in range(n_out):
        w = params.W[:, j]
        lo, hi = w.min(), w.max()
        if hi > lo:
            tile = np.rint((w - lo) * (255.0 / (hi - lo)))
        else:
            tile = np.full_like(w, 128.0)
        tile = tile.reshape(channels, rf, rf).transpose(1, 2, 0).astype(np.uint8)
        r, c = divmod(j, cols)
        out[r * (rf + 1):r * (rf + 1) + rf, c * (rf + 1):c * (rf + 1) + rf] = tile
    return out


def write_pnm(path, image) -> None:
    """Binary PGM (one channel) or PPM (three channels)."""
    image = np.asarray(image, dtype=np.uint8)
    magic = b"P5" if image.shape[2] == 1 else b"P6"
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (image.shape[1], image.shape[0]))
        f.write(np.ascontiguousarray(image).tobytes())


def export_bases_image(params: ModelParams, rf: int, channels: int, path) -> None:
    write_pnm(path, bases_grid(params, rf, channels))
