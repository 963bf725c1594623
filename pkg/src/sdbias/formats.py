"""Raw headerless tensor files shared by the dataset, trace and checkpoint formats."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """A file on disk does not match its declared layout."""


def write_raw(path, array, dtype: str) -> None:
    data = np.ascontiguousarray(array, dtype=np.dtype(dtype))
    Path(path).write_bytes(data.tobytes(order="C"))


def read_raw(path, shape: tuple[int, ...], dtype: str) -> np.ndarray:
    """Read a row-major tensor of ``shape``; size mismatches raise FormatError."""
    path = Path(path)
    dt = np.dtype(dtype)
    expected = int(np.prod(shape)) * dt.itemsize
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"{path}: missing tensor file") from None
    if len(raw) < expected:
        raise FormatError(f"{path}: truncated at byte offset {len(raw)}, expected {expected} bytes")
    if len(raw) > expected:
        raise FormatError(f"{path}: trailing data at byte offset {expected}, file has {len(raw)} bytes")
    return np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
