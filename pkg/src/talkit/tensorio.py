"""Binary tensor files: a fixed header plus row-major float32 payload.

Layout (all little-endian): 4-byte magic ``TNS1``, uint32 ndim, ndim uint64
dims, then the float32 payload in C order. Used for generated videos and for
checkpoint parameters, so writes must be byte-deterministic.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import ParseError

_MAGIC = b"TNS1"


def write_tensor(array: np.ndarray, path: str | os.PathLike) -> None:
    data = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", data.ndim))
        fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
        fh.write(data.tobytes())


def read_tensor(path: str | os.PathLike, mmap: bool = False) -> np.ndarray:
    """Read a tensor file; ``mmap=True`` maps the payload instead of copying."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ParseError(f"bad magic {magic!r}", path=str(path), offset=0)
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        header_size = fh.tell()
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    if mmap:
        payload = np.memmap(path, dtype="<f4", mode="r", offset=header_size, shape=shape)
        return payload
    with open(path, "rb") as fh:
        fh.seek(header_size)
        payload = np.fromfile(fh, dtype="<f4", count=count)
    if payload.size != count:
        raise ParseError(
            f"truncated payload: expected {count} elements, got {payload.size}",
            path=str(path),
            offset=header_size,
        )
    return payload.reshape(shape)
