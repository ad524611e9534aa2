"""
.dpt depth files: a 16-byte little-endian header (magic "DPT1", height, width, reserved) followed
by height * width little-endian float32 values in row-major order, meters, 0 = invalid.
"""
import struct

from pathlib import Path
from typing import Union

import numpy as np

from nowcast.exceptions import DatasetIOError, DatasetParseError
from nowcast.geometry import DepthFrame


DPT_MAGIC = b"DPT1"

DPT_HEADER = struct.Struct("<4sIII")

DPT_VALUE = np.dtype("<f4")


def encode_dpt(frame: DepthFrame) -> bytes:
    height, width = frame.shape

    return DPT_HEADER.pack(DPT_MAGIC, height, width, 0) + frame.values.astype(DPT_VALUE).tobytes(order="C")


def decode_dpt(data: bytes, path: str = "<memory>", timestamp: float = 0.0) -> DepthFrame:
    """
    Parse the bytes of a .dpt file

    Keyword arguments:
    data -- the file content
    path -- path reported in parse errors (default: "<memory>")
    timestamp -- timestamp given to the frame (default: 0.0)
    """
    if len(data) < DPT_HEADER.size:
        raise DatasetParseError(f"truncated header, {len(data)} of {DPT_HEADER.size} bytes", path=path, offset=len(data))

    magic, height, width, reserved = DPT_HEADER.unpack_from(data)

    if magic != DPT_MAGIC:
        raise DatasetParseError(f"bad magic {magic!r}", path=path, offset=0)

    if reserved != 0:
        raise DatasetParseError(f"reserved field must be 0, got {reserved}", path=path, offset=12)

    expected = DPT_HEADER.size + height * width * DPT_VALUE.itemsize

    if height == 0 or width == 0:
        raise DatasetParseError(f"empty grid {height}x{width}", path=path, offset=4)

    if len(data) != expected:
        raise DatasetParseError(
            f"expected {expected} bytes for a {height}x{width} grid, found {len(data)}",
            path=path,
            offset=min(len(data), expected),
        )

    values = np.frombuffer(data, dtype=DPT_VALUE, offset=DPT_HEADER.size).reshape(height, width)

    bad = np.flatnonzero(~np.isfinite(values) | (values < 0))

    if bad.size:
        raise DatasetParseError(
            "depth values must be finite and non-negative",
            path=path,
            offset=DPT_HEADER.size + int(bad[0]) * DPT_VALUE.itemsize,
        )

    return DepthFrame(values=values.astype(np.float32), timestamp=timestamp)


def write_dpt(path: Union[str, Path], frame: DepthFrame) -> None:
    """
    Write a depth frame as a .dpt file

    Keyword arguments:
    path -- destination file
    frame -- the frame to write
    """
    try:
        Path(path).write_bytes(encode_dpt(frame))

    except OSError as os_err:
        raise DatasetIOError(f"unable to write depth frame: {os_err.strerror}", path=str(path)) from os_err


def read_dpt(path: Union[str, Path], timestamp: float = 0.0) -> DepthFrame:
    """
    Read a .dpt file

    Keyword arguments:
    path -- source file
    timestamp -- timestamp given to the frame (default: 0.0)
    """
    try:
        data = Path(path).read_bytes()

    except OSError as os_err:
        raise DatasetIOError(f"unable to read depth frame: {os_err.strerror}", path=str(path)) from os_err

    return decode_dpt(data, path=str(path), timestamp=timestamp)
