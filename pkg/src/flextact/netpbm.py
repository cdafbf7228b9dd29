"""Binary Netpbm image I/O.

Covers exactly the formats the sensor stack exchanges on disk: P6
(24-bit RGB, maxval 255) for frames and overlays, P4 bit-packed masks,
and 16-bit big-endian P5 graymaps for exported depth and gradient
images.  Round trips are bit-exact.  Readers tolerate ``#`` comments in
headers and accept several images concatenated on one stream, which is
what the CLI's ``--stream`` mode consumes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = [
    "read_ppm",
    "write_ppm",
    "ppm_bytes",
    "read_ppm_stream",
    "read_pbm",
    "write_pbm",
    "read_pgm16",
    "write_pgm16",
    "pgm16_bytes",
]


def _read_token(f) -> bytes:
    """Read one whitespace-delimited header token, skipping # comments."""
    tok = b""
    while True:
        ch = f.read(1)
        if ch == b"":
            if tok:
                return tok
            raise EOFError("truncated netpbm header")
        if ch == b"#" and not tok:
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise EOFError(f"expected {n} raster bytes, got {len(data)}")
    return data


def _open_source(source):
    if isinstance(source, (str, Path)):
        return open(source, "rb"), True
    return source, False


def _open_dest(dest):
    if isinstance(dest, (str, Path)):
        return open(dest, "wb"), True
    return dest, False


def read_ppm_stream(f):
    """Read one P6 image from a binary stream.

    Returns an (H, W, 3) uint8 array, or None if the stream is cleanly
    at EOF (so concatenated images can be iterated until exhaustion).
    """
    first = f.read(1)
    if first == b"":
        return None
    while first.isspace():
        first = f.read(1)
        if first == b"":
            return None
    rest = _read_token(f)
    magic = first + rest
    if magic != b"P6":
        raise ValueError(f"not a binary PPM (magic {magic!r})")
    width = int(_read_token(f))
    height = int(_read_token(f))
    maxval = int(_read_token(f))
    if maxval != 255:
        raise ValueError(f"unsupported PPM maxval {maxval}")
    raster = _read_exact(f, width * height * 3)
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def read_ppm(source) -> np.ndarray:
    """Read a single P6 file (path or binary stream) into (H, W, 3) uint8."""
    f, owned = _open_source(source)
    try:
        arr = read_ppm_stream(f)
        if arr is None:
            raise EOFError("empty PPM input")
        return arr
    finally:
        if owned:
            f.close()


def ppm_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("PPM raster must be (H, W, 3) uint8")
    h, w = arr.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + arr.tobytes()


def write_ppm(dest, arr: np.ndarray) -> None:
    f, owned = _open_dest(dest)
    try:
        f.write(ppm_bytes(arr))
    finally:
        if owned:
            f.close()


def read_pbm(source) -> np.ndarray:
    """Read a P4 bitmap into a bool array; a set bit maps to True."""
    f, owned = _open_source(source)
    try:
        magic = _read_token(f)
        if magic != b"P4":
            raise ValueError(f"not a binary PBM (magic {magic!r})")
        width = int(_read_token(f))
        height = int(_read_token(f))
        row_bytes = (width + 7) // 8
        raster = _read_exact(f, row_bytes * height)
        packed = np.frombuffer(raster, dtype=np.uint8).reshape(height, row_bytes)
        bits = np.unpackbits(packed, axis=1)[:, :width]
        return bits.astype(bool)
    finally:
        if owned:
            f.close()


def write_pbm(dest, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    if mask.dtype != bool or mask.ndim != 2:
        raise ValueError("PBM raster must be a 2-D bool array")
    h, w = mask.shape
    packed = np.packbits(mask.astype(np.uint8), axis=1)
    f, owned = _open_dest(dest)
    try:
        f.write(b"P4\n%d %d\n" % (w, h))
        f.write(packed.tobytes())
    finally:
        if owned:
            f.close()


def pgm16_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype != np.uint16 or arr.ndim != 2:
        raise ValueError("16-bit PGM raster must be a 2-D uint16 array")
    h, w = arr.shape
    return b"P5\n%d %d\n65535\n" % (w, h) + arr.astype(">u2").tobytes()


def write_pgm16(dest, arr: np.ndarray) -> None:
    f, owned = _open_dest(dest)
    try:
        f.write(pgm16_bytes(arr))
    finally:
        if owned:
            f.close()


def read_pgm16(source) -> np.ndarray:
    f, owned = _open_source(source)
    try:
        magic = _read_token(f)
        if magic != b"P5":
            raise ValueError(f"not a binary PGM (magic {magic!r})")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        if maxval != 65535:
            raise ValueError(f"unsupported PGM maxval {maxval}")
        raster = _read_exact(f, width * height * 2)
        return np.frombuffer(raster, dtype=">u2").reshape(height, width).astype(np.uint16)
    finally:
        if owned:
            f.close()
