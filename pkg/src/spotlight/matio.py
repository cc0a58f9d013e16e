"""Matrix, vector and image file formats.

Dense binary layout (little-endian)::

    bytes 0-7    magic b"SPOTMAT1"
    bytes 8-11   uint32 rows
    bytes 12-15  uint32 cols
    bytes 16-    rows*cols float64, row-major

Vectors use the same layout with ``cols == 1`` or a single-column CSV.
Sparse matrices are stored as Matrix Market coordinate files.
"""
import hashlib
import struct
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

MAGIC = b"SPOTMAT1"
_HEADER = struct.Struct("<8sII")


def write_dense(path, M):
    M = np.asarray(M, dtype="<f8")
    if M.ndim == 1:
        M = M[:, None]
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.ascontiguousarray(M).tobytes())


def read_dense(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).astype(np.float64)


def write_vector(path, v):
    """Write a vector; the format follows the suffix (.csv or binary)."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if str(path).endswith(".csv"):
        np.savetxt(path, v, fmt="%.17g")
    else:
        write_dense(path, v)


def read_vector(path):
    if str(path).endswith(".csv"):
        return np.atleast_1d(np.loadtxt(path, dtype=np.float64, ndmin=1))
    M = read_dense(path)
    if M.shape[1] != 1:
        raise ValueError(f"{path}: not a column vector ({M.shape})")
    return M[:, 0]


def write_mtx(path, A):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))


def read_mtx(path):
    return sp.csr_matrix(scipy.io.mmread(str(path)))


def write_pgm(path, image):
    """Write a 16-bit binary PGM (P5).

    Values are clipped at zero and scaled so the maximum maps to 65535.
    Returns the scale factor (image value represented by 65535).
    """
    img = np.asarray(image, dtype=np.float64)
    scale = float(img.max()) if img.size and img.max() > 0 else 1.0
    q = np.rint(np.clip(img, 0.0, None) / scale * 65535).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())
    return scale


def read_pgm(path):
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    # exactly one whitespace byte separates the header from the raster
    pixels = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos + 1)
    return pixels.reshape(h, w)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
