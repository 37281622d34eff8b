"""Binary containers for feature matrices, codebooks and cached mels.

Layout: a 24-byte header (4-byte magic, then version, dim, rows, hop, rate as
little-endian int32) followed by row-major float32 data.
"""

import os
import struct
import tempfile
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .errors import ContractViolation, DecodeError

CONTAINER_VERSION = 1
HEADER = struct.Struct("<4s5i")

FEATURE_MAGIC = b"SSLF"
CODEBOOK_MAGIC = b"KMCB"
MEL_MAGIC = b"MELS"


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> Path:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def pack_matrix(magic: bytes, matrix: np.ndarray, hop: int, rate: int) -> bytes:
    """Serialize a (rows x dim) matrix behind a container header."""
    if matrix.ndim != 2:
        raise ContractViolation(f"Expected a 2-D matrix, got shape {matrix.shape}")
    rows, dim = matrix.shape
    header = HEADER.pack(magic, CONTAINER_VERSION, dim, rows, int(hop), int(rate))
    body = np.ascontiguousarray(matrix, dtype="<f4").tobytes(order="C")
    return header + body


def unpack_matrix(payload: bytes, magic: bytes) -> Tuple[np.ndarray, int, int]:
    """Inverse of :func:`pack_matrix`.

    Returns:
        Tuple of (matrix, hop, rate)
    """
    if len(payload) < HEADER.size:
        raise DecodeError("Container is shorter than its header")
    found_magic, version, dim, rows, hop, rate = HEADER.unpack_from(payload, 0)
    if found_magic != magic:
        raise DecodeError(f"Bad container magic {found_magic!r}, expected {magic!r}")
    if version != CONTAINER_VERSION:
        raise DecodeError(f"Unsupported container version {version}")
    expected = HEADER.size + rows * dim * 4
    if len(payload) != expected:
        raise DecodeError(f"Container size {len(payload)} does not match header ({expected})")
    data = np.frombuffer(payload, dtype="<f4", offset=HEADER.size, count=rows * dim)
    return data.reshape(rows, dim).astype(np.float32), hop, rate


def write_matrix(path: Union[str, Path], magic: bytes, matrix: np.ndarray, hop: int, rate: int) -> Path:
    return atomic_write_bytes(path, pack_matrix(magic, matrix, hop, rate))


def read_matrix(path: Union[str, Path], magic: bytes) -> Tuple[np.ndarray, int, int]:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise DecodeError(f"Could not read container {path}: {e}") from e
    return unpack_matrix(payload, magic)
