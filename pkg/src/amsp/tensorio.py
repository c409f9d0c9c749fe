"""Tensor serialization.

Binary container: magic ``AMSPT1``, four little-endian uint32 dims (b, c, h,
w), then b*c*h*w little-endian float64 values in row-major NCHW order. A JSON
text form exists for small fixtures. File writes are atomic
(temp-then-rename) so a crashed command never leaves a torn file.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import ContractViolation
from .tensor import Tensor

MAGIC = b"AMSPT1"
_HEADER = struct.Struct("<4I")


def pack_tensor(t) -> bytes:
    data = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    if data.ndim != 4:
        raise ContractViolation(f"rank: container stores rank-4 tensors, got rank {data.ndim}")
    payload = np.ascontiguousarray(data, dtype="<f8").tobytes()
    return MAGIC + _HEADER.pack(*data.shape) + payload


def unpack_tensor(blob: bytes) -> Tensor:
    if blob[: len(MAGIC)] != MAGIC:
        raise ContractViolation("magic: not an AMSPT1 tensor container")
    dims = _HEADER.unpack_from(blob, len(MAGIC))
    n = int(np.prod(dims, dtype=np.int64))
    start = len(MAGIC) + _HEADER.size
    expected = start + 8 * n
    if len(blob) != expected:
        raise ContractViolation(f"size: expected {expected} bytes for dims {dims}, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f8", count=n, offset=start).reshape(dims)
    return Tensor(data.astype(np.float64))


def atomic_write_bytes(path, blob: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".amsp-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_tensor(path, t) -> None:
    atomic_write_bytes(path, pack_tensor(t))


def read_tensor(path) -> Tensor:
    with open(path, "rb") as fh:
        return unpack_tensor(fh.read())


def tensor_to_json(t) -> dict:
    data = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    return {"shape": list(data.shape), "data": data.reshape(-1).tolist()}


def tensor_from_json(obj) -> Tensor:
    try:
        shape = obj["shape"]
        data = obj["data"]
    except (TypeError, KeyError) as exc:
        raise ContractViolation("json: tensor form needs 'shape' and 'data'") from exc
    arr = np.asarray(data, dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise ContractViolation(
            f"data: {arr.size} values do not fill shape {tuple(shape)}"
        )
    return Tensor(arr.reshape(shape))


def write_tensor_json(path, t) -> None:
    atomic_write_text(path, json.dumps(tensor_to_json(t)))


def read_tensor_json(path) -> Tensor:
    with open(path, "r", encoding="utf-8") as fh:
        return tensor_from_json(json.load(fh))
