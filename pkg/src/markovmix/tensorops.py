"""Dense multiway arrays and the handful of tensor operations everything else uses.

Tensors are plain numpy ``float64`` arrays in C order, i.e. the flat layout is
row-major over the modes in declared order.  That layout is frozen: the binary
serialization below and every oracle test in the suite assume it.
"""

from __future__ import annotations

import json
import struct

import numpy as np

_MAGIC = b"MTEN"
_VERSION = 1


def as_tensor(data) -> np.ndarray:
    """Coerce ``data`` to a C-contiguous float64 array of order >= 1."""
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def mode_n_unfold(tensor: np.ndarray, axis: int) -> np.ndarray:
    """Unfold ``tensor`` along ``axis`` into an ``I_axis x prod(rest)`` matrix.

    Rows collect the fibers along ``axis``; the remaining modes are flattened
    in declared order (row-major).  ``refold`` inverts this exactly.

    Parameters
    ----------
    tensor : ndarray
        Array of order >= 1.
    axis : int
        Zero-based mode index, ``0 <= axis < tensor.ndim``.
    """
    tensor = np.asarray(tensor)
    if not 0 <= axis < tensor.ndim:
        raise ValueError(f"axis {axis} out of range for order-{tensor.ndim} tensor")
    return np.moveaxis(tensor, axis, 0).reshape(tensor.shape[axis], -1)


def refold(matrix: np.ndarray, axis: int, shape) -> np.ndarray:
    """Inverse of :func:`mode_n_unfold` for the given original ``shape``."""
    shape = tuple(int(s) for s in shape)
    if not 0 <= axis < len(shape):
        raise ValueError(f"axis {axis} out of range for shape {shape}")
    moved = (shape[axis],) + shape[:axis] + shape[axis + 1 :]
    return np.moveaxis(np.asarray(matrix).reshape(moved), 0, axis)


def multilinear_apply(beta: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Full contraction of ``x`` against the trailing modes of ``beta``, plus bias.

    ``beta`` has shape ``(*out_shape, *x.shape)`` and the result is

    ``out[j...] = sum_i... beta[j..., i...] * x[i...] + bias[j...]``.
    """
    beta = np.asarray(beta)
    bias = np.asarray(bias)
    x = np.asarray(x)
    if beta.ndim < x.ndim or beta.shape[beta.ndim - x.ndim :] != x.shape:
        raise ValueError(
            f"beta trailing modes {beta.shape} do not match input shape {x.shape}"
        )
    if beta.shape[: beta.ndim - x.ndim] != bias.shape:
        raise ValueError(
            f"beta leading modes {beta.shape[: beta.ndim - x.ndim]} "
            f"do not match bias shape {bias.shape}"
        )
    return np.tensordot(beta, x, axes=x.ndim) + bias


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two same-shaped tensors, sqrt(sum((a-b)**2))."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


# ---------------------------------------------------------------------------
# serialization: little-endian header (order, shape) + flat float64 payload
# ---------------------------------------------------------------------------

def tensor_to_bytes(tensor: np.ndarray) -> bytes:
    arr = as_tensor(tensor)
    header = _MAGIC + struct.pack("<HH", _VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.astype("<f8", copy=False).tobytes()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != _MAGIC:
        raise ValueError("not a tensor blob: bad magic")
    version, order = struct.unpack_from("<HH", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported tensor format version {version}")
    shape = struct.unpack_from(f"<{order}Q", blob, 8)
    offset = 8 + 8 * order
    expected = int(np.prod(shape)) if order else 1
    data = np.frombuffer(blob, dtype="<f8", count=expected, offset=offset)
    if data.size != expected:
        raise ValueError("truncated tensor payload")
    return data.reshape(shape).astype(np.float64, copy=True)


def save_tensor(path, tensor: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(tensor))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def tensor_to_json(tensor: np.ndarray) -> str:
    """Human-readable debug form; lossy only through decimal repr of float64."""
    arr = as_tensor(tensor)
    return json.dumps({"shape": list(arr.shape), "data": arr.ravel().tolist()})


def tensor_from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    return np.asarray(doc["data"], dtype=np.float64).reshape(doc["shape"])
