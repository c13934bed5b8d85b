"""Frame stream IO: timestamp + channel vector records, three transports.

Binary format (little-endian): magic ``MFRM``, u16 version, u16 reserved,
u32 channel count, f64 sampling rate, then one record per frame of
``f64 timestamp`` followed by ``channels * f64`` samples.  The CSV form has a
``t,ch0,...,chN`` header.  The socket transport streams the same record
framing over a connected TCP socket, preceded by the same header.
"""

from __future__ import annotations

import csv
import socket
import struct

import numpy as np

_MAGIC = b"MFRM"
_VERSION = 1
_HEADER = struct.Struct("<4sHHId")


def write_frames(path, frames: np.ndarray, rate: float, t0: float = 0.0) -> None:
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n, channels = frames.shape
    times = t0 + np.arange(n) / rate
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, 0, channels, rate))
        payload = np.hstack([times[:, None], frames]).astype("<f8")
        fh.write(payload.tobytes())


def read_frames(path):
    """Returns (times, frames, rate) from the binary format."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, _, channels, rate = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError("not a frame stream: bad magic")
        if version != _VERSION:
            raise ValueError(f"unsupported frame stream version {version}")
        body = np.frombuffer(fh.read(), dtype="<f8")
    if body.size % (channels + 1):
        raise ValueError("truncated frame stream")
    body = body.reshape(-1, channels + 1)
    return body[:, 0].copy(), body[:, 1:].copy(), float(rate)


def write_frames_csv(path, frames: np.ndarray, rate: float, t0: float = 0.0) -> None:
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    times = t0 + np.arange(frames.shape[0]) / rate
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"ch{i}" for i in range(frames.shape[1])])
        for t, row in zip(times, frames):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_frames_csv(path):
    """Returns (times, frames); the rate is implied by the timestamps."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError("not a frame CSV: missing 't' header column")
        rows = [[float(v) for v in row] for row in reader if row]
    body = np.asarray(rows, dtype=np.float64)
    return body[:, 0], body[:, 1:]


# ---------------------------------------------------------------------------
# sources for the dual-rate runtime
# ---------------------------------------------------------------------------

class ArrayFrameSource:
    """Serves a fixed frame array in chunks; take() returns None when drained."""

    def __init__(self, frames: np.ndarray):
        self._frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
        self._cursor = 0

    def take(self, n: int):
        if self._cursor + n > self._frames.shape[0]:
            return None
        chunk = self._frames[self._cursor : self._cursor + n]
        self._cursor += n
        return chunk


class CallableFrameSource:
    """Wraps a generator function ``fn(n) -> (n, channels) array``."""

    def __init__(self, fn):
        self._fn = fn

    def take(self, n: int):
        return self._fn(n)


class SocketFrameSource:
    """Reads header-then-records framing from a connected TCP socket."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        header = self._read_exact(_HEADER.size)
        magic, version, _, channels, rate = _HEADER.unpack(header)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("peer did not send a valid frame stream header")
        self.channels = int(channels)
        self.rate = float(rate)
        self._record = struct.Struct(f"<{self.channels + 1}d")

    def _read_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            chunk = self._sock.recv(n - len(buf))
            if not chunk:
                return buf
            buf += chunk
        return buf

    def take(self, n: int):
        raw = self._read_exact(n * self._record.size)
        if len(raw) < n * self._record.size:
            return None
        rows = np.frombuffer(raw, dtype="<f8").reshape(n, self.channels + 1)
        return rows[:, 1:].copy()

    def close(self) -> None:
        self._sock.close()


def serve_frames(conn: socket.socket, frames: np.ndarray, rate: float, t0: float = 0.0) -> None:
    """Send header plus all frames over an accepted socket connection."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n, channels = frames.shape
    conn.sendall(_HEADER.pack(_MAGIC, _VERSION, 0, channels, rate))
    times = t0 + np.arange(n) / rate
    payload = np.hstack([times[:, None], frames]).astype("<f8")
    conn.sendall(payload.tobytes())
