"""Fixed-rate newline-delimited JSON playback of a gait cycle over TCP."""

from __future__ import annotations

import json
import logging
import socket
import threading
import time

import numpy as np

from .kinematics import LegGeometry
from .synthesis import joint_limits

log = logging.getLogger(__name__)


def check_frames(q, geometry: LegGeometry = LegGeometry(), tol: float = 1e-12) -> np.ndarray:
    """Validate a (n, 8) gait against the joint limits before playback."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if q.ndim != 2 or q.shape[1] != 8 or q.shape[0] < 1:
        raise ValueError(f"gait must have shape (n, 8), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("gait contains non-finite joint angles")
    low, high = joint_limits(geometry)
    bad = np.argwhere((q < low - tol) | (q > high + tol))
    if bad.size:
        i, j = bad[0]
        raise ValueError(f"joint {j} at sample {i} is {q[i, j]:.4f} rad, outside [{low[j]:.4f}, {high[j]:.4f}]")
    return q


def encode_frame(t: float, q) -> bytes:
    return (json.dumps({"t": float(t), "q": [float(v) for v in q]}, separators=(",", ":")) + "\n").encode()


class StreamServer:
    """Single-client server; one frame per tick, cycling the gait forever.

    Binding happens in the constructor so a busy port fails immediately.
    Ticks follow an absolute monotonic schedule, so sleep jitter does not
    accumulate into rate drift.
    """

    def __init__(self, frames, rate_hz: float = 50.0, host: str = "127.0.0.1", port: int = 0, geometry=LegGeometry()):
        if not rate_hz > 0:
            raise ValueError("rate_hz must be positive")
        self.frames = check_frames(frames, geometry)
        self.rate_hz = float(rate_hz)
        self.stop_event = threading.Event()
        self.frames_sent = 0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            self._sock.bind((host, port))
        except OSError:
            self._sock.close()
            raise
        self._sock.listen(1)
        self._sock.settimeout(0.1)

    @property
    def address(self):
        return self._sock.getsockname()

    def stop(self):
        self.stop_event.set()

    def close(self):
        self.stop_event.set()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _accept(self):
        while not self.stop_event.is_set():
            try:
                conn, peer = self._sock.accept()
            except socket.timeout:
                continue
            log.info("client connected from %s:%d", *peer)
            return conn
        return None

    def serve(self, max_frames: int | None = None) -> int:
        """Serve one client until it disconnects, ``stop()`` or ``max_frames``."""
        conn = self._accept()
        if conn is None:
            return 0
        period = 1.0 / self.rate_hz
        n = self.frames.shape[0]
        k = 0
        start = time.monotonic()
        with conn:
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            while not self.stop_event.is_set() and (max_frames is None or k < max_frames):
                delay = start + k * period - time.monotonic()
                if delay > 0 and self.stop_event.wait(delay):
                    break
                try:
                    conn.sendall(encode_frame(k * period, self.frames[k % n]))
                except (BrokenPipeError, ConnectionResetError, ConnectionAbortedError):
                    log.info("client disconnected after %d frames", k)
                    break
                k += 1
        self.frames_sent = k
        return k
