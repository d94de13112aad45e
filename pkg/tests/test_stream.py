import json
import socket
import threading
import time

import numpy as np
import pytest

from kmpgait.stream import StreamServer, check_frames, encode_frame
from kmpgait.synthesis import joint_limits
from kmpgait.kinematics import LegGeometry
from oracles import phase_template_cycle

GAIT = phase_template_cycle((0.0, 0.5, 0.5, 0.0)).samples


def read_frames(address, duration):
    frames = []
    buf = b""
    with socket.create_connection(address, timeout=1.0) as c:
        end = time.monotonic() + duration
        c.settimeout(0.05)
        while time.monotonic() < end:
            try:
                chunk = c.recv(65536)
            except socket.timeout:
                continue
            if not chunk:
                break
            buf += chunk
            *lines, buf = buf.split(b"\n")
            frames += [json.loads(x) for x in lines]
    return frames


def run_server(server, **kw):
    th = threading.Thread(target=server.serve, kwargs=kw, daemon=True)
    th.start()
    return th


def test_encode_frame_compact():
    line = encode_frame(0.02, np.arange(8) / 10)
    assert line.endswith(b"\n") and b" " not in line
    assert json.loads(line) == {"t": 0.02, "q": [i / 10 for i in range(8)]}


def test_check_frames_rejects_bad_gaits():
    low, high = joint_limits(LegGeometry())
    bad = GAIT.copy()
    bad[7, 3] = high[3] + 0.1
    with pytest.raises(ValueError, match="joint 3 at sample 7"):
        check_frames(bad)
    with pytest.raises(ValueError):
        check_frames(np.zeros((5, 7)))
    with pytest.raises(ValueError):
        check_frames(np.full((2, 8), np.nan))


def test_fifty_hz_for_two_seconds():
    with StreamServer(GAIT, 50.0, port=0) as srv:
        th = run_server(srv)
        frames = read_frames(srv.address, 2.0)
        srv.stop()
        th.join(2.0)
    assert 95 <= len(frames) <= 105
    low, high = joint_limits(LegGeometry())
    for k, f in enumerate(frames):
        assert len(f["q"]) == 8
        q = np.array(f["q"])
        assert np.all(q >= low) and np.all(q <= high)
        assert f["t"] == pytest.approx(k / 50.0)
        np.testing.assert_array_equal(q, GAIT[k % len(GAIT)])


def test_max_frames_and_disconnect():
    with StreamServer(GAIT, 200.0, port=0) as srv:
        th = run_server(srv, max_frames=10)
        frames = read_frames(srv.address, 0.5)
        th.join(2.0)
        assert len(frames) == 10 and srv.frames_sent == 10
    with StreamServer(GAIT, 100.0, port=0) as srv:
        th = run_server(srv)
        with socket.create_connection(srv.address) as c:
            c.recv(100)
        th.join(3.0)
        assert not th.is_alive()


def test_stop_before_client():
    srv = StreamServer(GAIT, 50.0, port=0)
    th = run_server(srv)
    srv.stop()
    th.join(1.0)
    assert not th.is_alive()
    srv.close()


def test_busy_port_fails_at_construction():
    with StreamServer(GAIT, port=0) as srv:
        with pytest.raises(OSError):
            StreamServer(GAIT, port=srv.address[1])


def test_invalid_rate():
    with pytest.raises(ValueError):
        StreamServer(GAIT, 0.0)
