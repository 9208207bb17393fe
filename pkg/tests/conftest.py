import numpy as np
import pytest

from floorvitals.trace import VibrationTrace


def tone(freq_hz, duration_s=10.0, fs=500.0, amplitude=1.0, sensor_id="s"):
    t = np.arange(int(round(duration_s * fs))) / fs
    return VibrationTrace(sensor_id, fs, amplitude * np.sin(2 * np.pi * freq_hz * t))


def rel_l2(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
