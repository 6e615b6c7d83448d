import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

SAMPLE_RATE = 16000


def tone_pcm(ms: int, amplitude: int = 20000, hz: float = 440.0) -> bytes:
    n = ms * SAMPLE_RATE // 1000
    t = np.arange(n, dtype=np.float64)
    return (amplitude * np.sin(2.0 * np.pi * hz * t / SAMPLE_RATE)).astype("<i2").tobytes()


def silence_pcm(ms: int) -> bytes:
    return b"\x00\x00" * (ms * SAMPLE_RATE // 1000)


@pytest.fixture
def small_config():
    from olive.backends.config import load_config

    return load_config(
        overrides={
            "profile.t": 2,
            "profile.n": 4,
            "profile.p": 2,
            "profile.c": 16,
        }
    )
