from __future__ import annotations

import os

import hypothesis
import numpy as np
import pytest

from hybrid_adpcm.config import CodecConfig, TrainConfig
from hybrid_adpcm.models import SignalBuffer
from hybrid_adpcm.synth import make_signal

hypothesis.settings.register_profile("dev", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def fast_config(**overrides) -> CodecConfig:
    """Codec config with a cheap MLP schedule so closed-loop tests stay quick."""
    cfg = CodecConfig(train=TrainConfig(epochs=2, n_starts=2))
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def short_signal() -> SignalBuffer:
    return make_signal("voiced", 650, np.random.default_rng(7))


@pytest.fixture
def saturated_signal() -> SignalBuffer:
    return make_signal("tanh_ar", 650, np.random.default_rng(11))
