import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxyvos.grids import FeatureMap, LabelMask

_SESSION_START = time.monotonic()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.monotonic() - _SESSION_START
    verdict = "PASS" if elapsed < 300 else "FAIL"
    print(f"\nTOTAL SUITE WALL TIME: {elapsed:.1f}s (< 300s required: {verdict})")

settings.register_profile(
    "suite",
    max_examples=30,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def finite_floats(lo=-100.0, hi=100.0):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, width=32)


@st.composite
def feature_maps(draw, max_side=6, max_channels=4, lo=-100.0, hi=100.0):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    c = draw(st.integers(1, max_channels))
    data = draw(arrays(np.float32, (h, w, c), elements=finite_floats(lo, hi)))
    return FeatureMap(data)


@st.composite
def label_masks(draw, height, width, max_objects=3):
    n = draw(st.integers(0, max_objects))
    labels = draw(arrays(np.int32, (height, width), elements=st.integers(0, n)))
    return LabelMask(labels, n)


def rand_feature_map(rng, h, w, c, scale=1.0):
    return FeatureMap((rng.random((h, w, c)) * 2 - 1).astype(np.float32) * scale)


def rand_label_mask(rng, h, w, num_objects):
    return LabelMask(rng.integers(0, num_objects + 1, size=(h, w)).astype(np.int32), num_objects)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))
