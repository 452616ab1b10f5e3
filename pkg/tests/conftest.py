import numpy as np
import pytest

from stdo import synth_video
from stdo.pipeline import prepare_video


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_bundle():
    """A quick 96x64 T=4 video prepared at x2 with 16x16 LR patches:
    LR 48x32, grid 3x2, 24 patches."""
    vid = synth_video(96, 64, 4, motif="texture", seed=7)
    return prepare_video(vid, 2, 16, 16)
