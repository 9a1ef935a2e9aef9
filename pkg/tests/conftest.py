import numpy as np
import pytest

from ctw_turbo.channel import PROAKIS_C, ChannelModel, build_convolution_matrices, make_frame


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def proakis_cm():
    return build_convolution_matrices(PROAKIS_C, 9, 5)


@pytest.fixture(scope="session")
def small_frame():
    """Short Proakis frame at 10 dB: 256 training and 1024 data symbols."""
    channel = ChannelModel.from_snr(PROAKIS_C, 10.0)
    return make_frame(channel, 1024, 256, np.random.default_rng([7, 0, 0]))


@pytest.fixture(scope="session")
def priors(small_frame):
    """Equalizer LLRs of the first LMS iteration on ``small_frame``."""
    from ctw_turbo.ctw import LMSTurboEqualizer

    return LMSTurboEqualizer().partial_fit(small_frame.y, small_frame.training).extrinsic_llr_
