"""Turbo equalization with adaptive piecewise-linear and context-tree-weighted equalizers."""

__version__ = "0.1.0"

from .channel import ChannelModel, Frame, build_convolution_matrices, encode_conv, make_frame
from .config import ExperimentConfig, load_config
from .ctw import CTWTurboEqualizer, LMSTurboEqualizer, PiecewiseLinearTurboEqualizer
from .decoder import bcjr_decode
from .mmse import ExactMMSETurboEqualizer, TimeAveragedMMSETurboEqualizer
from .partitioning import TreeVectorQuantizer
from .turbo import TurboReceiver, run_frame

__all__ = [
    "CTWTurboEqualizer",
    "ChannelModel",
    "ExactMMSETurboEqualizer",
    "ExperimentConfig",
    "Frame",
    "LMSTurboEqualizer",
    "PiecewiseLinearTurboEqualizer",
    "TimeAveragedMMSETurboEqualizer",
    "TreeVectorQuantizer",
    "TurboReceiver",
    "bcjr_decode",
    "build_convolution_matrices",
    "encode_conv",
    "load_config",
    "make_frame",
    "run_frame",
]
