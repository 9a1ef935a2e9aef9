"""Input validation helpers shared by the estimators and pipeline functions."""

import numpy as np

LLR_CLIP = 50.0


def check_bits(bits, name="bits"):
    """Return ``bits`` as a 1-D int8 array, raising if any entry is not 0/1."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int8)


def check_vector(x, name="x", dtype=complex, length=None):
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_llr(llr, name="llr", length=None):
    """Return LLRs as float64 clipped to +-LLR_CLIP."""
    arr = check_vector(llr, name=name, dtype=float, length=length)
    return np.clip(arr, -LLR_CLIP, LLR_CLIP)


def check_positive(value, name):
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_nonnegative_int(value, name):
    if int(value) != value or value < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {value}")
    return int(value)


def check_unit_interval(q, name="q"):
    arr = np.asarray(q, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return arr
