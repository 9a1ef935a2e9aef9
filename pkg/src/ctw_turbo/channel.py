"""
Transmitter chain and ISI/AWGN channel.

Bits are encoded with the rate-1/2, constraint-length-3 feedforward
convolutional code with generators (7, 5) octal, terminated with two zero
tail bits, randomly interleaved, mapped to BPSK (0 -> +1, 1 -> -1) and sent
through a finite impulse response channel with circularly symmetric complex
white Gaussian noise.

Window conventions (0-based sample ``t``)
-----------------------------------------
received window  ``y(t) = [y(t-N2), ..., y(t+N1)]``            length N
symbol window    ``x(t) = [x(t-M-N2+1), ..., x(t+N1)]``         length N+M-1
variance window  symbol window of ``q`` with the entry of ``x(t)`` removed

Samples outside the block are zero. With these conventions
``y(t) = H x(t) + n(t)`` holds exactly wherever the window lies inside the
block.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import check_bits, check_positive, check_vector

PROAKIS_C = (0.227, 0.46, 0.688, 0.46, 0.227)
TAIL_BITS = 2

# (7, 5) octal generators acting on [u(k), u(k-1), u(k-2)]
_GENERATORS = np.array([[1, 1, 1], [1, 0, 1]], dtype=np.int8)


def encode_conv(info):
    """Encode info bits with the terminated (7, 5) convolutional code.

    Parameters
    ----------
    info : array_like of {0, 1}

    Returns
    -------
    coded : ndarray of int8, length ``2 * (len(info) + 2)``
        Output pairs ``(c1(k), c2(k))`` interleaved as ``c1(0), c2(0), c1(1), ...``.
    """
    u = np.concatenate([check_bits(info, "info"), np.zeros(TAIL_BITS, np.int8)])
    padded = np.concatenate([np.zeros(2, np.int8), u])
    # taps[k] = [u(k), u(k-1), u(k-2)]
    taps = sliding_window_view(padded, 3)[:, ::-1]
    out = (taps @ _GENERATORS.T) % 2
    return out.reshape(-1).astype(np.int8)


def interleaver_permutation(length, seed):
    """Uniform random permutation (numpy's Fisher-Yates shuffle) drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    return rng.permutation(int(length))


def _resolve_permutation(length, seed=None, permutation=None):
    if permutation is None:
        if seed is None:
            raise ValueError("either seed or permutation is required")
        permutation = interleaver_permutation(length, seed)
    permutation = np.asarray(permutation)
    if permutation.shape != (length,):
        raise ValueError(
            f"permutation length {permutation.shape[0] if permutation.ndim else 0} "
            f"does not match input length {length}"
        )
    return permutation


def interleave(values, seed=None, permutation=None):
    """Return ``values[perm]``; ``perm`` is drawn from ``seed`` unless given."""
    values = np.asarray(values)
    perm = _resolve_permutation(values.shape[0], seed, permutation)
    return values[perm]


def deinterleave(values, seed=None, permutation=None):
    """Inverse of :func:`interleave` for the same seed or permutation."""
    values = np.asarray(values)
    perm = _resolve_permutation(values.shape[0], seed, permutation)
    out = np.empty_like(values)
    out[perm] = values
    return out


def map_bpsk(bits):
    """BPSK mapping ``x = (-1) ** c`` as complex128."""
    c = check_bits(bits)
    return (1.0 - 2.0 * c).astype(complex)


def noise_variance_from_snr(snr_db, taps):
    """Noise variance for ``SNR = E|x|^2 ||h||^2 / sigma_n^2`` with unit-power symbols."""
    h = np.asarray(taps, dtype=complex)
    return float(np.sum(np.abs(h) ** 2) / 10.0 ** (snr_db / 10.0))


@dataclass
class ChannelModel:
    """FIR channel ``h(0), ..., h(M-1)`` with complex AWGN of variance ``sigma_n2``."""

    taps: np.ndarray
    sigma_n2: float
    seed: int | None = None

    def __post_init__(self):
        self.taps = check_vector(self.taps, "taps")
        if self.taps.size < 1:
            raise ValueError("channel needs at least one tap")
        if self.sigma_n2 < 0:
            raise ValueError("sigma_n2 must be non-negative")

    @classmethod
    def from_snr(cls, taps, snr_db, seed=None):
        return cls(np.asarray(taps, complex), noise_variance_from_snr(snr_db, taps), seed)

    @property
    def length(self):
        return self.taps.size

    def matrices(self, n1, n2):
        return build_convolution_matrices(self.taps, n1, n2)


def transmit(x, channel, rng=None):
    """Pass symbols through the channel.

    ``y(t) = sum_k h(k) x(t-k) + n(t)`` with ``x(t) = 0`` for ``t < 0``; the output
    has the same length as ``x``. Noise is circularly symmetric with variance
    ``sigma_n2 / 2`` per real dimension. ``rng`` defaults to ``channel.seed``.
    """
    x = check_vector(x, "x")
    if rng is None:
        rng = np.random.default_rng(channel.seed)
    y = np.convolve(x, channel.taps)[: x.size]
    if channel.sigma_n2 > 0:
        scale = np.sqrt(channel.sigma_n2 / 2.0)
        y = y + scale * (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size))
    return y


@dataclass
class ConvolutionMatrices:
    """Convolution matrix ``H`` (N x (N+M-1)), its centre column ``v`` and ``H_bar``."""

    H: np.ndarray
    v: np.ndarray
    H_bar: np.ndarray
    n1: int
    n2: int
    m: int = field(repr=False)

    @property
    def n(self):
        return self.n1 + self.n2 + 1

    @property
    def center(self):
        """0-based column of ``H`` multiplying the symbol of interest."""
        return self.m + self.n2 - 1


def build_convolution_matrices(taps, n1, n2):
    """Build ``H``, ``v`` and ``H_bar`` for an equalizer spanning ``[t-N2, t+N1]``.

    Row ``i`` of ``H`` holds ``[h(M-1), ..., h(0)]`` starting at column ``i``;
    ``v`` is column ``M+N2`` (1-based) and ``H_bar`` is ``H`` without it.
    """
    h = check_vector(taps, "taps")
    n1, n2 = int(n1), int(n2)
    if n1 < 0 or n2 < 0:
        raise ValueError("n1 and n2 must be non-negative")
    if h.size < 1:
        raise ValueError("channel needs at least one tap")
    m = h.size
    n = n1 + n2 + 1
    H = np.zeros((n, n + m - 1), dtype=complex)
    for i in range(n):
        H[i, i : i + m] = h[::-1]
    c = m + n2 - 1
    return ConvolutionMatrices(H, H[:, c].copy(), np.delete(H, c, axis=1), n1, n2, m)


def _windows(seq, before, after):
    seq = np.asarray(seq)
    padded = np.concatenate(
        [np.zeros(before, seq.dtype), seq, np.zeros(after, seq.dtype)]
    )
    return sliding_window_view(padded, before + after + 1)


def received_windows(y, n1, n2):
    """Rows ``[y(t-N2), ..., y(t+N1)]`` for every ``t`` (read-only view)."""
    return _windows(y, n2, n1)


def symbol_windows(x, m, n1, n2):
    """Rows ``[x(t-M-N2+1), ..., x(t+N1)]`` for every ``t`` (read-only view)."""
    return _windows(x, m + n2 - 1, n1)


def variance_windows(q, m, n1, n2):
    """Symbol windows of ``q`` with the centre entry removed, shape (len(q), N+M-2)."""
    w = symbol_windows(q, m, n1, n2)
    return np.delete(w, m + n2 - 1, axis=1)


@dataclass
class Frame:
    """One transmission block: ``n_train`` known symbols followed by coded data.

    ``symbols`` holds the full transmitted sequence, ``y`` the received one;
    ``data_symbols`` are the interleaved coded bits mapped to BPSK.
    """

    info_bits: np.ndarray
    coded_bits: np.ndarray
    permutation: np.ndarray
    training: np.ndarray
    symbols: np.ndarray
    y: np.ndarray
    channel: ChannelModel

    @property
    def n_train(self):
        return self.training.size

    @property
    def data_symbols(self):
        return self.symbols[self.n_train :]


def info_length_for(n_data):
    """Info bits that fill ``n_data`` coded symbols exactly (tail included)."""
    if n_data % 2 or n_data < 2 * (TAIL_BITS + 1):
        raise ValueError(f"n_data must be even and >= 6, got {n_data}")
    return n_data // 2 - TAIL_BITS


def make_frame(channel, n_data, n_train, rng):
    """Draw info bits, training symbols, interleaver and noise from ``rng``.

    Parameters
    ----------
    channel : ChannelModel
    n_data : int
        Number of coded symbols (``2 * (info + 2)``).
    n_train : int
        Number of known BPSK training symbols sent before the data.
    rng : numpy.random.Generator
    """
    info = rng.integers(0, 2, info_length_for(n_data), dtype=np.int8)
    coded = encode_conv(info)
    perm = rng.permutation(coded.size)
    data = map_bpsk(interleave(coded, permutation=perm))
    training = map_bpsk(rng.integers(0, 2, int(n_train), dtype=np.int8))
    symbols = np.concatenate([training, data])
    y = transmit(symbols, channel, rng)
    return Frame(info, coded, perm, training, symbols, y, channel)


def check_channel_taps(taps):
    h = check_vector(taps, "taps")
    check_positive(np.sum(np.abs(h) ** 2), "channel energy")
    return h
