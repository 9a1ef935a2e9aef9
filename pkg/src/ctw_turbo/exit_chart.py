"""
EXIT analysis: mutual information between BPSK symbols and LLRs.

A priori LLRs at a target information ``I_A`` are synthesised as
``L = (s^2 / 2) x + s n`` with ``n ~ N(0, 1)`` and ``s = J^{-1}(I_A)``;
the information carried by LLRs is estimated as
``1 - mean(log2(1 + exp(-x L)))``.
"""

from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from ._validation import LLR_CLIP
from .channel import ChannelModel, map_bpsk, transmit
from .mmse import ExactMMSETurboEqualizer, TimeAveragedMMSETurboEqualizer

_SIGMA_MAX = 60.0


@lru_cache(maxsize=4096)
def j_function(sigma):
    """Mutual information of a consistent Gaussian LLR with standard deviation ``sigma``."""
    sigma = float(sigma)
    if sigma <= 0:
        return 0.0
    mean = 0.5 * sigma**2

    def integrand(l):
        return np.exp(-((l - mean) ** 2) / (2 * sigma**2)) / np.sqrt(2 * np.pi * sigma**2) * np.logaddexp(0.0, -l) / np.log(2.0)

    lo, hi = mean - 12 * sigma, mean + 12 * sigma
    value, _ = quad(integrand, lo, hi, limit=200, points=[0.0] if lo < 0 < hi else None)
    return float(np.clip(1.0 - value, 0.0, 1.0))


def j_inverse(info):
    """``sigma`` with ``J(sigma) = info``; ``inf`` for ``info >= 1``."""
    info = float(info)
    if not 0.0 <= info <= 1.0:
        raise ValueError("mutual information must lie in [0, 1]")
    if info == 0.0:
        return 0.0
    if info >= j_function(_SIGMA_MAX):
        return np.inf
    return brentq(lambda s: j_function(s) - info, 1e-9, _SIGMA_MAX, xtol=1e-10)


def mutual_information(llr, symbols):
    """``1 - mean(log2(1 + exp(-x L)))`` clipped to ``[0, 1]``."""
    llr = np.asarray(llr, dtype=float)
    x = np.real(np.asarray(symbols))
    if llr.shape != x.shape:
        raise ValueError("llr and symbols must have the same shape")
    if llr.size == 0:
        return 0.0
    return float(np.clip(1.0 - np.mean(np.logaddexp(0.0, -x * llr)) / np.log(2.0), 0.0, 1.0))


def synthetic_priors(symbols, info, rng):
    """Consistent Gaussian a priori LLRs carrying ``info`` bits per symbol.

    ``info = 1`` gives saturated LLRs ``+-50``.
    """
    x = np.real(np.asarray(symbols))
    sigma = j_inverse(info)
    if np.isinf(sigma):
        return LLR_CLIP * x
    return 0.5 * sigma**2 * x + sigma * rng.standard_normal(x.size)


def exit_curves(taps, snr_db, ia_grid, n_symbols=100_000, seed=0, n1=9, n2=5, equalizers=None):
    """Equalizer transfer curves ``I_E(I_A)`` with common random numbers.

    Every equalizer sees the same symbols, noise and priors at each ``I_A``.

    Parameters
    ----------
    equalizers : dict, optional
        ``{name: BaseTurboEqualizer}``; defaults to the exact and the
        time-averaged MMSE equalizers with the true noise variance.

    Returns
    -------
    dict
        ``{name: ndarray of I_E}`` aligned with ``ia_grid``.
    """
    channel = ChannelModel.from_snr(taps, snr_db)
    if equalizers is None:
        equalizers = {
            "mmse-exact": ExactMMSETurboEqualizer(taps=taps, sigma_n2=channel.sigma_n2, n1=n1, n2=n2),
            "mmse-timeavg": TimeAveragedMMSETurboEqualizer(taps=taps, sigma_n2=channel.sigma_n2, n1=n1, n2=n2),
        }
    rng = np.random.default_rng(seed)
    x = map_bpsk(rng.integers(0, 2, int(n_symbols), dtype=np.int8))
    y = transmit(x, channel, rng)
    out = {name: np.empty(len(ia_grid)) for name in equalizers}
    for i, ia in enumerate(ia_grid):
        prior = synthetic_priors(x, ia, np.random.default_rng([seed, i]))
        for name, eq in equalizers.items():
            eq.reset().partial_fit(y, x[:0], prior)
            out[name][i] = mutual_information(eq.extrinsic_llr_, x)
    return out


def exit_trajectory(receiver, data_symbols):
    """``(I_A, I_E)`` of the equalizer at every iteration of a fitted receiver."""
    points = []
    for h in receiver.history_:
        prior = h["prior_llr"]
        ia = 0.0 if prior is None else mutual_information(prior, data_symbols)
        points.append((ia, mutual_information(h["equalizer_llr"], data_symbols)))
    return np.array(points)
