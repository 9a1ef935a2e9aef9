"""Iterative equalizer/decoder exchange over one received block."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .channel import deinterleave, interleave
from .decoder import bcjr_decode


class TurboReceiver(BaseEstimator):
    """Turbo receiver: equalizer and (7, 5) BCJR decoder exchanging extrinsic LLRs.

    ``fit`` is transductive: it processes one block and stores the decisions
    of every iteration.

    Parameters
    ----------
    equalizer : BaseTurboEqualizer
        Template equalizer; a fresh clone is used for every block.
    n_iter : int
        Number of turbo iterations.
    permutation : array_like
        Interleaver permutation (``interleaved = coded[permutation]``).
    max_log : bool
        Use the max-log approximation in the decoder.
    callback : callable, optional
        ``callback(iteration, equalizer)`` after every equalizer pass, e.g. to
        snapshot per-iteration state.

    Attributes
    ----------
    equalizer_ : BaseTurboEqualizer
    history_ : list of dict
        Per iteration: ``prior_llr`` (None at the first), ``estimates``,
        ``equalizer_llr`` and ``posterior_info``.
    """

    def __init__(self, equalizer=None, n_iter=5, permutation=None, max_log=False, callback=None):
        self.equalizer = equalizer
        self.n_iter = n_iter
        self.permutation = permutation
        self.max_log = max_log
        self.callback = callback

    def fit(self, y, x_train):
        if self.equalizer is None or self.permutation is None:
            raise ValueError("equalizer and permutation are required")
        if int(self.n_iter) < 1:
            raise ValueError("n_iter must be at least 1")
        perm = np.asarray(self.permutation)
        eq = clone(self.equalizer)
        prior = None
        history = []
        for it in range(1, int(self.n_iter) + 1):
            eq.partial_fit(y, x_train, prior)
            if self.callback is not None:
                self.callback(it, eq)
            if eq.extrinsic_llr_.size != perm.size:
                raise ValueError("data length does not match the interleaver")
            ext, post = bcjr_decode(deinterleave(eq.extrinsic_llr_, permutation=perm), max_log=self.max_log)
            history.append(
                {
                    "prior_llr": prior,
                    "estimates": eq.estimates_,
                    "equalizer_llr": eq.extrinsic_llr_,
                    "posterior_info": post,
                }
            )
            prior = interleave(ext, permutation=perm)
        self.equalizer_ = eq
        self.history_ = history
        return self

    def decision_function(self, iteration=-1):
        """Posterior info-bit LLRs after ``iteration`` (default: the last)."""
        check_is_fitted(self, "history_")
        return self.history_[iteration]["posterior_info"]

    def predict(self, iteration=-1):
        """Decoded info bits (L > 0 decides 0)."""
        return (self.decision_function(iteration) < 0).astype(np.int8)


@dataclass
class FrameResult:
    """Per-iteration bit error rate and symbol MSE for one frame."""

    ber: np.ndarray
    mse: np.ndarray
    receiver: TurboReceiver


def run_frame(frame, equalizer, n_iter=5, callback=None):
    """Turbo-decode ``frame`` and score every iteration against the ground truth.

    BER counts info bits only (tail excluded); MSE is over the data symbols.
    """
    rx = TurboReceiver(equalizer, n_iter, frame.permutation, callback=callback).fit(frame.y, frame.training)
    truth = frame.data_symbols
    ber = np.array([np.mean(rx.predict(i) != frame.info_bits) for i in range(n_iter)])
    mse = np.array([np.mean(np.abs(h["estimates"] - truth) ** 2) for h in rx.history_])
    return FrameResult(ber, mse, rx)
