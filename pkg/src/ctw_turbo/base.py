"""Common estimator plumbing for the turbo equalizers."""

from functools import cached_property

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_llr, check_vector
from .channel import received_windows, symbol_windows, variance_windows


class TurboBlock:
    """Receiver-side view of one block for a single turbo iteration.

    Training symbols are known (``xbar = x``, ``q = 0``); data symbols carry
    the decoder priors ``xbar = tanh(L/2)``, ``q = 1 - xbar^2``. Samples outside
    the block are known zeros.

    Parameters
    ----------
    y : array_like
        Received samples for the whole block (training followed by data).
    x_train : array_like
        Known training symbols.
    prior_llr : array_like or None
        A priori LLRs of the data symbols; ``None`` means no prior.
    n1, n2, m : int
        Equalizer span and channel length.
    """

    def __init__(self, y, x_train, prior_llr, n1, n2, m):
        self.y = check_vector(y, "y")
        self.x_train = check_vector(x_train, "x_train")
        self.n_train = self.x_train.size
        self.n_total = self.y.size
        if self.n_train >= self.n_total:
            raise ValueError("training length must be shorter than the block")
        self.n_data = self.n_total - self.n_train
        if prior_llr is None:
            prior_llr = np.zeros(self.n_data)
        self.prior_llr = check_llr(prior_llr, "prior_llr", length=self.n_data)
        self.n1, self.n2, self.m = int(n1), int(n2), int(m)
        self.center = self.m + self.n2 - 1

        xbar_data = np.tanh(self.prior_llr / 2.0)
        self.xbar = np.concatenate([self.x_train, xbar_data.astype(complex)])
        self.q = np.concatenate([np.zeros(self.n_train), 1.0 - xbar_data**2])

    @cached_property
    def y_windows(self):
        return received_windows(self.y, self.n1, self.n2)

    @cached_property
    def xbar_windows(self):
        """Prior-mean windows with the symbol of interest zeroed."""
        w = np.array(symbol_windows(self.xbar, self.m, self.n1, self.n2))
        w[:, self.center] = 0.0
        return w

    @cached_property
    def q_windows(self):
        return variance_windows(self.q, self.m, self.n1, self.n2)

    @cached_property
    def train_windows(self):
        """Symbol windows used as the training regressor.

        Known symbols where available; past the end of the training period the
        window can only contain prior means.
        """
        return symbol_windows(self.xbar, self.m, self.n1, self.n2)


class BaseTurboEqualizer(BaseEstimator):
    """Base class: one call of :meth:`partial_fit` is one turbo iteration.

    State carried between iterations (filters, codebooks) lives in attributes
    with a trailing underscore; :meth:`reset` discards it.
    """

    def partial_fit(self, y, x_train, prior_llr=None):
        """Equalize one block given the decoder priors of the data symbols.

        Sets ``estimates_`` (soft symbol estimates over the data period) and
        ``extrinsic_llr_`` (LLRs passed to the decoder).
        """
        block = TurboBlock(y, x_train, prior_llr, self.n1, self.n2, self.channel_length)
        self.iteration_ = getattr(self, "iteration_", 0) + 1
        xhat, llr = self._equalize(block)
        self.estimates_ = xhat
        self.extrinsic_llr_ = llr
        return self

    def reset(self):
        for name in [k for k in vars(self) if k.endswith("_") and not k.startswith("__")]:
            delattr(self, name)
        return self

    def _equalize(self, block):  # pragma: no cover - abstract
        raise NotImplementedError
