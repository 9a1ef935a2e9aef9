"""Log-MAP BCJR decoder for the terminated (7, 5) convolutional code.

LLR convention: ``L = log P(bit=0) / P(bit=1)``, so ``L > 0`` favours bit 0
(symbol +1).
"""

import numpy as np

from ._validation import check_llr
from .channel import TAIL_BITS

N_STATES = 4


def _build_trellis():
    # state = 2 * u(k-1) + u(k-2)
    next_state = np.zeros((N_STATES, 2), dtype=np.intp)
    outputs = np.zeros((N_STATES, 2, 2), dtype=np.int8)
    for s in range(N_STATES):
        s1, s2 = s >> 1, s & 1
        for u in (0, 1):
            next_state[s, u] = 2 * u + s1
            outputs[s, u] = (u ^ s1 ^ s2, u ^ s2)
    return next_state, outputs


NEXT_STATE, OUTPUTS = _build_trellis()
_SIGNS = 1.0 - 2.0 * OUTPUTS  # (state, input, output) -> +-1


def _combine(a, b, max_log):
    return np.maximum(a, b) if max_log else np.logaddexp(a, b)


def _reduce(values, axis, max_log):
    if max_log:
        return np.max(values, axis=axis)
    m = np.max(values, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, axis) + np.log(np.sum(np.exp(values - m), axis=axis))


def bcjr_decode(apriori_coded, max_log=False):
    """Soft-in soft-out decoding of one terminated codeword.

    Parameters
    ----------
    apriori_coded : array_like of float
        A priori LLRs of the coded bits in encoder output order; length must be
        even and include the two tail steps. Values are clipped to +-50.
    max_log : bool, default False
        Use the max-log approximation instead of exact log-MAP.

    Returns
    -------
    extrinsic_coded : ndarray
        ``posterior - apriori`` for every coded bit.
    posterior_info : ndarray
        A posteriori LLRs of the info bits (tail excluded).
    """
    apriori = np.asarray(apriori_coded, dtype=float)
    if apriori.ndim != 1 or apriori.size % 2:
        raise ValueError("coded LLR length must be a multiple of 2 (rate 1/2 code)")
    if apriori.size < 2 * (TAIL_BITS + 1):
        raise ValueError("codeword too short to contain the tail")
    apriori = check_llr(apriori, "apriori_coded")
    steps = apriori.size // 2
    pairs = apriori.reshape(steps, 2)

    # gamma[k, s, u] = sum_j (+-1) L_j / 2
    gamma = 0.5 * np.einsum("suj,kj->ksu", _SIGNS, pairs)
    gamma[steps - TAIL_BITS :, :, 1] = -np.inf

    alpha = np.full((steps + 1, N_STATES), -np.inf)
    beta = np.full((steps + 1, N_STATES), -np.inf)
    alpha[0, 0] = 0.0
    beta[steps, 0] = 0.0
    # each next state has two (state, input) predecessors
    prev_s = np.zeros((N_STATES, 2), dtype=np.intp)
    prev_u = np.zeros((N_STATES, 2), dtype=np.intp)
    fill = np.zeros(N_STATES, dtype=np.intp)
    for s in range(N_STATES):
        for u in (0, 1):
            ns = NEXT_STATE[s, u]
            prev_s[ns, fill[ns]], prev_u[ns, fill[ns]] = s, u
            fill[ns] += 1

    for k in range(steps):
        cand = alpha[k, prev_s] + gamma[k, prev_s, prev_u]
        alpha[k + 1] = _combine(cand[:, 0], cand[:, 1], max_log)
        alpha[k + 1] -= np.max(alpha[k + 1])
    for k in range(steps - 1, -1, -1):
        cand = gamma[k] + beta[k + 1, NEXT_STATE]
        beta[k] = _combine(cand[:, 0], cand[:, 1], max_log)
        beta[k] -= np.max(beta[k])

    # metric[k, s, u] over every branch
    metric = alpha[:steps, :, None] + gamma + beta[1:, NEXT_STATE]
    flat = metric.reshape(steps, -1)

    info_post = _reduce(metric[:, :, 0], 1, max_log) - _reduce(metric[:, :, 1], 1, max_log)

    posterior = np.empty((steps, 2))
    for j in range(2):
        zero = (OUTPUTS[:, :, j] == 0).reshape(-1)
        posterior[:, j] = _reduce(flat[:, zero], 1, max_log) - _reduce(flat[:, ~zero], 1, max_log)
    posterior = posterior.reshape(-1)
    return posterior - apriori, info_post[: steps - TAIL_BITS]
