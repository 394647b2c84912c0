"""NumPy implementation of the block-masked scoring kernel.

This is the fallback backend used when the compiled extension is missing;
it is also the semantic reference the extension is tested against.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

_NAIVE_BAYES = 1


def score_blocks(
    yes: np.ndarray,
    no: np.ndarray,
    q: np.ndarray,
    logq: np.ndarray,
    log1mq: np.ndarray,
    logpi: np.ndarray,
    block_cols: np.ndarray,
    block_ptr: np.ndarray,
    algorithm: int,
    threads: int = 1,
    ahat_out: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-block imputation losses for one probbase.

    For every block: recompute each row's posterior with the block's
    columns masked, impute every in-block question as posterior . q[:, k],
    and accumulate cross-entropy against the recorded answers.

    Returns (scored_sums, na_sums, scored_counts) per block, where
    scored_sums holds losses of observed cells and na_sums the losses of
    missing cells scored as "no" (used by the ns denominator mode).
    ``threads`` is accepted for interface parity; BLAS decides here.
    """
    b = block_ptr.size - 1
    full = yes @ logq.T
    if algorithm == _NAIVE_BAYES:
        full += no @ log1mq.T
    full += logpi

    scored_sums = np.zeros(b)
    na_sums = np.zeros(b)
    scored_counts = np.zeros(b, dtype=np.int64)
    for l in range(b):
        cols = block_cols[block_ptr[l] : block_ptr[l + 1]]
        sub = yes[:, cols] @ logq[:, cols].T
        if algorithm == _NAIVE_BAYES:
            sub += no[:, cols] @ log1mq[:, cols].T
        logits = full - sub
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        logits /= logits.sum(axis=1, keepdims=True)
        ahat = logits @ q[:, cols]

        yb = yes[:, cols]
        ob = yb + no[:, cols]
        log_a = np.log(ahat)
        log_1ma = np.log1p(-ahat)
        scored_sums[l] = -(yb * log_a + (ob - yb) * log_1ma).sum()
        na_sums[l] = -((1.0 - ob) * log_1ma).sum()
        scored_counts[l] = int(round(ob.sum()))
        if ahat_out is not None:
            ahat_out[:, cols] = ahat
    return scored_sums, na_sums, scored_counts
