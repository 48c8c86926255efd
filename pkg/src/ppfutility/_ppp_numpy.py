"""Pure-NumPy fallback for the batched PPP kernel.

``ppp_grid`` evaluates the posterior predictive probability for every
current-data state of one interim look in a single contraction:

    ppp[x, y] = sum_{j,k} pmf_trt[x, j] * pmf_ctl[y, k] * success[x+j, y+k]

where ``success`` is the end-of-trial indicator table (1.0 where the
completed data would be declared positive) and the pmf matrices hold the
beta-binomial predictive rows for each possible current response count.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def ppp_grid(success: np.ndarray, pmf_trt: np.ndarray, pmf_ctl: np.ndarray) -> np.ndarray:
    rem_t = pmf_trt.shape[1] - 1
    rem_c = pmf_ctl.shape[1] - 1
    if success.shape != (pmf_trt.shape[0] + rem_t, pmf_ctl.shape[0] + rem_c):
        raise ValueError("success table shape inconsistent with pmf matrices")
    windows = sliding_window_view(success, (rem_t + 1, rem_c + 1))
    return np.einsum("xj,yk,xyjk->xy", pmf_trt, pmf_ctl, windows, optimize=True)
