"""Select the PPP kernel implementation at import time.

The compiled Cython extension is preferred when present; otherwise the
NumPy fallback is used.  Set ``PPFUTILITY_BACKEND=python`` or ``=c`` to
force a choice (forcing ``c`` without the built extension raises).
"""

from __future__ import annotations

import os

import numpy as np

from . import _ppp_numpy

_requested = os.environ.get("PPFUTILITY_BACKEND", "").strip().lower()
if _requested not in ("", "c", "python"):
    raise ImportError(f"PPFUTILITY_BACKEND must be 'c' or 'python', got {_requested!r}")

backend_name = "python"
_kernel_ppp_grid = _ppp_numpy.ppp_grid

if _requested != "python":
    try:
        from . import _kernels  # compiled extension

        backend_name = "c"
        _kernel_ppp_grid = _kernels.ppp_grid
    except ImportError:
        if _requested == "c":
            raise


def ppp_grid(success: np.ndarray, pmf_trt: np.ndarray, pmf_ctl: np.ndarray) -> np.ndarray:
    """Batched PPP over all current-data states of one look (see _ppp_numpy)."""
    return _kernel_ppp_grid(
        np.ascontiguousarray(success, dtype=np.float64),
        np.ascontiguousarray(pmf_trt, dtype=np.float64),
        np.ascontiguousarray(pmf_ctl, dtype=np.float64),
    )
