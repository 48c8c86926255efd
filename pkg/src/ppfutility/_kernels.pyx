# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled PPP kernel: the same contraction as ``_ppp_numpy.ppp_grid``
written as explicit loops.  Used when the extension is built; results agree
with the fallback to floating-point roundoff."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def ppp_grid(double[:, ::1] success, double[:, ::1] pmf_trt, double[:, ::1] pmf_ctl):
    cdef Py_ssize_t nt = pmf_trt.shape[0]
    cdef Py_ssize_t nc = pmf_ctl.shape[0]
    cdef Py_ssize_t rt = pmf_trt.shape[1]
    cdef Py_ssize_t rc = pmf_ctl.shape[1]
    if success.shape[0] != nt + rt - 1 or success.shape[1] != nc + rc - 1:
        raise ValueError("success table shape inconsistent with pmf matrices")
    out_arr = np.empty((nt, nc), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t x, y, j, k
    cdef double acc, row
    for x in range(nt):
        for y in range(nc):
            acc = 0.0
            for j in range(rt):
                row = 0.0
                for k in range(rc):
                    row += pmf_ctl[y, k] * success[x + j, y + k]
                acc += pmf_trt[x, j] * row
            out[x, y] = acc
    return out_arr
