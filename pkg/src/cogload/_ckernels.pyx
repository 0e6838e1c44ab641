# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled biquad cascade kernel (direct form II transposed)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def cascade_filter(const double[:, ::1] sections, const double[:, ::1] x):
    """Filter every row of ``x`` through the cascade, zero initial state.

    ``sections`` rows are ``(b0, b1, b2, a1, a2)``; returns a new array.
    """
    cdef Py_ssize_t n_sec = sections.shape[0]
    cdef Py_ssize_t n_rows = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    out_arr = np.array(x, dtype=np.float64, copy=True)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, s, i
    cdef double b0, b1, b2, a1, a2, z1, z2, xi, yi
    with nogil:
        for r in range(n_rows):
            for s in range(n_sec):
                b0 = sections[s, 0]
                b1 = sections[s, 1]
                b2 = sections[s, 2]
                a1 = sections[s, 3]
                a2 = sections[s, 4]
                z1 = 0.0
                z2 = 0.0
                for i in range(n):
                    xi = out[r, i]
                    yi = b0 * xi + z1
                    z1 = b1 * xi - a1 * yi + z2
                    z2 = b2 * xi - a2 * yi
                    out[r, i] = yi
    return out_arr
