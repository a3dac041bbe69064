# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled detector kernels; semantics mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def lowpass(x, double alpha):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = xa
    cdef double[::1] ov = out
    cdef double beta = 1.0 - alpha
    cdef double y
    cdef Py_ssize_t i
    if n == 0:
        return out
    y = xv[0]
    ov[0] = y
    for i in range(1, n):
        y = alpha * xv[i] + beta * y
        ov[i] = y
    return out


def initial_state():
    return (0.0, False, False, 0, 0.0, False, 0)


def run_detector(t, x, double alpha, double threshold, long long window_ns, state):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ta = np.ascontiguousarray(t, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef long long[::1] tv = ta
    cdef double[::1] xv = xa
    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t i
    cdef double y = state[0]
    cdef bint primed = state[1]
    cdef bint active = state[2]
    cdef long long onset_t = state[3]
    cdef double peak = state[4]
    cdef bint pending = state[5]
    cdef long long cand_t = state[6]
    cdef double beta = 1.0 - alpha
    cdef long long tn
    events = []
    if tv.shape[0] != n:
        raise ValueError("t and x must have equal length")
    for i in range(n):
        tn = tv[i]
        if primed:
            y = alpha * xv[i] + beta * y
        else:
            y = xv[i]
            primed = True
        if active:
            if pending:
                if y > threshold:
                    if tn - cand_t > window_ns:
                        events.append((onset_t, cand_t, peak))
                        active = False
                        pending = False
                    else:
                        pending = False
                        if y > peak:
                            peak = y
                        continue
                else:
                    if tn - cand_t >= window_ns:
                        events.append((onset_t, cand_t, peak))
                        active = False
                        pending = False
                    continue
            elif y > threshold:
                if y > peak:
                    peak = y
                continue
            else:
                pending = True
                cand_t = tn
                continue
        if y > threshold:
            active = True
            onset_t = tn
            peak = y
    return events, (y, bool(primed), bool(active), onset_t, peak, bool(pending), cand_t)
