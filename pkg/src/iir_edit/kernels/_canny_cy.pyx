# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Canny inner loops: non-maximum suppression and hysteresis.

Output-identical to kernels.canny_py (enforced by the parity test).
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, fmod

cnp.import_array()

DEF PI = 3.141592653589793


def nonmax_suppress(cnp.ndarray[cnp.float64_t, ndim=2] mag,
                    cnp.ndarray[cnp.float64_t, ndim=2] gx,
                    cnp.ndarray[cnp.float64_t, ndim=2] gy):
    cdef Py_ssize_t h = mag.shape[0]
    cdef Py_ssize_t w = mag.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((h, w), dtype=np.float64)
    if h < 3 or w < 3:
        return out
    cdef Py_ssize_t i, j
    cdef double d, m, n1, n2
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            m = mag[i, j]
            d = fmod(atan2(gy[i, j], gx[i, j]) * 180.0 / PI + 180.0, 180.0)
            if d < 22.5 or d >= 157.5:
                n1 = mag[i, j - 1]
                n2 = mag[i, j + 1]
            elif d < 67.5:
                n1 = mag[i - 1, j + 1]
                n2 = mag[i + 1, j - 1]
            elif d < 112.5:
                n1 = mag[i - 1, j]
                n2 = mag[i + 1, j]
            else:
                n1 = mag[i - 1, j - 1]
                n2 = mag[i + 1, j + 1]
            if m > n1 and m >= n2:
                out[i, j] = m
    return out


def hysteresis(cnp.ndarray[cnp.float64_t, ndim=2] mag, double low, double high):
    cdef Py_ssize_t h = mag.shape[0]
    cdef Py_ssize_t w = mag.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] stack = np.empty(h * w, dtype=np.intp)
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t i, j, ni, nj, idx
    for i in range(h):
        for j in range(w):
            if mag[i, j] >= high:
                out[i, j] = 1
                stack[top] = i * w + j
                top += 1
    # Flood from strong seeds through weak (>= low) 8-neighbors.
    while top > 0:
        top -= 1
        idx = stack[top]
        i = idx // w
        j = idx % w
        for ni in range(i - 1, i + 2):
            if ni < 0 or ni >= h:
                continue
            for nj in range(j - 1, j + 2):
                if nj < 0 or nj >= w:
                    continue
                if out[ni, nj] == 0 and mag[ni, nj] >= low:
                    out[ni, nj] = 1
                    stack[top] = ni * w + nj
                    top += 1
    return out
