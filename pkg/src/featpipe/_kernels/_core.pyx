# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: k-means assignment and the upsampling gather-accumulate."""

import numpy as np

cimport numpy as cnp


def gather_accumulate_f32(double[:, ::1] acc, float[:, ::1] values, long long[::1] index):
    cdef Py_ssize_t n = acc.shape[0]
    cdef Py_ssize_t d = acc.shape[1]
    cdef Py_ssize_t i, j, src
    for i in range(n):
        src = index[i]
        for j in range(d):
            acc[i, j] += <double> values[src, j]


def gather_accumulate_f64(double[:, ::1] acc, double[:, ::1] values, long long[::1] index):
    cdef Py_ssize_t n = acc.shape[0]
    cdef Py_ssize_t d = acc.shape[1]
    cdef Py_ssize_t i, j, src
    for i in range(n):
        src = index[i]
        for j in range(d):
            acc[i, j] += values[src, j]


def assign_nearest(double[:, ::1] points, double[:, ::1] centroids,
                   int[::1] labels, double[::1] sqdist):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t c = centroids.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double best, acc, diff
    cdef int best_j
    for i in range(n):
        best = -1.0
        best_j = 0
        for j in range(c):
            acc = 0.0
            for k in range(d):
                diff = points[i, k] - centroids[j, k]
                acc += diff * diff
                if best >= 0.0 and acc > best:
                    break
            if best < 0.0 or acc < best:
                best = acc
                best_j = <int> j
        labels[i] = best_j
        sqdist[i] = best
