# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled trial kernel for diagonal quadratics with additive noise.

Mirrors _kernels._run_pure exactly: the same chunked noise blocks are
drawn from the trial generator and every update applies the same
elementwise operation order. Built with -ffp-contract=off so no fused
multiply-adds appear; outputs are bit-identical to the pure path.
"""
import numpy as np

from libc.math cimport pow
from libc.stdint cimport int64_t


def run_trial(int method, double[::1] a, double[::1] b, double sigma_noise,
              double[::1] x0, double p, double beta, double alpha_fixed,
              double s, double sigma_sched, int64_t max_k, int64_t[::1] cps,
              object rng, int chunk):
    """One trial; method codes: 0 sg, 1 accel, 2 gradavg, 3 iteravg, 4 sgm.

    Returns (X, M): per-checkpoint iterate snapshots (the running average
    for iteravg) taken before the step at that index, and the direction
    used by that step.
    """
    cdef Py_ssize_t d = a.shape[0]
    cdef Py_ssize_t ncp = cps.shape[0]

    x_arr = np.array(x0, dtype=np.float64, copy=True)
    v_arr = np.zeros(d)
    gsum_arr = np.zeros(d)
    sbar_arr = np.zeros(d)
    u_arr = np.zeros(d)
    dx_arr = np.zeros(d)
    gbuf_arr = np.zeros(d)
    mbuf_arr = np.zeros(d)
    X_arr = np.empty((ncp, d))
    M_arr = np.empty((ncp, d))

    cdef double[::1] x = x_arr
    cdef double[::1] v = v_arr
    cdef double[::1] gsum = gsum_arr
    cdef double[::1] sbar = sbar_arr
    cdef double[::1] u = u_arr
    cdef double[::1] dxv = dx_arr
    cdef double[::1] gbuf = gbuf_arr
    cdef double[::1] mbuf = mbuf_arr
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] M = M_arr
    cdef double[:, ::1] Z

    cdef int64_t done = 0, k
    cdef Py_ssize_t ci = 0, t, i, m_len
    cdef int take
    cdef double kd, alpha, c, c1
    cdef double bk = 0.0
    cdef double bpow = 1.0

    while done < max_k:
        m_len = min(chunk, max_k - done)
        Z = rng.standard_normal((m_len, d))
        with nogil:
            for t in range(m_len):
                k = done + t + 1
                kd = <double> k

                if method == 3:
                    for i in range(d):
                        sbar[i] = sbar[i] + x[i]

                take = 1 if (ci < ncp and cps[ci] == k) else 0
                if take:
                    if method == 3:
                        for i in range(d):
                            X[ci, i] = sbar[i] / kd
                    else:
                        for i in range(d):
                            X[ci, i] = x[i]

                if method == 4:
                    alpha = alpha_fixed
                else:
                    alpha = s / (kd + sigma_sched)

                for i in range(d):
                    gbuf[i] = (a[i] * x[i] - b[i]) + sigma_noise * Z[t, i]

                if method == 0 or method == 3:
                    for i in range(d):
                        mbuf[i] = -gbuf[i]
                        x[i] = x[i] + alpha * mbuf[i]
                elif method == 1:
                    c = pow((kd - 1.0) / kd, p)
                    bk = bk * c + 1.0
                    for i in range(d):
                        v[i] = c * v[i] - gbuf[i]
                        mbuf[i] = v[i] / bk
                        x[i] = x[i] + alpha * mbuf[i]
                elif method == 2:
                    for i in range(d):
                        gsum[i] = gsum[i] + gbuf[i]
                        mbuf[i] = -(gsum[i] / kd)
                        x[i] = x[i] + alpha * mbuf[i]
                else:
                    bpow = bpow * beta
                    c1 = -(1.0 - beta) / (1.0 - bpow)
                    for i in range(d):
                        u[i] = beta * u[i] + gbuf[i]
                        dxv[i] = beta * dxv[i] - alpha_fixed * gbuf[i]
                        x[i] = x[i] + dxv[i]
                        mbuf[i] = u[i] * c1

                if take:
                    for i in range(d):
                        M[ci, i] = mbuf[i]
                    ci = ci + 1
        done += m_len

    return X_arr, M_arr
