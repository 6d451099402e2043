# cython: language_level=3
"""Compiled implementations of the hot numerical kernels.

Mirrors the signatures and semantics of ``_pure``: same argument order,
same shapes, float64 contiguous arrays (the package-level wrappers coerce
inputs before dispatching here). Kept in lockstep with ``_pure`` by the
backend parity tests.
"""

from libc.math cimport exp, log, INFINITY

import numpy as np

cdef double LOG_TWO_PI = 1.8378770664093453


cdef inline double _logsumexp1d(double[::1] a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = -INFINITY
    cdef double s = 0.0
    for i in range(n):
        if a[i] > m:
            m = a[i]
    for i in range(n):
        s += exp(a[i] - m)
    return m + log(s)


cdef inline void _log_softmax_row(const double[:, ::1] src, Py_ssize_t row,
                                  double[::1] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = -INFINITY
    cdef double s = 0.0
    for i in range(n):
        if src[row, i] > m:
            m = src[row, i]
    for i in range(n):
        s += exp(src[row, i] - m)
    s = m + log(s)
    for i in range(n):
        out[i] = src[row, i] - s


def mixture_log_prob(const double[::1] weights, const double[:, :, ::1] means,
                     const double[:, :, ::1] stds, const double[:, :, ::1] trajs,
                     double var_scale):
    cdef Py_ssize_t N = means.shape[0]
    cdef Py_ssize_t T = means.shape[1]
    cdef Py_ssize_t J = trajs.shape[0]
    cdef Py_ssize_t j, n, t, d
    cdef double g, v, diff

    out_arr = np.empty(J, dtype=np.float64)
    scratch_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] a = scratch_arr

    with nogil:
        for j in range(J):
            for n in range(N):
                g = 0.0
                for t in range(T):
                    for d in range(2):
                        v = var_scale * stds[n, t, d] * stds[n, t, d]
                        diff = trajs[j, t, d] - means[n, t, d]
                        g += diff * diff / v + log(v) + LOG_TWO_PI
                a[n] = log(weights[n]) - 0.5 * g
            out[j] = _logsumexp1d(a, N)
    return out_arr


def batch_weighted_nll_grad(const double[:, ::1] logits, const double[:, :, :, ::1] means,
                            const double[:, :, :, ::1] log_stds,
                            const double[:, :, :, ::1] targets,
                            const double[:, ::1] tweights, double var_scale):
    cdef Py_ssize_t B = logits.shape[0]
    cdef Py_ssize_t N = logits.shape[1]
    cdef Py_ssize_t T = means.shape[2]
    cdef Py_ssize_t D = targets.shape[1]
    cdef Py_ssize_t b, d, n, t, k
    cdef double g, v, diff, quad, lse, c, r, cr, csum
    cdef double const_term = 2 * T * (log(var_scale) + LOG_TWO_PI)

    loss_arr = np.zeros(B, dtype=np.float64)
    dlogits_arr = np.zeros((B, N), dtype=np.float64)
    dmeans_arr = np.zeros((B, N, T, 2), dtype=np.float64)
    dlog_stds_arr = np.zeros((B, N, T, 2), dtype=np.float64)
    logpi_arr = np.empty(N, dtype=np.float64)
    a_arr = np.empty(N, dtype=np.float64)

    cdef double[::1] loss = loss_arr
    cdef double[:, ::1] dlogits = dlogits_arr
    cdef double[:, :, :, ::1] dmeans = dmeans_arr
    cdef double[:, :, :, ::1] dlog_stds = dlog_stds_arr
    cdef double[::1] logpi = logpi_arr
    cdef double[::1] a = a_arr

    with nogil:
        for b in range(B):
            _log_softmax_row(logits, b, logpi, N)
            csum = 0.0
            for d in range(D):
                csum += tweights[b, d]
            for d in range(D):
                c = tweights[b, d]
                for n in range(N):
                    g = 0.0
                    for t in range(T):
                        for k in range(2):
                            v = var_scale * exp(2.0 * log_stds[b, n, t, k])
                            diff = targets[b, d, t, k] - means[b, n, t, k]
                            g += diff * diff / v + 2.0 * log_stds[b, n, t, k]
                    a[n] = logpi[n] - 0.5 * (g + const_term)
                lse = _logsumexp1d(a, N)
                loss[b] -= c * lse
                for n in range(N):
                    r = exp(a[n] - lse)
                    cr = c * r
                    dlogits[b, n] -= cr
                    for t in range(T):
                        for k in range(2):
                            v = var_scale * exp(2.0 * log_stds[b, n, t, k])
                            diff = targets[b, d, t, k] - means[b, n, t, k]
                            quad = diff * diff / v
                            dmeans[b, n, t, k] -= cr * diff / v
                            dlog_stds[b, n, t, k] += cr * (1.0 - quad)
            for n in range(N):
                dlogits[b, n] += csum * exp(logpi[n])
    return loss_arr, dlogits_arr, dmeans_arr, dlog_stds_arr


def batch_gt_nll_grad(const double[:, ::1] logits, const double[:, :, :, ::1] means,
                      const double[:, :, :, ::1] log_stds, const double[:, :, ::1] gt,
                      double var_scale):
    cdef Py_ssize_t B = logits.shape[0]
    cdef Py_ssize_t N = logits.shape[1]
    cdef Py_ssize_t T = means.shape[2]
    cdef Py_ssize_t b, n, t, k, nstar
    cdef double d2, best, v, diff, quad, nll
    cdef double const_term = 2 * T * (log(var_scale) + LOG_TWO_PI)

    loss_arr = np.zeros(B, dtype=np.float64)
    dlogits_arr = np.zeros((B, N), dtype=np.float64)
    dmeans_arr = np.zeros((B, N, T, 2), dtype=np.float64)
    dlog_stds_arr = np.zeros((B, N, T, 2), dtype=np.float64)
    logpi_arr = np.empty(N, dtype=np.float64)

    cdef double[::1] loss = loss_arr
    cdef double[:, ::1] dlogits = dlogits_arr
    cdef double[:, :, :, ::1] dmeans = dmeans_arr
    cdef double[:, :, :, ::1] dlog_stds = dlog_stds_arr
    cdef double[::1] logpi = logpi_arr

    with nogil:
        for b in range(B):
            _log_softmax_row(logits, b, logpi, N)
            nstar = 0
            best = INFINITY
            for n in range(N):
                d2 = 0.0
                for t in range(T):
                    for k in range(2):
                        diff = means[b, n, t, k] - gt[b, t, k]
                        d2 += diff * diff
                d2 /= T
                if d2 < best:
                    best = d2
                    nstar = n
            nll = 0.0
            for t in range(T):
                for k in range(2):
                    v = var_scale * exp(2.0 * log_stds[b, nstar, t, k])
                    diff = gt[b, t, k] - means[b, nstar, t, k]
                    quad = diff * diff / v
                    nll += quad + 2.0 * log_stds[b, nstar, t, k]
                    dmeans[b, nstar, t, k] = -diff / v
                    dlog_stds[b, nstar, t, k] = 1.0 - quad
            loss[b] = -logpi[nstar] + 0.5 * (nll + const_term)
            for n in range(N):
                dlogits[b, n] = exp(logpi[n])
            dlogits[b, nstar] -= 1.0
    return loss_arr, dlogits_arr, dmeans_arr, dlog_stds_arr


def batch_bijective_nll_grad(const double[:, ::1] logits, const double[:, :, :, ::1] means,
                             const double[:, :, :, ::1] log_stds,
                             const double[:, ::1] t_weights,
                             const double[:, :, :, ::1] t_means, double var_scale):
    cdef Py_ssize_t B = logits.shape[0]
    cdef Py_ssize_t N = logits.shape[1]
    cdef Py_ssize_t T = means.shape[2]
    cdef Py_ssize_t b, n, t, k
    cdef double v, diff, quad, nll, q, qsum, acc
    cdef double const_term = 2 * T * (log(var_scale) + LOG_TWO_PI)

    loss_arr = np.zeros(B, dtype=np.float64)
    dlogits_arr = np.zeros((B, N), dtype=np.float64)
    dmeans_arr = np.zeros((B, N, T, 2), dtype=np.float64)
    dlog_stds_arr = np.zeros((B, N, T, 2), dtype=np.float64)
    logpi_arr = np.empty(N, dtype=np.float64)

    cdef double[::1] loss = loss_arr
    cdef double[:, ::1] dlogits = dlogits_arr
    cdef double[:, :, :, ::1] dmeans = dmeans_arr
    cdef double[:, :, :, ::1] dlog_stds = dlog_stds_arr
    cdef double[::1] logpi = logpi_arr

    with nogil:
        for b in range(B):
            _log_softmax_row(logits, b, logpi, N)
            qsum = 0.0
            acc = 0.0
            for n in range(N):
                q = t_weights[b, n]
                qsum += q
                if q > 0.0:
                    acc -= q * logpi[n]
                nll = 0.0
                for t in range(T):
                    for k in range(2):
                        v = var_scale * exp(2.0 * log_stds[b, n, t, k])
                        diff = t_means[b, n, t, k] - means[b, n, t, k]
                        quad = diff * diff / v
                        nll += quad + 2.0 * log_stds[b, n, t, k]
                        dmeans[b, n, t, k] = q * (-diff / v)
                        dlog_stds[b, n, t, k] = q * (1.0 - quad)
                acc += q * 0.5 * (nll + const_term)
            loss[b] = acc
            for n in range(N):
                dlogits[b, n] = qsum * exp(logpi[n]) - t_weights[b, n]
    return loss_arr, dlogits_arr, dmeans_arr, dlog_stds_arr


def pairwise_sq_dist(const double[:, :, ::1] a, const double[:, :, ::1] b, int kind):
    cdef Py_ssize_t A = a.shape[0]
    cdef Py_ssize_t Bn = b.shape[0]
    cdef Py_ssize_t T = a.shape[1]
    cdef Py_ssize_t i, j, t, k
    cdef double d2, diff

    out_arr = np.empty((A, Bn), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    with nogil:
        for i in range(A):
            for j in range(Bn):
                if kind == 1:
                    d2 = 0.0
                    for k in range(2):
                        diff = a[i, T - 1, k] - b[j, T - 1, k]
                        d2 += diff * diff
                    out[i, j] = d2
                else:
                    d2 = 0.0
                    for t in range(T):
                        for k in range(2):
                            diff = a[i, t, k] - b[j, t, k]
                            d2 += diff * diff
                    out[i, j] = d2 / T
    return out_arr
