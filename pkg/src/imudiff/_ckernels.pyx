# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; mirrors ``_pykernels`` function for function."""

import numpy as np
from libc.math cimport sqrt, fabs, exp

BACKEND = "cython"
N_TIME_FEATURES = 15


def first_diff(double[:, :, ::1] x):
    cdef Py_ssize_t b, n, f, B = x.shape[0], N = x.shape[1], F = x.shape[2]
    out = np.empty((B, N - 1, F))
    cdef double[:, :, ::1] o = out
    for b in range(B):
        for n in range(N - 1):
            for f in range(F):
                o[b, n, f] = x[b, n + 1, f] - x[b, n, f]
    return out


def first_diff_adjoint(double[:, :, ::1] y):
    cdef Py_ssize_t b, n, f, B = y.shape[0], M = y.shape[1], F = y.shape[2]
    out = np.zeros((B, M + 1, F))
    cdef double[:, :, ::1] o = out
    for b in range(B):
        for n in range(M):
            for f in range(F):
                o[b, n + 1, f] += y[b, n, f]
                o[b, n, f] -= y[b, n, f]
    return out


def second_diff(double[:, :, ::1] x):
    cdef Py_ssize_t b, n, f, B = x.shape[0], N = x.shape[1], F = x.shape[2]
    out = np.empty((B, N - 2, F))
    cdef double[:, :, ::1] o = out
    for b in range(B):
        for n in range(N - 2):
            for f in range(F):
                o[b, n, f] = (x[b, n + 2, f] - x[b, n + 1, f]) - (x[b, n + 1, f] - x[b, n, f])
    return out


def second_diff_adjoint(double[:, :, ::1] y):
    cdef Py_ssize_t b, n, f, B = y.shape[0], M = y.shape[1], F = y.shape[2]
    out = np.zeros((B, M + 2, F))
    cdef double[:, :, ::1] o = out
    cdef double v
    for b in range(B):
        for n in range(M):
            for f in range(F):
                v = y[b, n, f]
                o[b, n + 2, f] += v
                o[b, n + 1, f] -= 2.0 * v
                o[b, n, f] += v
    return out


def acc_loss_grad(double[:, :, ::1] x0, double[:, :, ::1] xh, double scale):
    cdef Py_ssize_t b, n, f, B = x0.shape[0], N = x0.shape[1], F = x0.shape[2]
    loss = np.zeros(B)
    grad = np.zeros((B, N, F))
    cdef double[::1] l = loss
    cdef double[:, :, ::1] g = grad
    cdef double d, acc, two = 2.0 * scale
    for b in range(B):
        acc = 0.0
        for n in range(N - 2):
            for f in range(F):
                d = ((xh[b, n + 2, f] - x0[b, n + 2, f])
                     - 2.0 * (xh[b, n + 1, f] - x0[b, n + 1, f])
                     + (xh[b, n, f] - x0[b, n, f]))
                acc += d * d
                g[b, n + 2, f] += two * d
                g[b, n + 1, f] -= 2.0 * two * d
                g[b, n, f] += two * d
        l[b] = scale * acc
    return loss, grad


cdef double _acf(double[::1] y, Py_ssize_t w, double ss, Py_ssize_t lag) nogil:
    cdef Py_ssize_t i
    cdef double num = 0.0
    if lag >= w or ss <= 0.0:
        return 0.0
    for i in range(w - lag):
        num += y[i] * y[i + lag]
    return num / ss


def window_time_features(x_in):
    x_arr = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef Py_ssize_t B = x.shape[0], W = x.shape[1], b, i, lag
    out = np.zeros((B, N_TIME_FEATURES))
    cdef double[:, ::1] o = out
    ybuf = np.empty(W)
    cdef double[::1] y = ybuf
    cdef double mean, mn, mx, ss, sq, a1, a2, ll, d, thresh = exp(-1.0)
    cdef Py_ssize_t zc, run, best, nmax
    for b in range(B):
        mean = 0.0
        mn = x[b, 0]
        mx = x[b, 0]
        sq = 0.0
        for i in range(W):
            mean += x[b, i]
            sq += x[b, i] * x[b, i]
            if x[b, i] < mn:
                mn = x[b, i]
            if x[b, i] > mx:
                mx = x[b, i]
        mean /= W
        ss = 0.0
        for i in range(W):
            y[i] = 0.0 if mx == mn else x[b, i] - mean
            ss += y[i] * y[i]
        a1 = 0.0
        ll = 0.0
        zc = 0
        for i in range(W - 1):
            d = fabs(x[b, i + 1] - x[b, i])
            ll += d
            if y[i] * y[i + 1] < 0.0:
                zc += 1
        a2 = 0.0
        for i in range(W - 2):
            a2 += fabs(x[b, i + 2] - 2.0 * x[b, i + 1] + x[b, i])
        o[b, 0] = mean
        o[b, 1] = sqrt(ss / W)
        o[b, 2] = mn
        o[b, 3] = mx
        o[b, 4] = sqrt(sq / W)
        o[b, 5] = ll / (W - 1)
        o[b, 6] = a2 / (W - 2) if W > 2 else 0.0
        o[b, 7] = zc / <double>(W - 1)
        o[b, 8] = ll
        o[b, 9] = _acf(y, W, ss, 1)
        o[b, 10] = _acf(y, W, ss, 5)
        o[b, 11] = _acf(y, W, ss, 10)
        if ss > 0.0:
            o[b, 12] = W
            for lag in range(1, W):
                if _acf(y, W, ss, lag) < thresh:
                    o[b, 12] = lag
                    break
        else:
            o[b, 12] = 1.0
        run = 0
        best = 0
        for i in range(W):
            if y[i] > 0.0:
                run += 1
                if run > best:
                    best = run
            else:
                run = 0
        o[b, 13] = best
        nmax = 0
        for i in range(1, W - 1):
            if x[b, i] > x[b, i - 1] and x[b, i] > x[b, i + 1]:
                nmax += 1
        o[b, 14] = nmax
    return out


def adam_update(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double c1, double c2, double eps):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g, a = 1.0 - beta1, b = 1.0 - beta2
    cdef double step = lr / c1, inv_c2 = 1.0 / c2
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + a * g
        v[i] = beta2 * v[i] + b * g * g
        param[i] -= step * m[i] / (sqrt(v[i] * inv_c2) + eps)


def momentum_update(double[::1] param, double[::1] grad, double[::1] m, double lr, double mu):
    cdef Py_ssize_t i, n = param.shape[0]
    for i in range(n):
        m[i] = mu * m[i] + grad[i]
        param[i] -= lr * m[i]
