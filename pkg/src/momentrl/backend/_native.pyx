# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot numeric kernels.

Same contract as the numpy backend: float64 C-contiguous arrays, backward
kernels accumulate into the gradient buffers. Matrix products go through
BLAS; gates, activations, and the optimizer are plain C loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p, sqrt, tanh
from scipy.linalg.cython_blas cimport dgemm, dgemv, dger

cnp.import_array()

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_SIGMOID = 2
ACT_SOFTPLUS = 3

cdef int _ID = 0, _RELU = 1, _SIG = 2, _SP = 3


cdef inline double _sigmoid(double x) nogil:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) nogil:
    if x >= 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef void _matmat(double[:, ::1] x, double[:, ::1] w, double[:, ::1] y) nogil:
    # y[T,m] = x[T,n] @ w[m,n]^T, written via the Fortran views
    cdef int t = x.shape[0], n = x.shape[1], m = w.shape[0]
    cdef double one = 1.0, zero = 0.0
    dgemm("T", "N", &m, &t, &n, &one, &w[0, 0], &n, &x[0, 0], &n, &zero, &y[0, 0], &m)


def dense_fwd(double[:, ::1] x, double[:, ::1] w, double[::1] b, int act):
    cdef int t = x.shape[0], m = w.shape[0]
    y_arr = np.empty((t, m))
    cdef double[:, ::1] y = y_arr
    cdef int i, j
    cdef double p
    _matmat(x, w, y)
    with nogil:
        for i in range(t):
            for j in range(m):
                p = y[i, j] + b[j]
                if act == _RELU:
                    p = p if p > 0.0 else 0.0
                elif act == _SIG:
                    p = _sigmoid(p)
                elif act == _SP:
                    p = _softplus(p)
                y[i, j] = p
    return y_arr


def dense_bwd(double[:, ::1] x, double[:, ::1] w, double[:, ::1] y,
              double[:, ::1] gy, int act,
              double[:, ::1] gx, double[:, ::1] gw, double[::1] gb):
    cdef int t = x.shape[0], n = x.shape[1], m = w.shape[0]
    gpre_arr = np.empty((t, m))
    cdef double[:, ::1] gpre = gpre_arr
    cdef int i, j
    cdef double d, yy
    cdef double one = 1.0
    with nogil:
        for i in range(t):
            for j in range(m):
                if act == _ID:
                    d = 1.0
                elif act == _RELU:
                    d = 1.0 if y[i, j] > 0.0 else 0.0
                elif act == _SIG:
                    yy = y[i, j]
                    d = yy * (1.0 - yy)
                else:
                    d = 1.0 - exp(-y[i, j])
                gpre[i, j] = gy[i, j] * d
                gb[j] += gpre[i, j]
        # gw[m,n] += gpre[t,m]^T @ x[t,n]
        dgemm("N", "T", &n, &m, &t, &one, &x[0, 0], &n, &gpre[0, 0], &m, &one, &gw[0, 0], &n)
        # gx[t,n] += gpre[t,m] @ w[m,n]
        dgemm("N", "N", &n, &t, &m, &one, &w[0, 0], &n, &gpre[0, 0], &m, &one, &gx[0, 0], &n)


cdef void _gemv_raw(const double* a, int rows, int cols, const double* x,
                    double beta, double* y) nogil:
    # y = a[rows, cols] @ x (+ beta * y), a row-major
    cdef double one = 1.0
    cdef int inc = 1
    dgemv("T", &cols, &rows, &one, a, &cols, x, &inc, &beta, y, &inc)


cdef void _gemv_t_raw(const double* a, int rows, int cols, const double* g,
                      double* out) nogil:
    # out += a[rows, cols]^T @ g
    cdef double one = 1.0
    cdef int inc = 1
    dgemv("N", &cols, &rows, &one, a, &cols, g, &inc, &one, out, &inc)


cdef void _ger_raw(const double* gout, int m, const double* xin, int n,
                   double* acc) nogil:
    # acc[m, n] += outer(gout, xin), acc row-major
    cdef double one = 1.0
    cdef int inc = 1
    dger(&n, &m, &one, xin, &inc, gout, &inc, acc, &n)


def gru_fwd(double[::1] x, double[::1] h_prev,
            double[:, ::1] w, double[:, ::1] u, double[::1] b):
    cdef int h = h_prev.shape[0]
    cdef int n = x.shape[0]
    z_arr = np.empty(h); r_arr = np.empty(h); c_arr = np.empty(h); hn_arr = np.empty(h)
    pre_arr = np.empty(3 * h)
    rh_arr = np.empty(h)
    cdef double[::1] z = z_arr, r = r_arr, c = c_arr, hn = hn_arr
    cdef double[::1] pre = pre_arr, rh = rh_arr
    cdef int i
    with nogil:
        _gemv_raw(&w[0, 0], 3 * h, n, &x[0], 0.0, &pre[0])
        for i in range(3 * h):
            pre[i] += b[i]
        # update and reset gates see the raw previous state
        _gemv_raw(&u[0, 0], 2 * h, h, &h_prev[0], 1.0, &pre[0])
        for i in range(h):
            z[i] = _sigmoid(pre[i])
            r[i] = _sigmoid(pre[h + i])
            rh[i] = r[i] * h_prev[i]
        # the candidate sees the reset-gated state
        _gemv_raw(&u[2 * h, 0], h, h, &rh[0], 1.0, &pre[2 * h])
        for i in range(h):
            c[i] = tanh(pre[2 * h + i])
            hn[i] = (1.0 - z[i]) * c[i] + z[i] * h_prev[i]
    return z_arr, r_arr, c_arr, hn_arr


def gru_bwd(double[::1] x, double[::1] h_prev,
            double[::1] z, double[::1] r, double[::1] c,
            double[:, ::1] w, double[:, ::1] u,
            double[::1] gh,
            double[::1] gx, double[::1] gh_prev,
            double[:, ::1] gw, double[:, ::1] gu, double[::1] gb):
    cdef int h = z.shape[0]
    cdef int n = x.shape[0]
    rh_arr = np.empty(h); grh_arr = np.zeros(h); gpre_arr = np.empty(3 * h)
    cdef double[::1] rh = rh_arr, grh = grh_arr, gpre = gpre_arr
    cdef int i
    with nogil:
        for i in range(h):
            rh[i] = r[i] * h_prev[i]
            gpre[2 * h + i] = gh[i] * (1.0 - z[i]) * (1.0 - c[i] * c[i])
        _gemv_t_raw(&u[2 * h, 0], h, h, &gpre[2 * h], &grh[0])
        for i in range(h):
            gpre[i] = gh[i] * (h_prev[i] - c[i]) * z[i] * (1.0 - z[i])
            gpre[h + i] = grh[i] * h_prev[i] * r[i] * (1.0 - r[i])
            gh_prev[i] += gh[i] * z[i] + grh[i] * r[i]
            gb[i] += gpre[i]
            gb[h + i] += gpre[h + i]
            gb[2 * h + i] += gpre[2 * h + i]
        _ger_raw(&gpre[0], 3 * h, &x[0], n, &gw[0, 0])
        _ger_raw(&gpre[0], 2 * h, &h_prev[0], h, &gu[0, 0])
        _ger_raw(&gpre[2 * h], h, &rh[0], h, &gu[2 * h, 0])
        _gemv_t_raw(&u[0, 0], 2 * h, h, &gpre[0], &gh_prev[0])
        _gemv_t_raw(&w[0, 0], 3 * h, n, &gpre[0], &gx[0])


def adam_step(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
              double lr, double beta1, double beta2, double eps,
              double bc1, double bc2, double gscale):
    cdef int n = p.shape[0]
    cdef int i
    cdef double ge, mhat, vhat
    with nogil:
        for i in range(n):
            ge = g[i] * gscale
            m[i] = beta1 * m[i] + (1.0 - beta1) * ge
            v[i] = beta2 * v[i] + (1.0 - beta2) * ge * ge
            mhat = m[i] / bc1
            vhat = v[i] / bc2
            p[i] -= lr * mhat / (sqrt(vhat) + eps)
