# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the fixed-topology MLP: BLAS-backed forward and
reverse passes with fused activations, plus fused adaptive-moment and
target-network updates.

Mirrors ``_kernels_np`` function for function; selected at import by
``gcrl.nn.backend`` when the extension is built.
"""

import numpy as np

from libc.math cimport exp, pow, sqrt, tanh
from scipy.linalg.cython_blas cimport dgemm

BACKEND_NAME = "cython"

HEAD_TANH = 0
HEAD_SIGMOID = 1
HEAD_LINEAR = 2

cdef int _TANH = 0
cdef int _SIGMOID = 1


cdef void _gemm(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                bint ta, bint tb, double alpha, double beta) noexcept nogil:
    # Row-major C = alpha * op(A) @ op(B) + beta * C, expressed through the
    # column-major BLAS as C^T = op(B)^T @ op(A)^T.
    cdef int m = c.shape[1]
    cdef int n = c.shape[0]
    cdef int k = a.shape[0] if ta else a.shape[1]
    cdef int ldb = b.shape[1]
    cdef int lda = a.shape[1]
    cdef int ldc = c.shape[1]
    cdef char opb = b'T' if tb else b'N'
    cdef char opa = b'T' if ta else b'N'
    dgemm(&opb, &opa, &m, &n, &k, &alpha, &b[0, 0], &ldb, &a[0, 0], &lda,
          &beta, &c[0, 0], &ldc)


cdef void _fill_rows(double[:, ::1] z, double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            z[i, j] = b[j]


cdef void _relu(double[:, ::1] z) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            if z[i, j] < 0.0:
                z[i, j] = 0.0


cdef void _tanh_inplace(double[:, ::1] z) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            z[i, j] = tanh(z[i, j])


cdef void _sigmoid_inplace(double[:, ::1] z) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            z[i, j] = 1.0 / (1.0 + exp(-z[i, j]))


cdef void _relu_mask(double[:, ::1] g, double[:, ::1] a) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            if a[i, j] <= 0.0:
                g[i, j] = 0.0


cdef void _colsum(double[:, ::1] g, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for j in range(g.shape[1]):
        acc = 0.0
        for i in range(g.shape[0]):
            acc += g[i, j]
        out[j] = acc


def mlp_forward(list weights, list biases, x, int head, bint keep_cache):
    """Forward pass over a batch ``x`` of shape (n, layer_sizes[0]).

    Returns ``(y, cache)``; cache is [x, h1, ..., y] or None.
    """
    cdef double[:, ::1] h = x
    cdef double[:, ::1] w, zv
    cdef double[::1] b
    cdef int last = len(weights) - 1
    cdef int layer
    cache = [x] if keep_cache else None
    out = x
    for layer in range(len(weights)):
        w = weights[layer]
        b = biases[layer]
        out = np.empty((h.shape[0], w.shape[1]))
        zv = out
        with nogil:
            _fill_rows(zv, b)
            _gemm(h, w, zv, 0, 0, 1.0, 1.0)
            if layer < last:
                _relu(zv)
            elif head == _TANH:
                _tanh_inplace(zv)
            elif head == _SIGMOID:
                _sigmoid_inplace(zv)
        h = zv
        if keep_cache:
            cache.append(out)
    return out, cache


cdef object _head_grad(gy, y, int head):
    cdef double[:, ::1] gv, yv, outv
    out = np.empty_like(gy)
    gv = gy
    yv = y
    outv = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(gv.shape[0]):
            for j in range(gv.shape[1]):
                if head == _TANH:
                    outv[i, j] = gv[i, j] * (1.0 - yv[i, j] * yv[i, j])
                elif head == _SIGMOID:
                    outv[i, j] = gv[i, j] * yv[i, j] * (1.0 - yv[i, j])
                else:
                    outv[i, j] = gv[i, j]
    return out


def mlp_backward(list weights, list cache, gy, int head, list dws, list dbs):
    """Reverse pass writing per-layer gradients into ``dws``/``dbs``;
    returns the input-batch gradient."""
    g = _head_grad(gy, cache[len(weights)], head)
    cdef double[:, ::1] gv = g
    cdef double[:, ::1] av, wv, gpv, dwv, gxv
    cdef double[::1] dbv
    cdef int layer
    for layer in range(len(weights) - 1, -1, -1):
        av = cache[layer]
        dwv = dws[layer]
        dbv = dbs[layer]
        with nogil:
            _gemm(av, gv, dwv, 1, 0, 1.0, 0.0)
            _colsum(gv, dbv)
        if layer > 0:
            wv = weights[layer]
            gp = np.empty((gv.shape[0], wv.shape[0]))
            gpv = gp
            with nogil:
                _gemm(gv, wv, gpv, 0, 1, 1.0, 0.0)
                _relu_mask(gpv, av)
            g = gp
            gv = gpv
    wv = weights[0]
    gx = np.empty((gv.shape[0], wv.shape[0]))
    gxv = gx
    with nogil:
        _gemm(gv, wv, gxv, 0, 1, 1.0, 0.0)
    return gx


def mlp_input_grad(list weights, list cache, gy, int head):
    """Gradient with respect to the input only (parameter grads skipped)."""
    g = _head_grad(gy, cache[len(weights)], head)
    cdef double[:, ::1] gv = g
    cdef double[:, ::1] av, wv, gpv, gxv
    cdef int layer
    for layer in range(len(weights) - 1, 0, -1):
        av = cache[layer]
        wv = weights[layer]
        gp = np.empty((gv.shape[0], wv.shape[0]))
        gpv = gp
        with nogil:
            _gemm(gv, wv, gpv, 0, 1, 1.0, 0.0)
            _relu_mask(gpv, av)
        g = gp
        gv = gpv
    wv = weights[0]
    gx = np.empty((gv.shape[0], wv.shape[0]))
    gxv = gx
    with nogil:
        _gemm(gv, wv, gxv, 0, 1, 1.0, 0.0)
    return gx


def adam_step(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
              long t, double lr, double beta1, double beta2, double eps):
    """One bias-corrected adaptive-moment update, in place on flat arrays."""
    cdef double c1 = 1.0 - pow(beta1, <double> t)
    cdef double c2 = 1.0 - pow(beta2, <double> t)
    cdef double scale = lr / c1
    cdef double denom
    cdef Py_ssize_t i
    with nogil:
        for i in range(p.shape[0]):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
            denom = sqrt(v[i] / c2) + eps
            p[i] -= scale * m[i] / denom


def polyak(double[::1] target, double[::1] source, double rho):
    """target <- (1 - rho) * target + rho * source, in place."""
    cdef double keep = 1.0 - rho
    cdef Py_ssize_t i
    with nogil:
        for i in range(target.shape[0]):
            target[i] = keep * target[i] + rho * source[i]
