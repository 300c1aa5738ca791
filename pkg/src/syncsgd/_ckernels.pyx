# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled elementwise kernels used by the MLP and the gradient reductions.

Every function mirrors one in ``_pykernels`` with the same signature and the
same operation order, so ``add_into``, ``sgd_step`` and ``sigmoid_backward``
agree bitwise with the numpy versions. Arrays must be C-contiguous; callers
pass flat views where shapes do not matter.

Literals are bound to ``real`` variables first: a bare ``1.0`` would promote
float32 arithmetic to double and round twice.
"""
from libc.math cimport exp, expf

ctypedef fused real:
    float
    double


cdef inline real _exp(real x) noexcept nogil:
    if real is float:
        return expf(x)
    else:
        return exp(x)


def sigmoid(const real[::1] z, real[::1] out):
    # 1/(1+exp(-x)) is safe without a branch: exp overflows to inf and 1/inf = 0
    cdef Py_ssize_t i, n = z.shape[0]
    cdef real one = 1
    if out.shape[0] != n:
        raise ValueError("length mismatch: %d vs %d" % (n, out.shape[0]))
    if n == 0:
        return
    cdef const real* x = &z[0]
    cdef real* o = &out[0]
    with nogil:
        for i in range(n):
            o[i] = one / (one + _exp(-x[i]))


def sigmoid_backward(const real[::1] grad, const real[::1] act, real[::1] out):
    cdef Py_ssize_t i, n = grad.shape[0]
    cdef real one = 1
    if act.shape[0] != n or out.shape[0] != n:
        raise ValueError("length mismatch")
    if n == 0:
        return
    cdef const real* g = &grad[0]
    cdef const real* a = &act[0]
    cdef real* o = &out[0]
    with nogil:
        for i in range(n):
            o[i] = ((one - a[i]) * a[i]) * g[i]


def softmax_rows(const real[:, ::1] z, real[:, ::1] out):
    cdef Py_ssize_t i, j, rows = z.shape[0], cols = z.shape[1]
    cdef real m, s
    with nogil:
        for i in range(rows):
            m = z[i, 0]
            for j in range(1, cols):
                if z[i, j] > m:
                    m = z[i, j]
            s = 0
            for j in range(cols):
                out[i, j] = _exp(z[i, j] - m)
                s = s + out[i, j]
            for j in range(cols):
                out[i, j] = out[i, j] / s


def add_into(real[::1] dst, const real[::1] src):
    cdef Py_ssize_t i, n = dst.shape[0]
    if src.shape[0] != n:
        raise ValueError("length mismatch: %d vs %d" % (n, src.shape[0]))
    if n == 0:
        return
    cdef real* d = &dst[0]
    cdef const real* s = &src[0]
    with nogil:
        for i in range(n):
            d[i] = d[i] + s[i]


def sgd_step(const real[::1] params, const real[::1] grad, double alpha, real[::1] out):
    cdef Py_ssize_t i, n = params.shape[0]
    cdef real a = <real>alpha
    if grad.shape[0] != n or out.shape[0] != n:
        raise ValueError("length mismatch: %d vs %d" % (n, grad.shape[0]))
    if n == 0:
        return
    cdef const real* p = &params[0]
    cdef const real* g = &grad[0]
    cdef real* o = &out[0]
    with nogil:
        for i in range(n):
            o[i] = p[i] - g[i] * a
