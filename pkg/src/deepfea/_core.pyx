# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution kernels: C im2col/col2im around BLAS dgemm.

Same calling conventions as _kernels_np; selected at import by kernels.py.
"""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef inline void gemm_rm(bint ta, bint tb, int m, int n, int k, double alpha,
                         double* a, int lda, double* b, int ldb,
                         double beta, double* c) noexcept nogil:
    # Row-major C(m,n) = alpha*opA(A)@opB(B) + beta*C via Fortran dgemm on the
    # transposed problem. lda/ldb are the row lengths of A and B as stored.
    cdef char fa = b'T' if ta else b'N'
    cdef char fb = b'T' if tb else b'N'
    cdef int mm = n, nn = m, kk = k, ldc = n
    dgemm(&fb, &fa, &mm, &nn, &kk, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


# ---------------------------------------------------------------------------
# 2D
# ---------------------------------------------------------------------------

cdef void _im2col2(const double* xp, double* cols, int ci,
                   int hp, int wp, int kh, int kw, int oh, int ow) noexcept nogil:
    cdef int s, oi, oj, c, i, j, col
    cdef const double* src
    cdef double* dst
    for oi in range(oh):
        for oj in range(ow):
            s = oi * ow + oj
            dst = cols + <long>s * ci * kh * kw
            col = 0
            for c in range(ci):
                for i in range(kh):
                    src = xp + (<long>c * hp + oi + i) * wp + oj
                    for j in range(kw):
                        dst[col] = src[j]
                        col += 1


cdef void _col2im2(const double* cols, double* gxp, int ci,
                   int hp, int wp, int kh, int kw, int oh, int ow) noexcept nogil:
    cdef int s, oi, oj, c, i, j, col
    cdef const double* src
    cdef double* dst
    for oi in range(oh):
        for oj in range(ow):
            s = oi * ow + oj
            src = cols + <long>s * ci * kh * kw
            col = 0
            for c in range(ci):
                for i in range(kh):
                    dst = gxp + (<long>c * hp + oi + i) * wp + oj
                    for j in range(kw):
                        dst[j] += src[col]
                        col += 1


cdef object _pad2(cnp.ndarray x, int ph, int pw):
    if ph == 0 and pw == 0:
        return x
    cdef int c = x.shape[0], h = x.shape[1], w = x.shape[2]
    xp = np.zeros((c, h + 2 * ph, w + 2 * pw))
    xp[:, ph:ph + h, pw:pw + w] = x
    return xp


def _conv2_fwd(cnp.ndarray x, cnp.ndarray w, bias, int ph, int pw):
    cdef int co = w.shape[0], ci = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef int h = x.shape[1], wd = x.shape[2]
    cdef int oh = h + 2 * ph - kh + 1, ow = wd + 2 * pw - kw + 1
    cdef int s = oh * ow, k = ci * kh * kw
    cdef cnp.ndarray xp = _pad2(x, ph, pw)
    cdef cnp.ndarray cols = np.empty((s, k))
    cdef cnp.ndarray y = np.empty((co, oh, ow))
    cdef double[:, :, ::1] xpv = xp
    cdef double[:, ::1] colsv = cols
    cdef double[:, :, ::1] yv = y
    cdef double[:, :, :, ::1] wv = w
    cdef int c, i
    cdef double bc
    with nogil:
        _im2col2(&xpv[0, 0, 0], &colsv[0, 0], ci, h + 2 * ph, wd + 2 * pw,
                 kh, kw, oh, ow)
        gemm_rm(0, 1, co, s, k, 1.0, &wv[0, 0, 0, 0], k, &colsv[0, 0], k,
                0.0, &yv[0, 0, 0])
    if bias is not None:
        bv = np.asarray(bias)
        y += bv[:, None, None]
    return y


def _conv2_bwd(cnp.ndarray x, cnp.ndarray w, cnp.ndarray gy, int ph, int pw):
    cdef int co = w.shape[0], ci = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef int h = x.shape[1], wd = x.shape[2]
    cdef int oh = gy.shape[1], ow = gy.shape[2]
    cdef int s = oh * ow, k = ci * kh * kw
    cdef cnp.ndarray xp = _pad2(x, ph, pw)
    cdef cnp.ndarray cols = np.empty((s, k))
    cdef cnp.ndarray gw = np.empty_like(w)
    cdef cnp.ndarray gcols = np.empty((s, k))
    cdef cnp.ndarray gxp = np.zeros_like(xp)
    cdef double[:, :, ::1] xpv = xp
    cdef double[:, ::1] colsv = cols
    cdef double[:, ::1] gcolsv = gcols
    cdef double[:, :, ::1] gxpv = gxp
    cdef double[:, :, :, ::1] wv = w
    cdef double[:, :, :, ::1] gwv = gw
    cdef double[:, :, ::1] gyv = gy
    with nogil:
        _im2col2(&xpv[0, 0, 0], &colsv[0, 0], ci, h + 2 * ph, wd + 2 * pw,
                 kh, kw, oh, ow)
        # gw(co,k) = gy(co,s) @ cols(s,k)
        gemm_rm(0, 0, co, k, s, 1.0, &gyv[0, 0, 0], s, &colsv[0, 0], k,
                0.0, &gwv[0, 0, 0, 0])
        # gcols(s,k) = gy(co,s)^T @ w(co,k)
        gemm_rm(1, 0, s, k, co, 1.0, &gyv[0, 0, 0], s, &wv[0, 0, 0, 0], k,
                0.0, &gcolsv[0, 0])
        _col2im2(&gcolsv[0, 0], &gxpv[0, 0, 0], ci, h + 2 * ph, wd + 2 * pw,
                 kh, kw, oh, ow)
    gb = gy.reshape(co, -1).sum(axis=1)
    if ph == 0 and pw == 0:
        return gxp, gw, gb
    return np.ascontiguousarray(gxp[:, ph:ph + h, pw:pw + wd]), gw, gb


# ---------------------------------------------------------------------------
# 3D
# ---------------------------------------------------------------------------

cdef void _im2col3(const double* xp, double* cols, int ci,
                   int hp, int wp, int lp, int kh, int kw, int kl,
                   int oh, int ow, int ol) noexcept nogil:
    cdef int s, oi, oj, om, c, i, j, m, col
    cdef const double* src
    cdef double* dst
    for oi in range(oh):
        for oj in range(ow):
            for om in range(ol):
                s = (oi * ow + oj) * ol + om
                dst = cols + <long>s * ci * kh * kw * kl
                col = 0
                for c in range(ci):
                    for i in range(kh):
                        for j in range(kw):
                            src = xp + ((<long>c * hp + oi + i) * wp + oj + j) * lp + om
                            for m in range(kl):
                                dst[col] = src[m]
                                col += 1


cdef void _col2im3(const double* cols, double* gxp, int ci,
                   int hp, int wp, int lp, int kh, int kw, int kl,
                   int oh, int ow, int ol) noexcept nogil:
    cdef int s, oi, oj, om, c, i, j, m, col
    cdef const double* src
    cdef double* dst
    for oi in range(oh):
        for oj in range(ow):
            for om in range(ol):
                s = (oi * ow + oj) * ol + om
                src = cols + <long>s * ci * kh * kw * kl
                col = 0
                for c in range(ci):
                    for i in range(kh):
                        for j in range(kw):
                            dst = gxp + ((<long>c * hp + oi + i) * wp + oj + j) * lp + om
                            for m in range(kl):
                                dst[m] += src[col]
                                col += 1


cdef object _pad3(cnp.ndarray x, int ph, int pw, int pl):
    if ph == 0 and pw == 0 and pl == 0:
        return x
    cdef int c = x.shape[0], h = x.shape[1], w = x.shape[2], l = x.shape[3]
    xp = np.zeros((c, h + 2 * ph, w + 2 * pw, l + 2 * pl))
    xp[:, ph:ph + h, pw:pw + w, pl:pl + l] = x
    return xp


def _conv3_fwd(cnp.ndarray x, cnp.ndarray w, bias, int ph, int pw, int pl):
    cdef int co = w.shape[0], ci = w.shape[1]
    cdef int kh = w.shape[2], kw = w.shape[3], kl = w.shape[4]
    cdef int h = x.shape[1], wd = x.shape[2], l = x.shape[3]
    cdef int oh = h + 2 * ph - kh + 1, ow = wd + 2 * pw - kw + 1
    cdef int ol = l + 2 * pl - kl + 1
    cdef int s = oh * ow * ol, k = ci * kh * kw * kl
    cdef cnp.ndarray xp = _pad3(x, ph, pw, pl)
    cdef cnp.ndarray cols = np.empty((s, k))
    cdef cnp.ndarray y = np.empty((co, oh, ow, ol))
    cdef double[:, :, :, ::1] xpv = xp
    cdef double[:, ::1] colsv = cols
    cdef double[:, :, :, ::1] yv = y
    cdef double[:, :, :, :, ::1] wv = w
    with nogil:
        _im2col3(&xpv[0, 0, 0, 0], &colsv[0, 0], ci, h + 2 * ph, wd + 2 * pw,
                 l + 2 * pl, kh, kw, kl, oh, ow, ol)
        gemm_rm(0, 1, co, s, k, 1.0, &wv[0, 0, 0, 0, 0], k, &colsv[0, 0], k,
                0.0, &yv[0, 0, 0, 0])
    if bias is not None:
        bv = np.asarray(bias)
        y += bv[:, None, None, None]
    return y


def _conv3_bwd(cnp.ndarray x, cnp.ndarray w, cnp.ndarray gy,
               int ph, int pw, int pl):
    cdef int co = w.shape[0], ci = w.shape[1]
    cdef int kh = w.shape[2], kw = w.shape[3], kl = w.shape[4]
    cdef int h = x.shape[1], wd = x.shape[2], l = x.shape[3]
    cdef int oh = gy.shape[1], ow = gy.shape[2], ol = gy.shape[3]
    cdef int s = oh * ow * ol, k = ci * kh * kw * kl
    cdef cnp.ndarray xp = _pad3(x, ph, pw, pl)
    cdef cnp.ndarray cols = np.empty((s, k))
    cdef cnp.ndarray gw = np.empty_like(w)
    cdef cnp.ndarray gcols = np.empty((s, k))
    cdef cnp.ndarray gxp = np.zeros_like(xp)
    cdef double[:, :, :, ::1] xpv = xp
    cdef double[:, ::1] colsv = cols
    cdef double[:, ::1] gcolsv = gcols
    cdef double[:, :, :, ::1] gxpv = gxp
    cdef double[:, :, :, :, ::1] wv = w
    cdef double[:, :, :, :, ::1] gwv = gw
    cdef double[:, :, :, ::1] gyv = gy
    with nogil:
        _im2col3(&xpv[0, 0, 0, 0], &colsv[0, 0], ci, h + 2 * ph, wd + 2 * pw,
                 l + 2 * pl, kh, kw, kl, oh, ow, ol)
        gemm_rm(0, 0, co, k, s, 1.0, &gyv[0, 0, 0, 0], s, &colsv[0, 0], k,
                0.0, &gwv[0, 0, 0, 0, 0])
        gemm_rm(1, 0, s, k, co, 1.0, &gyv[0, 0, 0, 0], s, &wv[0, 0, 0, 0, 0], k,
                0.0, &gcolsv[0, 0])
        _col2im3(&gcolsv[0, 0], &gxpv[0, 0, 0, 0], ci, h + 2 * ph, wd + 2 * pw,
                 l + 2 * pl, kh, kw, kl, oh, ow, ol)
    gb = gy.reshape(co, -1).sum(axis=1)
    if ph == 0 and pw == 0 and pl == 0:
        return gxp, gw, gb
    return np.ascontiguousarray(gxp[:, ph:ph + h, pw:pw + wd, pl:pl + l]), gw, gb


# ---------------------------------------------------------------------------
# public API (mirrors _kernels_np)
# ---------------------------------------------------------------------------

def conv2d_same_fwd(x, w, bias):
    return _conv2_fwd(x, w, bias, (w.shape[2] - 1) // 2, (w.shape[3] - 1) // 2)


def conv2d_same_bwd(x, w, gy):
    return _conv2_bwd(x, w, gy, (w.shape[2] - 1) // 2, (w.shape[3] - 1) // 2)


def conv2d_valid_fwd(x, w, bias):
    return _conv2_fwd(x, w, bias, 0, 0)


def conv2d_valid_bwd(x, w, gy):
    return _conv2_bwd(x, w, gy, 0, 0)


def conv3d_same_fwd(x, w, bias):
    return _conv3_fwd(x, w, bias, (w.shape[2] - 1) // 2,
                      (w.shape[3] - 1) // 2, (w.shape[4] - 1) // 2)


def conv3d_same_bwd(x, w, gy):
    return _conv3_bwd(x, w, gy, (w.shape[2] - 1) // 2,
                      (w.shape[3] - 1) // 2, (w.shape[4] - 1) // 2)


def conv3d_valid_fwd(x, w, bias):
    return _conv3_fwd(x, w, bias, 0, 0, 0)


def conv3d_valid_bwd(x, w, gy):
    return _conv3_bwd(x, w, gy, 0, 0, 0)
