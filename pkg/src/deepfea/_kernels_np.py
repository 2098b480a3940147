"""NumPy implementation of the convolution kernels.

This is the fallback backend: im2col views feeding BLAS matmuls, with the
col2im scatter in the backward pass done as k*k (or k*k*k) shifted adds.
Inputs are assumed validated and C-contiguous float64 (see kernels.py).
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

NAME = "python"


def _im2col2(xp: np.ndarray, kh: int, kw: int, oh: int, ow: int) -> np.ndarray:
    c = xp.shape[0]
    s = xp.strides
    v = as_strided(xp, (oh, ow, c, kh, kw), (s[1], s[2], s[0], s[1], s[2]))
    return v.reshape(oh * ow, c * kh * kw)


def _im2col3(xp: np.ndarray, kh: int, kw: int, kl: int,
             oh: int, ow: int, ol: int) -> np.ndarray:
    c = xp.shape[0]
    s = xp.strides
    v = as_strided(xp, (oh, ow, ol, c, kh, kw, kl),
                   (s[1], s[2], s[3], s[0], s[1], s[2], s[3]))
    return v.reshape(oh * ow * ol, c * kh * kw * kl)


def _pad2(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * ph, w + 2 * pw))
    xp[:, ph:ph + h, pw:pw + w] = x
    return xp


def _pad3(x: np.ndarray, ph: int, pw: int, pl: int) -> np.ndarray:
    if ph == 0 and pw == 0 and pl == 0:
        return x
    c, h, w, l = x.shape
    xp = np.zeros((c, h + 2 * ph, w + 2 * pw, l + 2 * pl))
    xp[:, ph:ph + h, pw:pw + w, pl:pl + l] = x
    return xp


def _conv2_fwd(x, w, bias, ph, pw):
    co, ci, kh, kw = w.shape
    h, wd = x.shape[1], x.shape[2]
    oh, ow = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1
    cols = _im2col2(_pad2(x, ph, pw), kh, kw, oh, ow)
    y = cols @ w.reshape(co, -1).T
    if bias is not None:
        y += bias
    return np.ascontiguousarray(y.T.reshape(co, oh, ow))


def _conv2_bwd(x, w, gy, ph, pw):
    co, ci, kh, kw = w.shape
    h, wd = x.shape[1], x.shape[2]
    oh, ow = gy.shape[1], gy.shape[2]
    xp = _pad2(x, ph, pw)
    cols = _im2col2(xp, kh, kw, oh, ow)
    gy_mat = gy.reshape(co, -1)
    gb = gy_mat.sum(axis=1)
    gw = (gy_mat @ cols).reshape(w.shape)
    gcols = (gy_mat.T @ w.reshape(co, -1)).reshape(oh, ow, ci, kh, kw)
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i:i + oh, j:j + ow] += gcols[:, :, :, i, j].transpose(2, 0, 1)
    gx = gxp[:, ph:ph + h, pw:pw + wd]
    return np.ascontiguousarray(gx), gw, gb


def _conv3_fwd(x, w, bias, ph, pw, pl):
    co, ci, kh, kw, kl = w.shape
    h, wd, l = x.shape[1:]
    oh, ow, ol = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1, l + 2 * pl - kl + 1
    cols = _im2col3(_pad3(x, ph, pw, pl), kh, kw, kl, oh, ow, ol)
    y = cols @ w.reshape(co, -1).T
    if bias is not None:
        y += bias
    return np.ascontiguousarray(y.T.reshape(co, oh, ow, ol))


def _conv3_bwd(x, w, gy, ph, pw, pl):
    co, ci, kh, kw, kl = w.shape
    h, wd, l = x.shape[1:]
    oh, ow, ol = gy.shape[1:]
    xp = _pad3(x, ph, pw, pl)
    cols = _im2col3(xp, kh, kw, kl, oh, ow, ol)
    gy_mat = gy.reshape(co, -1)
    gb = gy_mat.sum(axis=1)
    gw = (gy_mat @ cols).reshape(w.shape)
    gcols = (gy_mat.T @ w.reshape(co, -1)).reshape(oh, ow, ol, ci, kh, kw, kl)
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            for m in range(kl):
                gxp[:, i:i + oh, j:j + ow, m:m + ol] += \
                    gcols[:, :, :, :, i, j, m].transpose(3, 0, 1, 2)
    gx = gxp[:, ph:ph + h, pw:pw + wd, pl:pl + l]
    return np.ascontiguousarray(gx), gw, gb


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
