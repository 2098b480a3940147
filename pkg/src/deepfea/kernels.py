"""Convolution kernel dispatch: compiled core when available, NumPy otherwise.

The active backend is chosen once at import. Set DEEPFEA_BACKEND=python or
DEEPFEA_BACKEND=cython to force one (forcing cython raises if the compiled
module is missing). All kernels take and return C-contiguous float64 arrays;
validation happens here so the backends stay branch-free.
"""

import os

import numpy as np

from . import _kernels_np
from .errors import ConfigError, ShapeError


def load_backend(name: str):
    """Return the kernel module for `name` ('python' or 'cython')."""
    if name == "python":
        return _kernels_np
    if name == "cython":
        from . import _core
        return _core
    raise ConfigError(f"unknown kernel backend {name!r}")


def _select() -> "object":
    forced = os.environ.get("DEEPFEA_BACKEND", "").strip().lower()
    if forced:
        if forced not in ("python", "cython"):
            raise ConfigError(
                f"DEEPFEA_BACKEND must be 'python' or 'cython', got {forced!r}")
        return load_backend(forced)
    try:
        from . import _core
        return _core
    except ImportError:
        return _kernels_np


_impl = _select()


def active_backend() -> str:
    """Name of the backend in use ('cython' or 'python')."""
    return _impl.NAME


def _as_input(a, name):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim not in (3, 4):
        raise ShapeError(f"{name} must have 2 or 3 spatial dims, got shape {a.shape}")
    return a


def _check(x, w, bias, mode):
    x = _as_input(x, "input")
    w = np.ascontiguousarray(w, dtype=np.float64)
    nsp = x.ndim - 1
    if w.ndim != nsp + 2:
        raise ShapeError(f"kernel rank {w.ndim} does not match {nsp}D input")
    if w.shape[1] != x.shape[0]:
        raise ShapeError(
            f"kernel expects {w.shape[1]} input channels, input has {x.shape[0]}")
    for ax in range(nsp):
        k, ext = w.shape[2 + ax], x.shape[1 + ax]
        if mode == "same" and k % 2 == 0:
            raise ShapeError(f"same-convolution requires odd kernel extents, got {k}")
        if mode == "valid" and k > ext:
            raise ShapeError(
                f"kernel extent {k} exceeds input extent {ext} on axis {ax}")
    if bias is not None:
        bias = np.ascontiguousarray(bias, dtype=np.float64)
        if bias.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {bias.shape} != ({w.shape[0]},)")
    return x, w, bias


def conv_same_fwd(x, w, bias=None):
    x, w, bias = _check(x, w, bias, "same")
    fn = _impl.conv2d_same_fwd if x.ndim == 3 else _impl.conv3d_same_fwd
    return fn(x, w, bias)


def conv_same_bwd(x, w, gy):
    x, w, _ = _check(x, w, None, "same")
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    fn = _impl.conv2d_same_bwd if x.ndim == 3 else _impl.conv3d_same_bwd
    return fn(x, w, gy)


def conv_valid_fwd(x, w, bias=None):
    x, w, bias = _check(x, w, bias, "valid")
    fn = _impl.conv2d_valid_fwd if x.ndim == 3 else _impl.conv3d_valid_fwd
    return fn(x, w, bias)


def conv_valid_bwd(x, w, gy):
    x, w, _ = _check(x, w, None, "valid")
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    fn = _impl.conv2d_valid_bwd if x.ndim == 3 else _impl.conv3d_valid_bwd
    return fn(x, w, gy)
