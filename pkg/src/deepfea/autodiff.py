"""Minimal reverse-mode autodiff over dense float64 arrays.

A Tape records operations in execution order; backward() walks the record in
reverse, which is a reverse topological order, visiting each node once and
accumulating gradients additively across fan-out. Ops run tape-free as plain
NumPy when no tape is active (inference mode). Convolutions are executed by
the kernels backend; operations may register several output tensors at once
(used by the fused ConvLSTM cell).
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import ContractError, ShapeError

_tls = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_tls, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """Dense float64 array node. `check=True` rejects non-finite values."""

    __slots__ = ("data", "grad")

    def __init__(self, data, check: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        if check and not np.all(np.isfinite(arr)):
            raise ContractError("tensor construction with NaN/Inf in checked mode")
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def grad_or_zeros(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class _Entry:
    __slots__ = ("outs", "parents", "bwd")

    def __init__(self, outs, parents, bwd):
        self.outs = outs
        self.parents = parents
        self.bwd = bwd


class Tape:
    """Ordered operation record for one forward/backward pass (single owner)."""

    def __init__(self):
        self._entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_tls, "stack", None)
        if stack is None:
            stack = _tls.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _tls.stack.pop()
        return False

    def record(self, outs: Sequence[Tensor], parents: Sequence[Tensor],
               bwd: Callable) -> None:
        """bwd maps the outs' gradients to a tuple of parent gradients
        (None entries mean no contribution)."""
        self._entries.append(_Entry(tuple(outs), tuple(parents), bwd))

    def backward(self, root: Tensor) -> None:
        """Accumulate d(root)/d(leaf) into .grad of every leaf reachable from
        root. root must be scalar. Repeated calls keep accumulating."""
        if root.data.size != 1:
            raise ContractError(f"backward root must be scalar, got {root.shape}")
        pending: dict[int, list] = {id(root): [root, np.ones_like(root.data)]}
        produced = {id(o) for e in self._entries for o in e.outs}
        for entry in reversed(self._entries):
            gouts = []
            any_grad = False
            for o in entry.outs:
                item = pending.pop(id(o), None)
                if item is None:
                    gouts.append(None)
                else:
                    gouts.append(item[1])
                    any_grad = True
            if not any_grad:
                continue
            gouts = [g if g is not None else np.zeros_like(o.data)
                     for g, o in zip(gouts, entry.outs)]
            gparents = entry.bwd(*gouts)
            for p, g in zip(entry.parents, gparents):
                if g is None:
                    continue
                item = pending.get(id(p))
                if item is None:
                    pending[id(p)] = [p, np.array(g, copy=True)]
                else:
                    item[1] += g
        for tid, (t, g) in pending.items():
            if tid in produced:
                continue  # interior tensor whose grad nobody asked to keep
            t.grad = g if t.grad is None else t.grad + g

    def gradients(self, root: Tensor, leaves: Sequence[Tensor]) -> list[np.ndarray]:
        """backward() plus a dense gradient map: zeros for off-path leaves."""
        self.backward(root)
        return [leaf.grad_or_zeros() for leaf in leaves]


def _record(outs, parents, bwd):
    tape = _active_tape()
    if tape is not None:
        tape.record(outs, parents, bwd)


def _binary_check(a: Tensor, b: Tensor):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b)
    out = Tensor(a.data + b.data, check=False)
    _record((out,), (a, b), lambda g: (g, g))
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = Tensor(a.data * s, check=False)
    _record((out,), (a,), lambda g: (g * s,))
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b)
    out = Tensor(a.data * b.data, check=False)
    ad, bd = a.data, b.data
    _record((out,), (a, b), lambda g: (g * bd, g * ad))
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)
    out = Tensor(y, check=False)
    _record((out,), (a,), lambda g: (g * y * (1.0 - y),))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, check=False)
    _record((out,), (a,), lambda g: (g * (1.0 - y * y),))
    return out


def elementwise(op: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Named dispatch over the elementwise op set."""
    if op == "sigmoid":
        return sigmoid(a)
    if op == "tanh":
        return tanh(a)
    if op == "hadamard":
        return hadamard(a, b)
    if op == "add":
        return add(a, b)
    if op == "scale":
        return scale(a, b)  # b is the scalar here
    raise ContractError(f"unknown elementwise op {op!r}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b)
    out = Tensor(a.data - b.data, check=False)
    _record((out,), (a, b), lambda g: (g, -g))
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum()), check=False)
    shape = a.data.shape
    _record((out,), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return out


def sq_diff_sum(a: Tensor, b: Tensor) -> Tensor:
    """sum((a-b)**2), fused to keep loss graphs small."""
    _binary_check(a, b)
    d = a.data - b.data
    out = Tensor(np.asarray((d * d).sum()), check=False)
    _record((out,), (a, b), lambda g: (2.0 * g * d, -2.0 * g * d))
    return out


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def conv_same(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Shape-preserving zero-padded convolution (odd kernel extents)."""
    bdata = None if bias is None else bias.data
    out = Tensor(kernels.conv_same_fwd(x.data, w.data, bdata), check=False)
    xd, wd = x.data, w.data

    if bias is None:
        def bwd(g):
            gx, gw, _ = kernels.conv_same_bwd(xd, wd, g)
            return gx, gw
        _record((out,), (x, w), bwd)
    else:
        def bwd(g):
            return kernels.conv_same_bwd(xd, wd, g)
        _record((out,), (x, w, bias), bwd)
    return out


def conv_valid(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Unpadded convolution; each output extent shrinks by kernel extent - 1."""
    bdata = None if bias is None else bias.data
    out = Tensor(kernels.conv_valid_fwd(x.data, w.data, bdata), check=False)
    xd, wd = x.data, w.data

    if bias is None:
        def bwd(g):
            gx, gw, _ = kernels.conv_valid_bwd(xd, wd, g)
            return gx, gw
        _record((out,), (x, w), bwd)
    else:
        def bwd(g):
            return kernels.conv_valid_bwd(xd, wd, g)
        _record((out,), (x, w, bias), bwd)
    return out


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

def grad_check(fn: Callable[..., Tensor], args: Sequence[np.ndarray],
               step: float = 1e-6) -> float:
    """Max over all coordinates of |analytic - central difference| scaled by
    max(1, |analytic|). fn must map Tensors to a scalar Tensor."""
    tens = [Tensor(np.array(a, dtype=np.float64, copy=True)) for a in args]
    with Tape() as tape:
        root = fn(*tens)
        tape.backward(root)
    worst = 0.0
    for t in tens:
        analytic = t.grad_or_zeros().reshape(-1)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = fn(*tens).item()
            flat[i] = orig - step
            fm = fn(*tens).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
            if err > worst:
                worst = err
    return worst
