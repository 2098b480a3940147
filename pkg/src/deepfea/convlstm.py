"""Peephole ConvLSTM stack: the recurrent feature extractor.

Gate math per cell step (same-padded convolutions, elementwise peepholes):
    i = sigmoid(Wxi*X + Whi*H' + Wci.C' + bi)
    f = sigmoid(Wxf*X + Whf*H' + Wcf.C' + bf)
    C = f.C' + i.tanh(Wxc*X + Whc*H' + bc)
    o = sigmoid(Wxo*X + Who*H' + Wco.C + bo)   # peephole sees the NEW cell
    H = o.tanh(C)
where ' marks the previous timestep. The four gate convolutions are stored
fused (gate order i, f, c, o along the output-channel axis) and the whole
step is one tape node with a hand-derived backward; per-gate kernels remain
addressable as views for tests and serialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import kernels
from .autodiff import Tensor, _active_tape
from .errors import ShapeError


@dataclass(frozen=True)
class FexmConfig:
    channels: tuple[int, ...]
    kernel: int = 3

    def __post_init__(self):
        if len(self.channels) < 1 or any(c < 1 for c in self.channels):
            raise ShapeError(f"bad channel spec {self.channels}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ShapeError("gate kernels must have odd extent")

    @property
    def r(self) -> int:
        return len(self.channels)


class ConvLstmLayerParams:
    """One layer's weights. Fused storage:
    w_x (4U, C_in, k..), w_h (4U, U, k..), peepholes (U, *grid), bias (4U,)."""

    def __init__(self, w_x: Tensor, w_h: Tensor, w_ci: Tensor, w_cf: Tensor,
                 w_co: Tensor, bias: Tensor):
        self.w_x, self.w_h = w_x, w_h
        self.w_ci, self.w_cf, self.w_co = w_ci, w_cf, w_co
        self.bias = bias
        u4 = w_x.data.shape[0]
        if u4 % 4 or w_h.data.shape[0] != u4 or bias.data.shape != (u4,):
            raise ShapeError("fused gate tensors disagree on channel count")
        self.hidden = u4 // 4
        if w_h.data.shape[1] != self.hidden:
            raise ShapeError("hidden kernel input channels != hidden channels")
        for p in (w_ci, w_cf, w_co):
            if p.data.shape[0] != self.hidden:
                raise ShapeError("peephole channel count != hidden channels")

    @property
    def in_channels(self) -> int:
        return self.w_x.data.shape[1]

    def _gate(self, fused: Tensor, idx: int) -> np.ndarray:
        u = self.hidden
        return fused.data[idx * u:(idx + 1) * u]

    # per-gate read views, gate order (i, f, c, o)
    @property
    def w_xi(self): return self._gate(self.w_x, 0)
    @property
    def w_xf(self): return self._gate(self.w_x, 1)
    @property
    def w_xc(self): return self._gate(self.w_x, 2)
    @property
    def w_xo(self): return self._gate(self.w_x, 3)
    @property
    def w_hi(self): return self._gate(self.w_h, 0)
    @property
    def w_hf(self): return self._gate(self.w_h, 1)
    @property
    def w_hc(self): return self._gate(self.w_h, 2)
    @property
    def w_ho(self): return self._gate(self.w_h, 3)
    @property
    def b_i(self): return self._gate(self.bias, 0)
    @property
    def b_f(self): return self._gate(self.bias, 1)
    @property
    def b_c(self): return self._gate(self.bias, 2)
    @property
    def b_o(self): return self._gate(self.bias, 3)

    @classmethod
    def from_gates(cls, w_xi, w_hi, w_xf, w_hf, w_xo, w_ho, w_xc, w_hc,
                   w_ci, w_cf, w_co, b_i, b_f, b_o, b_c) -> "ConvLstmLayerParams":
        """Assemble fused storage from individual gate arrays."""
        w_x = Tensor(np.concatenate([w_xi, w_xf, w_xc, w_xo], axis=0))
        w_h = Tensor(np.concatenate([w_hi, w_hf, w_hc, w_ho], axis=0))
        bias = Tensor(np.concatenate([b_i, b_f, b_c, b_o], axis=0))
        return cls(w_x, w_h, Tensor(np.asarray(w_ci, dtype=np.float64)),
                   Tensor(np.asarray(w_cf, dtype=np.float64)),
                   Tensor(np.asarray(w_co, dtype=np.float64)), bias)

    @classmethod
    def initialize(cls, rng: np.random.Generator, in_channels: int, hidden: int,
                   kernel: int, grid_dims) -> "ConvLstmLayerParams":
        """Fan-in-scaled uniform conv kernels; zero peepholes; zero biases
        except the forget gate at +1."""
        nd = len(grid_dims)
        kshape = (kernel,) * nd
        ax = np.sqrt(1.0 / (in_channels * kernel ** nd))
        ah = np.sqrt(1.0 / (hidden * kernel ** nd))
        w_x = rng.uniform(-ax, ax, size=(4 * hidden, in_channels, *kshape))
        w_h = rng.uniform(-ah, ah, size=(4 * hidden, hidden, *kshape))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0
        zeros = lambda: Tensor(np.zeros((hidden, *grid_dims)))
        return cls(Tensor(w_x), Tensor(w_h), zeros(), zeros(), zeros(),
                   Tensor(bias))

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [("w_x", self.w_x), ("w_h", self.w_h), ("w_ci", self.w_ci),
                ("w_cf", self.w_cf), ("w_co", self.w_co), ("bias", self.bias)]


@dataclass
class LayerState:
    h: Tensor
    c: Tensor


def init_state(config: FexmConfig, node_dims) -> list[LayerState]:
    """Zero hidden and cell tensors for every layer."""
    return [LayerState(Tensor(np.zeros((u, *node_dims))),
                       Tensor(np.zeros((u, *node_dims))))
            for u in config.channels]


def cell_step(x: Tensor, state: LayerState, params: ConvLstmLayerParams) -> LayerState:
    """One ConvLSTM cell update; differentiable w.r.t. input, state, and all
    parameters (single fused tape node)."""
    u = params.hidden
    if x.data.shape[0] != params.in_channels:
        raise ShapeError(
            f"input has {x.data.shape[0]} channels, layer expects {params.in_channels}")
    if state.h.data.shape != (u, *x.data.shape[1:]):
        raise ShapeError(
            f"state shape {state.h.data.shape} != {(u, *x.data.shape[1:])}")

    xd, hd, cd = x.data, state.h.data, state.c.data
    wx, wh = params.w_x.data, params.w_h.data
    pci, pcf, pco = params.w_ci.data, params.w_cf.data, params.w_co.data

    a = kernels.conv_same_fwd(xd, wx, params.bias.data)
    a += kernels.conv_same_fwd(hd, wh, None)
    ig = expit(a[:u] + pci * cd)
    fg = expit(a[u:2 * u] + pcf * cd)
    gg = np.tanh(a[2 * u:3 * u])
    cn = fg * cd + ig * gg
    og = expit(a[3 * u:] + pco * cn)
    tc = np.tanh(cn)
    hn = og * tc

    h_out = Tensor(hn, check=False)
    c_out = Tensor(cn, check=False)

    tape = _active_tape()
    if tape is not None:
        def bwd(gh, gc_out):
            dao = gh * tc * og * (1.0 - og)
            gc = gc_out + gh * og * (1.0 - tc * tc) + dao * pco
            dai = gc * gg * ig * (1.0 - ig)
            daf = gc * cd * fg * (1.0 - fg)
            dac = gc * ig * (1.0 - gg * gg)
            gc_prev = gc * fg + dai * pci + daf * pcf
            da = np.concatenate([dai, daf, dac, dao], axis=0)
            gx, gwx, gb = kernels.conv_same_bwd(xd, wx, da)
            gh_prev, gwh, _ = kernels.conv_same_bwd(hd, wh, da)
            return (gx, gh_prev, gc_prev, gwx, gwh,
                    dai * cd, daf * cd, dao * cn, gb)

        tape.record(
            (h_out, c_out),
            (x, state.h, state.c, params.w_x, params.w_h,
             params.w_ci, params.w_cf, params.w_co, params.bias),
            bwd)
    return LayerState(h_out, c_out)


def stack_step(x: Tensor, states: list[LayerState], config: FexmConfig,
               params: list[ConvLstmLayerParams]) -> tuple[Tensor, list[LayerState]]:
    """Chain the layer cells: layer 1 consumes the input tensor, layer j > 1
    the hidden state of layer j-1. Returns the top hidden state and the
    updated per-layer states."""
    if len(states) != config.r or len(params) != config.r:
        raise ShapeError(
            f"expected {config.r} states/params, got {len(states)}/{len(params)}")
    new_states = []
    feed = x
    for state, layer in zip(states, params):
        new = cell_step(feed, state, layer)
        new_states.append(new)
        feed = new.h
    return feed, new_states
