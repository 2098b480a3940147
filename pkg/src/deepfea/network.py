"""Prediction heads and the full node/element rollout network.

The prediction module maps the top ConvLSTM hidden state through two parallel
single-layer convolution branches with tanh outputs: a 1x1(x1) kernel keeps
the node grid for the displaced-coordinate channels, a 2x2(x2) valid kernel
reduces to the element grid for effective stress and strain. Everything is
emitted in normalized [-1, 1] space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .convlstm import ConvLstmLayerParams, FexmConfig, LayerState, init_state, stack_step
from .errors import ShapeError
from .meshes import input_channel_count


class PmParams:
    """Node branch: 1x1-kernel conv, K_n channels. Element branch: 2x2-kernel
    valid conv, K_e channels."""

    def __init__(self, node_w: Tensor, node_b: Tensor, elem_w: Tensor,
                 elem_b: Tensor):
        if any(k != 1 for k in node_w.data.shape[2:]):
            raise ShapeError("node branch kernel must be 1 per axis")
        if any(k != 2 for k in elem_w.data.shape[2:]):
            raise ShapeError("element branch kernel must be 2 per axis")
        self.node_w, self.node_b = node_w, node_b
        self.elem_w, self.elem_b = elem_w, elem_b

    @classmethod
    def initialize(cls, rng: np.random.Generator, hidden: int, k_n: int,
                   k_e: int, ndim: int) -> "PmParams":
        an = np.sqrt(1.0 / hidden)
        ae = np.sqrt(1.0 / (hidden * 2 ** ndim))
        node_w = rng.uniform(-an, an, size=(k_n, hidden, *([1] * ndim)))
        elem_w = rng.uniform(-ae, ae, size=(k_e, hidden, *([2] * ndim)))
        return cls(Tensor(node_w), Tensor(np.zeros(k_n)),
                   Tensor(elem_w), Tensor(np.zeros(k_e)))

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [("node_w", self.node_w), ("node_b", self.node_b),
                ("elem_w", self.elem_w), ("elem_b", self.elem_b)]


def predict(h_last: Tensor, pm: PmParams) -> tuple[Tensor, Tensor]:
    """Map the top hidden state to (node outputs, element outputs)."""
    y_n = ad.tanh(ad.conv_valid(h_last, pm.node_w, pm.node_b))
    y_e = ad.tanh(ad.conv_valid(h_last, pm.elem_w, pm.elem_b))
    return y_n, y_e


@dataclass(frozen=True)
class NepArchitecture:
    node_dims: tuple[int, ...]
    fexm: FexmConfig
    k_n: int
    k_e: int = 2

    @property
    def ndim(self) -> int:
        return len(self.node_dims)

    @property
    def in_channels(self) -> int:
        return input_channel_count(self.ndim)


class NepModel:
    """ConvLSTM stack plus prediction heads with a canonical parameter order."""

    def __init__(self, arch: NepArchitecture, layers: list[ConvLstmLayerParams],
                 pm: PmParams):
        if len(layers) != arch.fexm.r:
            raise ShapeError("layer count does not match architecture")
        self.arch = arch
        self.layers = layers
        self.pm = pm

    @classmethod
    def initialize(cls, arch: NepArchitecture, rng: np.random.Generator) -> "NepModel":
        layers = []
        cin = arch.in_channels
        for u in arch.fexm.channels:
            layers.append(ConvLstmLayerParams.initialize(
                rng, cin, u, arch.fexm.kernel, arch.node_dims))
            cin = u
        pm = PmParams.initialize(rng, arch.fexm.channels[-1], arch.k_n,
                                 arch.k_e, arch.ndim)
        return cls(arch, layers, pm)

    def init_state(self) -> list[LayerState]:
        return init_state(self.arch.fexm, self.arch.node_dims)

    def forward(self, x: Tensor, states: list[LayerState]
                ) -> tuple[Tensor, Tensor, list[LayerState]]:
        """One rollout step: returns normalized node outputs (recurrent),
        element outputs (non-recurrent), and the updated states."""
        if x.data.shape != (self.arch.in_channels, *self.arch.node_dims):
            raise ShapeError(
                f"input shape {x.data.shape} != "
                f"{(self.arch.in_channels, *self.arch.node_dims)}")
        h_last, new_states = stack_step(x, states, self.arch.fexm, self.layers)
        y_n, y_e = predict(h_last, self.pm)
        return y_n, y_e, new_states

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"layer{i}.{name}", t) for name, t in layer.tensors())
        out.extend((f"pm.{name}", t) for name, t in self.pm.tensors())
        return out

    @property
    def n_parameters(self) -> int:
        return sum(t.data.size for _, t in self.parameters())

    def zero_grads(self) -> None:
        for _, t in self.parameters():
            t.grad = None
