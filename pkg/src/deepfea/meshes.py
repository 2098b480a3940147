"""Structured-grid mesh topology, point loads, and network input tensors.

Grid conventions used everywhere in the package:
  * node_dims = (H, W) or (H, W, L); axis 0 indexes height (y), axis 1 width
    (x), axis 2 length (z); node (0, 0[, 0]) sits at the origin and the
    "bottom" face is i == 0.
  * flat node ids are row-major: n = i*W + j for 2D, n = (i*W + j)*L + k
    for 3D.
  * coordinate arrays are channel-first: shape (ndim, *node_dims) with
    component order (x, y[, z]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvalidLoadError, InvalidTopologyError, ShapeError

ALLOWED_ANGLES = (0.0, 45.0, 90.0, 135.0)


def element_dims(node_dims) -> tuple[int, ...]:
    """Element grid extents: one less than the node grid per axis."""
    dims = tuple(int(d) for d in node_dims)
    if len(dims) not in (2, 3) or any(d < 2 for d in dims):
        raise InvalidTopologyError(f"node dims must be >= 2 per axis, got {dims}")
    return tuple(d - 1 for d in dims)


@dataclass(frozen=True)
class MeshTopology:
    node_dims: tuple[int, ...]
    rest_coordinates: np.ndarray   # (ndim, *node_dims), meters
    constrained_mask: np.ndarray   # bool, (*node_dims)
    spacing: float

    def __post_init__(self):
        dims = self.node_dims
        if self.rest_coordinates.shape != (len(dims), *dims):
            raise InvalidTopologyError("rest coordinate array does not match dims")
        if self.constrained_mask.shape != dims:
            raise InvalidTopologyError("constraint mask does not match dims")
        if not self.constrained_mask.any():
            raise InvalidTopologyError("at least one node must be constrained")

    @property
    def ndim(self) -> int:
        return len(self.node_dims)

    @property
    def element_dims(self) -> tuple[int, ...]:
        return element_dims(self.node_dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_dims))

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.element_dims))

    def node_grid_index(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.n_nodes:
            raise ContractError(f"node id {flat} out of range")
        return tuple(int(v) for v in np.unravel_index(flat, self.node_dims))

    def is_boundary(self, flat: int) -> bool:
        idx = self.node_grid_index(flat)
        return any(i == 0 or i == d - 1 for i, d in zip(idx, self.node_dims))

    def boundary_nodes(self) -> list[int]:
        return [n for n in range(self.n_nodes) if self.is_boundary(n)]

    def free_boundary_nodes(self) -> list[int]:
        mask = self.constrained_mask.reshape(-1)
        return [n for n in self.boundary_nodes() if not mask[n]]


def grid_topology(node_dims, spacing: float, constrained: str = "bottom") -> MeshTopology:
    """Regular grid with the selected face fixed.

    Face selectors: bottom/top pick the first axis extremes, left/right the
    second. Raises on dims < 2 or non-positive spacing.
    """
    dims = tuple(int(d) for d in node_dims)
    element_dims(dims)  # validates arity and minimum extent
    if spacing <= 0:
        raise InvalidTopologyError(f"spacing must be positive, got {spacing}")

    grids = np.meshgrid(*[np.arange(d, dtype=np.float64) * spacing for d in dims],
                        indexing="ij")
    # component order (x, y[, z]) maps to grid axes (1, 0[, 2])
    if len(dims) == 2:
        coords = np.stack([grids[1], grids[0]])
    else:
        coords = np.stack([grids[1], grids[0], grids[2]])

    mask = np.zeros(dims, dtype=bool)
    if constrained == "bottom":
        mask[0] = True
    elif constrained == "top":
        mask[-1] = True
    elif constrained == "left":
        mask[:, 0] = True
    elif constrained == "right":
        mask[:, -1] = True
    else:
        raise InvalidTopologyError(f"unknown constrained face {constrained!r}")
    return MeshTopology(dims, coords, mask, float(spacing))


@dataclass(frozen=True)
class LoadSpec:
    """Ramped point load on a free boundary node.

    The instantaneous magnitude attached to frame t of a T-frame simulation is
    max_magnitude*(t+1)/T, so the final frame carries the full load.
    """

    node_index: int
    angle_deg: float
    max_magnitude: float
    ramp: bool = True

    def __post_init__(self):
        if self.angle_deg not in ALLOWED_ANGLES:
            raise InvalidLoadError(
                f"angle {self.angle_deg} not in {ALLOWED_ANGLES}")
        if self.max_magnitude < 0:
            raise InvalidLoadError("negative load magnitude")

    def validate(self, topology: MeshTopology) -> None:
        mask = topology.constrained_mask.reshape(-1)
        if not 0 <= self.node_index < topology.n_nodes:
            raise InvalidLoadError(f"load node {self.node_index} out of range")
        if mask[self.node_index]:
            raise InvalidLoadError(f"load node {self.node_index} is constrained")
        if not topology.is_boundary(self.node_index):
            raise InvalidLoadError(f"load node {self.node_index} is interior")

    def direction(self, ndim: int) -> np.ndarray:
        rad = math.radians(self.angle_deg)
        d = np.array([math.cos(rad), math.sin(rad), 0.0])
        return d[:ndim]

    def magnitude_at(self, t: int, total_steps: int) -> float:
        if not self.ramp:
            return self.max_magnitude
        return self.max_magnitude * (t + 1) / total_steps

    def force_vector(self, t: int, total_steps: int, ndim: int = 2) -> np.ndarray:
        return self.magnitude_at(t, total_steps) * self.direction(ndim)


@dataclass(frozen=True)
class InputTensor:
    """Per-timestep channel stack over the node grid.

    Channel order: coordinates (one map per axis), external force (one map per
    axis, nonzero only at the loaded node), then the constraint flag B
    (0 = fixed, 1 = free). M = 5 for 2D grids, 7 for 3D.
    """

    channels: np.ndarray
    timestep: int

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]


def input_channel_count(ndim: int) -> int:
    return 2 * ndim + 1


def build_input_tensor(coords: np.ndarray, load: LoadSpec, topology: MeshTopology,
                       t: int, total_steps: int) -> InputTensor:
    """Assemble the physical-unit input stack for timestep t."""
    nd = topology.ndim
    if coords.shape != (nd, *topology.node_dims):
        raise ShapeError(
            f"coords shape {coords.shape} != {(nd, *topology.node_dims)}")
    if not 0 <= t < total_steps:
        raise ContractError(f"timestep {t} outside [0, {total_steps})")
    load.validate(topology)

    force = np.zeros_like(coords)
    idx = topology.node_grid_index(load.node_index)
    fvec = load.force_vector(t, total_steps, nd)
    for ax in range(nd):
        force[(ax, *idx)] = fvec[ax]
    b = np.where(topology.constrained_mask, 0.0, 1.0)[None]
    channels = np.concatenate([coords, force, b], axis=0)
    return InputTensor(np.ascontiguousarray(channels), t)
