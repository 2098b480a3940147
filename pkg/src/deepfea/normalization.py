"""Per-channel [-1, 1] normalization fitted on the training set.

Input coordinate channels get one (min, max) per axis; force channels share a
single global range across axes so direction information survives; the
constraint flag passes through untouched. Output parameters (coordinates per
axis, effective stress, effective strain) each get their own range. Channels
with a degenerate range map to constant zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StatsError
from .fem import SimulationRecord


@dataclass(frozen=True)
class ChannelStats:
    lo: float
    hi: float
    passthrough: bool = False

    def normalize(self, x: np.ndarray) -> np.ndarray:
        if self.passthrough:
            return np.asarray(x, dtype=np.float64)
        if self.hi == self.lo:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        return 2.0 * (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo) - 1.0

    def denormalize(self, y: np.ndarray) -> np.ndarray:
        if self.passthrough:
            return np.asarray(y, dtype=np.float64)
        if self.hi == self.lo:
            return np.full_like(np.asarray(y, dtype=np.float64), self.lo)
        return self.lo + (np.asarray(y, dtype=np.float64) + 1.0) * (self.hi - self.lo) / 2.0


@dataclass(frozen=True)
class NormalizationStats:
    input_channels: tuple[ChannelStats, ...]    # Q axes, F axes, B
    node_outputs: tuple[ChannelStats, ...]      # displaced coordinate per axis
    element_outputs: tuple[ChannelStats, ...]   # (sigma_eff, eps_eff)

    def normalize_input(self, channels: np.ndarray) -> np.ndarray:
        if channels.shape[0] != len(self.input_channels):
            raise StatsError(
                f"{channels.shape[0]} channels, stats cover {len(self.input_channels)}")
        return np.stack([s.normalize(channels[i])
                         for i, s in enumerate(self.input_channels)])

    def normalize_node(self, fields: np.ndarray) -> np.ndarray:
        return np.stack([s.normalize(fields[i])
                         for i, s in enumerate(self.node_outputs)])

    def denormalize_node(self, fields: np.ndarray) -> np.ndarray:
        return np.stack([s.denormalize(fields[i])
                         for i, s in enumerate(self.node_outputs)])

    def normalize_element(self, fields: np.ndarray) -> np.ndarray:
        return np.stack([s.normalize(fields[i])
                         for i, s in enumerate(self.element_outputs)])

    def denormalize_element(self, fields: np.ndarray) -> np.ndarray:
        return np.stack([s.denormalize(fields[i])
                         for i, s in enumerate(self.element_outputs)])


def fit_normalizer(records: list[SimulationRecord]) -> NormalizationStats:
    """min/max scan over every frame of the training records."""
    if not records:
        raise StatsError("cannot fit normalization on an empty training set")
    nd = records[0].topology.ndim

    coord_lo = np.full(nd, np.inf)
    coord_hi = np.full(nd, -np.inf)
    force_lo, force_hi = 0.0, 0.0   # channels are zero away from the load node
    sig_lo = eps_lo = np.inf
    sig_hi = eps_hi = -np.inf
    for rec in records:
        t_total = rec.T
        for t, frame in enumerate(rec.frames):
            flat = frame.coords.reshape(nd, -1)
            coord_lo = np.minimum(coord_lo, flat.min(axis=1))
            coord_hi = np.maximum(coord_hi, flat.max(axis=1))
            fvec = rec.load.force_vector(t, t_total, nd)
            force_lo = min(force_lo, fvec.min())
            force_hi = max(force_hi, fvec.max())
            sig_lo = min(sig_lo, frame.sigma_eff.min())
            sig_hi = max(sig_hi, frame.sigma_eff.max())
            eps_lo = min(eps_lo, frame.eps_eff.min())
            eps_hi = max(eps_hi, frame.eps_eff.max())

    coord_stats = tuple(ChannelStats(float(coord_lo[i]), float(coord_hi[i]))
                        for i in range(nd))
    force_stats = tuple(ChannelStats(float(force_lo), float(force_hi))
                        for _ in range(nd))
    inputs = coord_stats + force_stats + (ChannelStats(0.0, 1.0, passthrough=True),)
    elements = (ChannelStats(float(sig_lo), float(sig_hi)),
                ChannelStats(float(eps_lo), float(eps_hi)))
    return NormalizationStats(inputs, coord_stats, elements)
