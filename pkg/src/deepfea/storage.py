"""Bit-exact on-disk formats and deterministic splitting.

Dataset directory: `manifest.json` plus one `sim_%04d.bin` per simulation.
Each .bin is an 8-byte little-endian payload length, the payload, and a
4-byte little-endian CRC-32 of the payload. The payload is little-endian
IEEE-754 float64, row-major, per frame in this channel order: node
x-coordinates, node y-coordinates[, z], node x-displacements, ...,
element effective stress, element effective strain. Frame times are not
stored; they are frame_index * record_dt.

Model directory: `model.json` (architecture, normalization stats, training
config snapshot, optional metrics of record, parameter layout) plus
`model.bin` holding the parameter tensors concatenated in canonical order
inside the same length/CRC envelope.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .convlstm import ConvLstmLayerParams, FexmConfig
from .errors import CorruptDatasetError, ShapeError, SplitError
from .fem import Frame, MaterialLEM, SimulationRecord
from .meshes import LoadSpec, MeshTopology, grid_topology
from .network import NepArchitecture, NepModel, PmParams
from .normalization import ChannelStats, NormalizationStats

SCHEMA_VERSION = 1


def _write_blob(path: Path, payload: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def _read_blob(path: Path) -> bytes:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorruptDatasetError(f"{path.name}: {exc}") from exc
    if len(raw) < 12:
        raise CorruptDatasetError(f"{path.name}: truncated header")
    (length,) = struct.unpack("<Q", raw[:8])
    if len(raw) != 12 + length:
        raise CorruptDatasetError(
            f"{path.name}: expected {12 + length} bytes, found {len(raw)}")
    payload = raw[8:8 + length]
    (crc,) = struct.unpack("<I", raw[8 + length:])
    if zlib.crc32(payload) != crc:
        raise CorruptDatasetError(f"{path.name}: CRC mismatch")
    return payload


def expected_sim_bytes(topology: MeshTopology, t_frames: int) -> int:
    n, e, nd = topology.n_nodes, topology.n_elements, topology.ndim
    return 12 + 8 * t_frames * (2 * nd * n + 2 * e)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def _frame_bytes(frame: Frame, nd: int) -> bytes:
    parts = [frame.coords.reshape(nd, -1), frame.displacements.reshape(nd, -1)]
    arr = np.concatenate([np.concatenate(parts, axis=0).reshape(-1),
                          frame.sigma_eff.reshape(-1),
                          frame.eps_eff.reshape(-1)])
    return arr.astype("<f8").tobytes()


def write_dataset(records: list[SimulationRecord], directory,
                  extra_meta: dict | None = None) -> dict:
    """Serialize records; returns the manifest dict (also written to disk)."""
    if not records:
        raise SplitError("refusing to write an empty dataset")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    topo = records[0].topology
    mat = records[0].material
    t_frames = records[0].T
    record_dt = records[0].record_dt
    sims = []
    for i, rec in enumerate(records):
        if rec.topology.node_dims != topo.node_dims or rec.T != t_frames:
            raise ShapeError("dataset mixes topologies or frame counts")
        payload = b"".join(_frame_bytes(f, topo.ndim) for f in rec.frames)
        name = f"sim_{i:04d}.bin"
        _write_blob(directory / name, payload)
        sims.append({
            "file": name,
            "load_node": rec.load.node_index,
            "angle_deg": rec.load.angle_deg,
            "max_magnitude": rec.load.max_magnitude,
            "seed": rec.seed,
            "bytes": 12 + len(payload),
        })
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "mesh": {"node_dims": list(topo.node_dims), "spacing": topo.spacing},
        "material": {"young_modulus": mat.young_modulus,
                     "poisson_ratio": mat.poisson_ratio,
                     "density": mat.density},
        "t_frames": t_frames,
        "record_dt": record_dt,
        "sims": sims,
    }
    if extra_meta:
        manifest["generation"] = dict(extra_meta)
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_dataset(directory) -> tuple[list[SimulationRecord], dict]:
    """Load and verify a dataset directory; raises CorruptDatasetError on any
    missing file, length mismatch, or checksum failure."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except OSError as exc:
        raise CorruptDatasetError(f"manifest.json: {exc}") from exc
    mesh = manifest["mesh"]
    topo = grid_topology(tuple(mesh["node_dims"]), mesh["spacing"])
    mat = MaterialLEM(**manifest["material"])
    t_frames = manifest["t_frames"]
    record_dt = manifest["record_dt"]
    n, e, nd = topo.n_nodes, topo.n_elements, topo.ndim
    frame_len = 2 * nd * n + 2 * e

    records = []
    for sim in manifest["sims"]:
        path = directory / sim["file"]
        if not path.exists():
            raise CorruptDatasetError(f"{sim['file']}: missing")
        if path.stat().st_size != sim["bytes"]:
            raise CorruptDatasetError(
                f"{sim['file']}: size {path.stat().st_size} != {sim['bytes']}")
        payload = _read_blob(path)
        values = np.frombuffer(payload, dtype="<f8")
        if values.size != t_frames * frame_len:
            raise CorruptDatasetError(f"{sim['file']}: wrong value count")
        load = LoadSpec(sim["load_node"], sim["angle_deg"], sim["max_magnitude"])
        rec = SimulationRecord(topo, mat, load, record_dt, seed=sim["seed"])
        for t in range(t_frames):
            chunk = values[t * frame_len:(t + 1) * frame_len]
            coords = chunk[:nd * n].reshape(nd, *topo.node_dims).copy()
            disp = chunk[nd * n:2 * nd * n].reshape(nd, *topo.node_dims).copy()
            sig = chunk[2 * nd * n:2 * nd * n + e].reshape(topo.element_dims).copy()
            eps = chunk[2 * nd * n + e:].reshape(topo.element_dims).copy()
            rec.frames.append(Frame(t * record_dt, coords, disp, sig, eps))
        records.append(rec)
    return records, manifest


def split(records: list, ratio: float, seed: int) -> tuple[list, list]:
    """Seed-deterministic shuffle split: ceil(ratio*n) train, rest test."""
    n = len(records)
    if n < 2:
        raise SplitError(f"cannot split {n} simulations")
    if not 0.0 < ratio < 1.0:
        raise SplitError(f"split ratio must be in (0,1), got {ratio}")
    perm = np.random.default_rng(seed).permutation(n)
    k = int(np.ceil(ratio * n))
    train = [records[i] for i in perm[:k]]
    test = [records[i] for i in perm[k:]]
    return train, test


# ---------------------------------------------------------------------------
# model archives
# ---------------------------------------------------------------------------

def _stats_to_json(stats: NormalizationStats) -> dict:
    def enc(group):
        return [[s.lo, s.hi, s.passthrough] for s in group]
    return {"input_channels": enc(stats.input_channels),
            "node_outputs": enc(stats.node_outputs),
            "element_outputs": enc(stats.element_outputs)}


def _stats_from_json(blob: dict) -> NormalizationStats:
    def dec(group):
        return tuple(ChannelStats(lo, hi, bool(p)) for lo, hi, p in group)
    return NormalizationStats(dec(blob["input_channels"]),
                              dec(blob["node_outputs"]),
                              dec(blob["element_outputs"]))


def save_model(directory, model: NepModel, stats: NormalizationStats,
               train_config: dict | None = None,
               metrics: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    named = model.parameters()
    payload = b"".join(t.data.astype("<f8").tobytes() for _, t in named)
    _write_blob(directory / "model.bin", payload)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "architecture": {
            "node_dims": list(model.arch.node_dims),
            "channels": list(model.arch.fexm.channels),
            "kernel": model.arch.fexm.kernel,
            "k_n": model.arch.k_n,
            "k_e": model.arch.k_e,
        },
        "normalization": _stats_to_json(stats),
        "train_config": train_config or {},
        "metrics": metrics or {},
        "param_layout": [[name, list(t.data.shape)] for name, t in named],
        "param_count": int(sum(t.data.size for _, t in named)),
    }
    (directory / "model.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_model(directory) -> tuple[NepModel, NormalizationStats, dict]:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "model.json").read_text())
    except OSError as exc:
        raise CorruptDatasetError(f"model.json: {exc}") from exc
    arch_blob = manifest["architecture"]
    arch = NepArchitecture(tuple(arch_blob["node_dims"]),
                           FexmConfig(tuple(arch_blob["channels"]),
                                      arch_blob["kernel"]),
                           k_n=arch_blob["k_n"], k_e=arch_blob["k_e"])
    payload = _read_blob(directory / "model.bin")
    if len(payload) != manifest["param_count"] * 8:
        raise CorruptDatasetError(
            f"model.bin: payload {len(payload)} bytes != "
            f"{manifest['param_count']} float64 parameters")
    values = np.frombuffer(payload, dtype="<f8")

    tensors = {}
    offset = 0
    for name, shape in manifest["param_layout"]:
        size = int(np.prod(shape)) if shape else 1
        tensors[name] = Tensor(values[offset:offset + size]
                               .reshape([int(s) for s in shape]).copy())
        offset += size
    if offset != values.size:
        raise CorruptDatasetError("model.bin: layout does not cover payload")

    layers = []
    for i in range(arch.fexm.r):
        layers.append(ConvLstmLayerParams(
            tensors[f"layer{i}.w_x"], tensors[f"layer{i}.w_h"],
            tensors[f"layer{i}.w_ci"], tensors[f"layer{i}.w_cf"],
            tensors[f"layer{i}.w_co"], tensors[f"layer{i}.bias"]))
    pm = PmParams(tensors["pm.node_w"], tensors["pm.node_b"],
                  tensors["pm.elem_w"], tensors["pm.elem_b"])
    model = NepModel(arch, layers, pm)
    stats = _stats_from_json(manifest["normalization"])
    return model, stats, manifest
