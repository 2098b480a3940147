"""Scheduled-sampling training of the rollout network.

The teacher-forcing probability decays stepwise, P_s = gamma^floor(epoch/k),
and is floored to exactly 0 once it drops below beta_p, so training ends
fully autoregressive. During a rollout the coordinate channels of each input
past t=0 come from the previous prediction whenever a uniform draw exceeds
P_s. Gradients do not flow through fed-back predictions (they re-enter as
data), and the dual node/element squared-error loss is computed in
normalized space over the whole horizon.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from ._threads import blas_threads
from .autodiff import Tape, Tensor
from .convlstm import FexmConfig
from .errors import ContractError, ShapeError, TrainingDivergedError
from .fem import SimulationRecord
from .network import NepArchitecture, NepModel
from .normalization import NormalizationStats, fit_normalizer

log = logging.getLogger("deepfea.training")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.7
    k: int = 40
    beta_p: float = 0.01
    epochs: int = 600
    batch_size: int = 32
    lr_base: float = 1e-3
    zeta_n: float = 1e4
    zeta_e: float = 1e4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ContractError(f"gamma must be in (0,1), got {self.gamma}")
        if not 0.0 < self.beta_p < 1.0:
            raise ContractError(f"beta_p must be in (0,1), got {self.beta_p}")
        if self.k < 1 or self.epochs < 1:
            raise ContractError("k and epochs must be >= 1")

    def learning_rate(self, p_s: float) -> float:
        # monotone coupling to the schedule with a 10% floor
        return self.lr_base * (0.1 + 0.9 * p_s)


def ps_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Teacher-forcing probability at `epoch` (0-based)."""
    if epoch < 0:
        raise ContractError("epoch must be >= 0")
    p_s = cfg.gamma ** (epoch // cfg.k)
    return 0.0 if p_s < cfg.beta_p else p_s


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------

@dataclass
class SimTensors:
    """Normalized per-frame arrays of one simulation, precomputed once."""
    q_norm: np.ndarray      # (T, ndim, *grid) ground-truth coordinate channels
    static: np.ndarray      # (T, ndim+1, *grid) force + constraint channels
    node_gt: np.ndarray     # (T, K_n, *grid) normalized node targets
    elem_gt: np.ndarray     # (T, K_e, *egrid) normalized element targets


def prepare_sim(record: SimulationRecord, stats: NormalizationStats) -> SimTensors:
    from .meshes import build_input_tensor

    topo = record.topology
    nd = topo.ndim
    t_total = record.T
    q_norm, static, node_gt, elem_gt = [], [], [], []
    for t, frame in enumerate(record.frames):
        raw = build_input_tensor(frame.coords, record.load, topo, t, t_total)
        norm = stats.normalize_input(raw.channels)
        q_norm.append(norm[:nd])
        static.append(norm[nd:])
        node_gt.append(stats.normalize_node(frame.coords))
        elem_gt.append(stats.normalize_element(
            np.stack([frame.sigma_eff, frame.eps_eff])))
    return SimTensors(np.array(q_norm), np.array(static),
                      np.array(node_gt), np.array(elem_gt))


def _rollout_prepared(sim: SimTensors, model: NepModel, stats: NormalizationStats,
                      p_s: float, rng: np.random.Generator | None):
    """Run the network over the sim horizon. rng=None means fully
    autoregressive (every step past t=0 uses the previous prediction)."""
    t_total = sim.q_norm.shape[0]
    nd = sim.q_norm.shape[1]
    states = model.init_state()
    preds_n: list[Tensor] = []
    preds_e: list[Tensor] = []
    trace: list[bool] = []
    fed_back = None   # physical coordinates from the previous prediction
    for t in range(t_total - 1):
        if t == 0:
            q = sim.q_norm[0]
        else:
            replaced = True if rng is None else bool(rng.random() > p_s)
            trace.append(replaced)
            if replaced:
                q = np.stack([stats.input_channels[ax].normalize(fed_back[ax])
                              for ax in range(nd)])
            else:
                q = sim.q_norm[t]
        x = Tensor(np.concatenate([q, sim.static[t]]), check=False)
        y_n, y_e, states = model.forward(x, states)
        preds_n.append(y_n)
        preds_e.append(y_e)
        fed_back = stats.denormalize_node(y_n.data)
    return preds_n, preds_e, trace


def rollout(record: SimulationRecord, model: NepModel, stats: NormalizationStats,
            p_s: float, rng: np.random.Generator | None):
    """Scheduled-sampling rollout over a simulation record. Returns the
    normalized node/element prediction sequences (for frames 1..T-1) and the
    per-step replacement trace."""
    return _rollout_prepared(prepare_sim(record, stats), model, stats, p_s, rng)


# ---------------------------------------------------------------------------
# loss and optimizer
# ---------------------------------------------------------------------------

def ne_loss(pred_n: list[Tensor], gt_n, pred_e: list[Tensor], gt_e,
            zeta_n: float, zeta_e: float) -> Tensor:
    """zeta_n * MSE over all node outputs and steps + zeta_e * likewise for
    element outputs, as a differentiable scalar."""
    if len(pred_n) != len(gt_n) or len(pred_e) != len(gt_e):
        raise ShapeError("prediction/ground-truth sequence length mismatch")
    if not pred_n:
        raise ShapeError("empty prediction sequence")

    def branch(preds, gts, zeta):
        total = None
        count = 0
        for p, g in zip(preds, gts):
            if p.data.shape != np.shape(g):
                raise ShapeError(f"{p.data.shape} vs {np.shape(g)}")
            term = ad.sq_diff_sum(p, Tensor(np.asarray(g, dtype=np.float64),
                                            check=False))
            total = term if total is None else ad.add(total, term)
            count += p.data.size
        return ad.scale(total, zeta / count)

    return ad.add(branch(pred_n, gt_n, zeta_n), branch(pred_e, gt_e, zeta_e))


class AdamState:
    """First/second moment accumulators for one parameter list."""

    def __init__(self, params: list[Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.step_count = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState,
              lr: float) -> None:
    """Standard bias-corrected Adam update, in place."""
    if len(grads) != len(params):
        raise ShapeError("gradient list does not match parameter list")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step_count
    c2 = 1.0 - b2 ** state.step_count
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    loss: float
    p_s: float
    lr: float


@dataclass
class TrainResult:
    model: NepModel
    stats: NormalizationStats
    history: list[EpochStats] = field(default_factory=list)


def train(records: list[SimulationRecord], cfg: TrainConfig,
          fexm: FexmConfig) -> TrainResult:
    """Full scheduled-sampling training on the given records."""
    if not records:
        raise ContractError("training set is empty")
    topo = records[0].topology
    stats = fit_normalizer(records)
    arch = NepArchitecture(topo.node_dims, fexm, k_n=topo.ndim)

    rng = np.random.default_rng(cfg.seed)
    model = NepModel.initialize(arch, rng)
    params = [t for _, t in model.parameters()]
    opt = AdamState(params)
    prepared = [prepare_sim(r, stats) for r in records]

    result = TrainResult(model, stats)
    n = len(records)
    with blas_threads(1):
        for epoch in range(cfg.epochs):
            tic = time.perf_counter()
            p_s = ps_schedule(epoch, cfg)
            lr = cfg.learning_rate(p_s)
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                model.zero_grads()
                for idx in batch:
                    sim = prepared[idx]
                    with Tape() as tape:
                        preds_n, preds_e, _ = _rollout_prepared(
                            sim, model, stats, p_s, rng)
                        loss = ne_loss(preds_n, sim.node_gt[1:],
                                       preds_e, sim.elem_gt[1:],
                                       cfg.zeta_n, cfg.zeta_e)
                        value = loss.item()
                        if not np.isfinite(value):
                            raise TrainingDivergedError(
                                f"non-finite loss at epoch {epoch}, sim {idx}, "
                                f"P_s={p_s:.4f}, lr={lr:.2e}")
                        # average the batch: scale each sim's contribution
                        tape.backward(ad.scale(loss, 1.0 / len(batch)))
                    epoch_loss += value
                grads = [p.grad_or_zeros() for p in params]
                adam_step(params, grads, opt, lr)
            epoch_loss /= n
            result.history.append(EpochStats(epoch, epoch_loss, p_s, lr))
            log.info("epoch %d: loss=%.6g P_s=%.4f lr=%.3g wall=%.2fs",
                     epoch, epoch_loss, p_s, lr, time.perf_counter() - tic)
    return result
