"""Evaluation: R^2 / NMAE / NRMSE per output parameter, plus solver-vs-
surrogate timing.

Conventions: metrics are computed in physical units on frames 1..T-1 (frame 0
is the given initial condition). R^2 pools every simulation, node/element and
frame of a parameter; NMAE and NRMSE normalize per simulation by that
simulation's ground-truth value range and then average over simulations.
Evaluation rollouts are fully autoregressive: only the initial frame of a
test record is read before predictions are complete.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ._threads import blas_threads
from .autodiff import Tensor
from .errors import ShapeError, UndefinedMetricError
from .fem import Frame, SimulationRecord
from .meshes import LoadSpec, MeshTopology, build_input_tensor
from .network import NepModel
from .normalization import NormalizationStats


def r_squared(gt, pred) -> float:
    """Coefficient of determination over pooled values."""
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    if gt.shape != pred.shape or gt.size < 2:
        raise ShapeError("r_squared needs two equal-length vectors of size >= 2")
    denom = float(((gt - gt.mean()) ** 2).sum())
    if denom == 0.0:
        raise UndefinedMetricError("ground truth has zero variance")
    return 1.0 - float(((gt - pred) ** 2).sum()) / denom


def _per_sim_norm_error(sims, reducer) -> float:
    if not sims:
        raise UndefinedMetricError("no simulations to evaluate")
    acc = 0.0
    for j, (gt, pred) in enumerate(sims):
        gt = np.asarray(gt, dtype=np.float64).reshape(-1)
        pred = np.asarray(pred, dtype=np.float64).reshape(-1)
        if gt.shape != pred.shape or gt.size == 0:
            raise ShapeError("per-simulation value sets must align")
        rng = float(gt.max() - gt.min())
        if rng == 0.0:
            raise UndefinedMetricError(
                f"simulation {j}: degenerate ground-truth range")
        acc += reducer(gt - pred) / rng
    return 100.0 * acc / len(sims)


def nmae(sims) -> float:
    """Mean absolute error normalized by each sim's ground-truth range (%).
    `sims` is a sequence of (gt values, predicted values) pairs."""
    return _per_sim_norm_error(sims, lambda d: float(np.abs(d).mean()))


def nrmse(sims) -> float:
    """Root-mean-square analogue of nmae (%)."""
    return _per_sim_norm_error(sims, lambda d: float(np.sqrt((d * d).mean())))


def resultant_displacement(*components) -> np.ndarray:
    """Euclidean norm across displacement components."""
    stacked = np.stack([np.asarray(c, dtype=np.float64) for c in components])
    return np.sqrt((stacked ** 2).sum(axis=0))


# ---------------------------------------------------------------------------
# autoregressive prediction
# ---------------------------------------------------------------------------

def autoregressive_rollout(model: NepModel, stats: NormalizationStats,
                           topology: MeshTopology, load: LoadSpec,
                           t_total: int, initial_coords: np.ndarray):
    """Predict frames 1..t_total-1 from the initial coordinates alone.

    Returns (coords, sigma, eps): physical-unit arrays of shapes
    (t_total-1, ndim, *grid), (t_total-1, *egrid), (t_total-1, *egrid).
    """
    if topology.node_dims != model.arch.node_dims:
        raise ShapeError("model and topology grids differ")
    nd = topology.ndim
    states = model.init_state()
    coords_phys = np.asarray(initial_coords, dtype=np.float64)
    coords_out, sigma_out, eps_out = [], [], []
    for t in range(t_total - 1):
        raw = build_input_tensor(coords_phys, load, topology, t, t_total)
        x = Tensor(stats.normalize_input(raw.channels), check=False)
        y_n, y_e, states = model.forward(x, states)
        coords_phys = stats.denormalize_node(y_n.data)
        elem = stats.denormalize_element(y_e.data)
        coords_out.append(coords_phys)
        sigma_out.append(elem[0])
        eps_out.append(elem[1])
    return np.array(coords_out), np.array(sigma_out), np.array(eps_out)


def predict_record(model: NepModel, stats: NormalizationStats,
                   topology: MeshTopology, load: LoadSpec, t_total: int,
                   record_dt: float, material=None) -> SimulationRecord:
    """Package an autoregressive rollout as a SimulationRecord."""
    from .fem import MaterialLEM

    rest = topology.rest_coordinates
    coords, sigma, eps = autoregressive_rollout(
        model, stats, topology, load, t_total, rest)
    rec = SimulationRecord(topology, material or MaterialLEM(), load, record_dt)
    zeros_e = np.zeros(topology.element_dims)
    rec.frames.append(Frame(0.0, rest.copy(), np.zeros_like(rest),
                            zeros_e.copy(), zeros_e.copy()))
    for t in range(t_total - 1):
        rec.frames.append(Frame((t + 1) * record_dt, coords[t],
                                coords[t] - rest, sigma[t], eps[t]))
    return rec


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterMetrics:
    r2: float
    nmae_pct: float
    nrmse_pct: float


@dataclass(frozen=True)
class TimingReport:
    surrogate_mean_s: float
    oracle_mean_s: float
    speedup: float
    n_sims: int


@dataclass
class MetricsReport:
    parameters: dict[str, ParameterMetrics]
    n_sims: int
    values_per_sim: dict[str, int]
    timing: TimingReport | None = None

    PARAM_ORDER = ("sigma", "eps", "d_x", "d_y", "d_z", "r_d")

    def ordered(self):
        return [(p, self.parameters[p]) for p in self.PARAM_ORDER
                if p in self.parameters]

    def to_csv(self) -> str:
        lines = ["parameter,r2,nmae_pct,nrmse_pct"]
        for name, m in self.ordered():
            lines.append(f"{name},{m.r2:.6f},{m.nmae_pct:.6f},{m.nrmse_pct:.6f}")
        return "\n".join(lines) + "\n"

    def timing_csv(self) -> str:
        if self.timing is None:
            raise UndefinedMetricError("no timing data collected")
        t = self.timing
        return ("quantity,value\n"
                f"surrogate_mean_s,{t.surrogate_mean_s:.6f}\n"
                f"oracle_mean_s,{t.oracle_mean_s:.6f}\n"
                f"speedup,{t.speedup:.4f}\n"
                f"n_sims,{t.n_sims}\n")

    def to_text(self) -> str:
        rows = [f"{'parameter':>10} {'R^2':>10} {'NMAE %':>10} {'NRMSE %':>10}"]
        for name, m in self.ordered():
            rows.append(f"{name:>10} {m.r2:>10.4f} {m.nmae_pct:>10.4f} "
                        f"{m.nrmse_pct:>10.4f}")
        rows.append(f"simulations: {self.n_sims}")
        if self.timing is not None:
            t = self.timing
            rows.append(f"inference {t.surrogate_mean_s:.3f}s vs oracle "
                        f"{t.oracle_mean_s:.3f}s per sim "
                        f"(speedup {t.speedup:.1f}x, {t.n_sims} sims)")
        return "\n".join(rows) + "\n"


def evaluate(model: NepModel, records: list[SimulationRecord],
             stats: NormalizationStats) -> MetricsReport:
    """Fully autoregressive evaluation over a test set."""
    if not records:
        raise UndefinedMetricError("empty test set")
    topo = records[0].topology
    nd = topo.ndim
    names = ["sigma", "eps"] + [f"d_{ax}" for ax in "xyz"[:nd]] + ["r_d"]
    per_sim: dict[str, list] = {n: [] for n in names}

    for rec in records:
        if rec.topology.node_dims != topo.node_dims:
            raise ShapeError("test set mixes topologies")
        with blas_threads(1):
            coords, sigma, eps = autoregressive_rollout(
                model, stats, rec.topology, rec.load, rec.T, rec.frames[0].coords)
        rest = rec.topology.rest_coordinates
        disp_pred = coords - rest[None]
        gt_disp = np.array([f.displacements for f in rec.frames[1:]])
        gt_sigma = np.array([f.sigma_eff for f in rec.frames[1:]])
        gt_eps = np.array([f.eps_eff for f in rec.frames[1:]])

        per_sim["sigma"].append((gt_sigma.ravel(), sigma.ravel()))
        per_sim["eps"].append((gt_eps.ravel(), eps.ravel()))
        for ax in range(nd):
            per_sim[f"d_{'xyz'[ax]}"].append(
                (gt_disp[:, ax].ravel(), disp_pred[:, ax].ravel()))
        rd_gt = resultant_displacement(*[gt_disp[:, ax] for ax in range(nd)])
        rd_pred = resultant_displacement(*[disp_pred[:, ax] for ax in range(nd)])
        per_sim["r_d"].append((rd_gt.ravel(), rd_pred.ravel()))

    params = {}
    counts = {}
    for name in names:
        sims = per_sim[name]
        pooled_gt = np.concatenate([g for g, _ in sims])
        pooled_pred = np.concatenate([p for _, p in sims])
        params[name] = ParameterMetrics(
            r2=r_squared(pooled_gt, pooled_pred),
            nmae_pct=nmae(sims),
            nrmse_pct=nrmse(sims))
        counts[name] = sims[0][0].size
    return MetricsReport(params, len(records), counts)


def timing_report(model: NepModel, stats: NormalizationStats,
                  records: list[SimulationRecord], oracle_solver,
                  n_sims: int = 3) -> TimingReport:
    """Wall-clock comparison: autoregressive model rollout vs re-running the
    ground-truth solver (`oracle_solver(record) -> SimulationRecord`)."""
    if len(records) < 3:
        raise UndefinedMetricError("timing comparison needs at least 3 sims")
    sample = records[:max(3, min(n_sims, len(records)))]
    t_model = 0.0
    t_oracle = 0.0
    with blas_threads(1):
        for rec in sample:
            tic = time.perf_counter()
            autoregressive_rollout(model, stats, rec.topology, rec.load, rec.T,
                                   rec.frames[0].coords)
            t_model += time.perf_counter() - tic
            tic = time.perf_counter()
            oracle_solver(rec)
            t_oracle += time.perf_counter() - tic
    n = len(sample)
    mean_model, mean_oracle = t_model / n, t_oracle / n
    return TimingReport(mean_model, mean_oracle, mean_oracle / mean_model, n)
