"""Command-line pipeline: gen | train | predict | eval | sweep | plot.

Artifacts land under --out:
  gen      <out>/dataset/            binary dataset + manifest
  train    <out>/model/, history.csv
  predict  <out>/prediction/         single-sim dataset written by the model
  eval     <out>/metrics.csv|txt, timing.csv
  sweep    <out>/sweep.csv, arch_*/  one trained model per architecture
  plot     <out>/sim<k>_*.csv|svg

Dataset/model locations default to <out>/dataset and <out>/model and can be
pointed elsewhere via the "paths" section of the config file. Verbosity comes
from DEEPFEA_LOG (quiet|error|warning|info|debug). Every command writes its
fully resolved configuration, and identical (config, seed) runs reproduce
artifacts byte-for-byte (timing.csv, which measures wall time, is the
documented exception).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import fem, metrics, plots, storage
from .config import config_json, resolve_config
from .convlstm import FexmConfig
from .errors import ConfigError, DeepFeaError, InvalidLoadError
from .meshes import LoadSpec, grid_topology
from .training import TrainConfig, train

log = logging.getLogger("deepfea")

_LOG_LEVELS = {"quiet": logging.CRITICAL, "error": logging.ERROR,
               "warning": logging.WARNING, "info": logging.INFO,
               "debug": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("DEEPFEA_LOG", "info").strip().lower()
    if name not in _LOG_LEVELS:
        raise ConfigError(f"DEEPFEA_LOG must be one of {sorted(_LOG_LEVELS)}")
    logging.basicConfig(level=_LOG_LEVELS[name],
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _topology(cfg: dict):
    mesh = cfg["mesh"]
    return grid_topology(tuple(mesh["node_dims"]), mesh["spacing"],
                         mesh["constrained"])


def _material(cfg: dict) -> fem.MaterialLEM:
    return fem.MaterialLEM(**cfg["material"])


def _record_dt(cfg: dict) -> float:
    gen = cfg["generation"]
    return gen["duration"] / gen["t_frames"]


def _select_load_nodes(topology, spec) -> list[int]:
    free = topology.free_boundary_nodes()
    if spec == "all":
        return free
    if isinstance(spec, int):
        if not 1 <= spec <= len(free):
            raise ConfigError(f"load_nodes count {spec} not in [1, {len(free)}]")
        if spec == 1:
            return [free[-1]]
        return [free[round(k * (len(free) - 1) / (spec - 1))] for k in range(spec)]
    nodes = [int(n) for n in spec]
    for n in nodes:
        if n not in free:
            raise InvalidLoadError(f"configured load node {n} is not a free "
                                   "boundary node")
    return nodes


def _load_grid(topology, cfg: dict) -> list[LoadSpec]:
    gen = cfg["generation"]
    nodes = _select_load_nodes(topology, gen["load_nodes"])
    return [LoadSpec(node, float(angle), float(mag))
            for node in nodes
            for angle in gen["angles"]
            for mag in gen["magnitudes"]]


def _dataset_dir(cfg: dict, out: Path) -> Path:
    configured = cfg["paths"]["dataset"]
    return Path(configured) if configured else out / "dataset"


def _model_dir(cfg: dict, out: Path) -> Path:
    configured = cfg["paths"]["model"]
    return Path(configured) if configured else out / "model"


def _write_config(cfg: dict, out: Path, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"config_{command}.json").write_text(config_json(cfg))
    log.info("resolved config: %s", json.dumps(cfg, sort_keys=True))


def _read_dataset(cfg: dict, out: Path):
    path = _dataset_dir(cfg, out)
    if not (path / "manifest.json").exists():
        raise ConfigError(f"no dataset at {path}; run `deepfea gen` or set "
                          "paths.dataset")
    return storage.read_dataset(path)


def _train_test_split(cfg: dict, records):
    ratio = cfg["training"]["split_ratio"]
    return storage.split(records, ratio, cfg["seed"])


def _oracle_solver(cfg: dict, manifest: dict):
    gen = dict(cfg["generation"])
    gen.update(manifest.get("generation", {}))

    def solve(rec):
        return fem.run_simulation(
            rec.topology, rec.material, rec.load,
            duration=rec.T * rec.record_dt, record_dt=rec.record_dt,
            thickness=gen["thickness"], damping=gen["damping"],
            safety=gen["safety"])

    return solve


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _gen_one(payload):
    topology, material, load, gen, seed = payload
    return fem.run_simulation(
        topology, material, load, duration=gen["duration"],
        record_dt=gen["duration"] / gen["t_frames"],
        thickness=gen["thickness"], damping=gen["damping"],
        safety=gen["safety"], seed=seed)


def cmd_gen(cfg: dict, out: Path, threads: int) -> None:
    topology = _topology(cfg)
    material = _material(cfg)
    loads = _load_grid(topology, cfg)
    gen = cfg["generation"]
    log.info("generating %d simulations (T=%d, dt=%.4gs)", len(loads),
             gen["t_frames"], _record_dt(cfg))
    payloads = [(topology, material, load, gen, i)
                for i, load in enumerate(loads)]
    tic = time.perf_counter()
    if threads > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(_gen_one, payloads, chunksize=1))
    else:
        records = [_gen_one(p) for p in payloads]
    meta = {"thickness": gen["thickness"], "damping": gen["damping"],
            "safety": gen["safety"], "duration": gen["duration"],
            "base_seed": cfg["seed"]}
    manifest = storage.write_dataset(records, _dataset_dir(cfg, out), meta)
    log.info("wrote %d sims to %s in %.1fs", len(manifest["sims"]),
             _dataset_dir(cfg, out), time.perf_counter() - tic)


def _train_config(cfg: dict) -> TrainConfig:
    tr = cfg["training"]
    return TrainConfig(gamma=tr["gamma"], k=tr["k"], beta_p=tr["beta_p"],
                       epochs=tr["epochs"], batch_size=tr["batch_size"],
                       lr_base=tr["lr_base"], zeta_n=tr["zeta_n"],
                       zeta_e=tr["zeta_e"], seed=cfg["seed"])


def _history_csv(history) -> str:
    lines = ["epoch,loss,p_s,lr"]
    lines += [f"{h.epoch},{h.loss!r},{h.p_s!r},{h.lr!r}" for h in history]
    return "\n".join(lines) + "\n"


def cmd_train(cfg: dict, out: Path) -> None:
    records, _ = _read_dataset(cfg, out)
    train_set, test_set = _train_test_split(cfg, records)
    log.info("training on %d sims (%d held out)", len(train_set), len(test_set))
    fexm = FexmConfig(tuple(cfg["network"]["channels"]), cfg["network"]["kernel"])
    result = train(train_set, _train_config(cfg), fexm)
    run_metrics = {"first_epoch_loss": result.history[0].loss,
                   "final_epoch_loss": result.history[-1].loss}
    storage.save_model(_model_dir(cfg, out), result.model, result.stats,
                       train_config=dict(cfg["training"], seed=cfg["seed"]),
                       metrics=run_metrics)
    (out / "history.csv").write_text(_history_csv(result.history))
    log.info("model saved to %s (loss %.4g -> %.4g)", _model_dir(cfg, out),
             run_metrics["first_epoch_loss"], run_metrics["final_epoch_loss"])


def cmd_predict(cfg: dict, out: Path) -> None:
    model, stats, _ = storage.load_model(_model_dir(cfg, out))
    topology = _topology(cfg)
    pred_cfg = cfg["predict"]
    if pred_cfg["load_node"] is None:
        raise ConfigError("predict.load_node must be set")
    load = LoadSpec(int(pred_cfg["load_node"]), float(pred_cfg["angle_deg"]),
                    float(pred_cfg["max_magnitude"]))
    load.validate(topology)
    record = metrics.predict_record(model, stats, topology, load,
                                    cfg["generation"]["t_frames"],
                                    _record_dt(cfg), material=_material(cfg))
    storage.write_dataset([record], out / "prediction",
                          {"predicted": True, "base_seed": cfg["seed"]})
    log.info("prediction written to %s", out / "prediction")


def cmd_eval(cfg: dict, out: Path) -> None:
    records, manifest = _read_dataset(cfg, out)
    _, test_set = _train_test_split(cfg, records)
    model, stats, _ = storage.load_model(_model_dir(cfg, out))
    report = metrics.evaluate(model, test_set, stats)
    timing_sample = test_set if len(test_set) >= 3 else records
    report.timing = metrics.timing_report(model, stats, timing_sample,
                                          _oracle_solver(cfg, manifest))
    (out / "metrics.csv").write_text(report.to_csv())
    (out / "timing.csv").write_text(report.timing_csv())
    (out / "metrics.txt").write_text(report.to_text())
    log.info("evaluation over %d test sims:\n%s", len(test_set), report.to_text())


def cmd_sweep(cfg: dict, out: Path) -> None:
    records, _ = _read_dataset(cfg, out)
    train_set, test_set = _train_test_split(cfg, records)
    rows = ["architecture,parameter,r2,nmae_pct,nrmse_pct"]
    for channels in cfg["sweep"]["architectures"]:
        label = "-".join(str(c) for c in channels)
        log.info("sweep: training architecture %s", label)
        fexm = FexmConfig(tuple(channels), cfg["network"]["kernel"])
        result = train(train_set, _train_config(cfg), fexm)
        report = metrics.evaluate(result.model, test_set, result.stats)
        storage.save_model(out / f"arch_{label}" / "model", result.model,
                           result.stats,
                           train_config=dict(cfg["training"], seed=cfg["seed"]))
        for name, m in report.ordered():
            rows.append(f"{label},{name},{m.r2:.6f},{m.nmae_pct:.6f},"
                        f"{m.nrmse_pct:.6f}")
    (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    log.info("sweep table written to %s", out / "sweep.csv")


def cmd_plot(cfg: dict, out: Path, sim_index: int, frames_arg: str) -> None:
    import numpy as np

    records, _ = _read_dataset(cfg, out)
    if not 0 <= sim_index < len(records):
        raise ConfigError(f"--sim {sim_index} out of range (dataset has "
                          f"{len(records)} sims)")
    rec = records[sim_index]
    nd = rec.topology.ndim
    times = [f.time for f in rec.frames]
    mean_disp = [float(metrics.resultant_displacement(
        *[f.displacements[ax] for ax in range(nd)]).mean()) for f in rec.frames]
    mean_sig = [float(f.sigma_eff.mean()) for f in rec.frames]
    mean_eps = [float(f.eps_eff.mean()) for f in rec.frames]

    stem = f"sim{sim_index:04d}"
    lines = ["frame,time_s,mean_resultant_displacement_m,mean_eps,mean_sigma_pa"]
    for t, (tm, d, e, s) in enumerate(zip(times, mean_disp, mean_eps, mean_sig)):
        lines.append(f"{t},{tm!r},{d!r},{e!r},{s!r}")
    (out / f"{stem}_timeseries.csv").write_text("\n".join(lines) + "\n")

    for name, values, ylabel in [
            ("displacement", mean_disp, "mean resultant displacement [m]"),
            ("strain", mean_eps, "mean effective strain"),
            ("stress", mean_sig, "mean effective stress [Pa]")]:
        svg = plots.line_chart([(f"average {name}", times, values)],
                               f"{stem}: average {name} vs time", "time [s]",
                               ylabel)
        (out / f"{stem}_{name}.svg").write_text(svg)

    if frames_arg == "default":
        picks = sorted({0, rec.T // 2, rec.T - 1})
    else:
        picks = sorted({int(v) for v in frames_arg.split(",")})
    for t in picks:
        if not 0 <= t < rec.T:
            raise ConfigError(f"frame {t} out of range")
        svg = plots.heatmap(rec.frames[t].sigma_eff,
                            f"{stem} frame {t}: effective stress [Pa]")
        (out / f"{stem}_stress_frame{t:03d}.svg").write_text(svg)
    log.info("plots for sim %d written to %s", sim_index, out)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepfea",
        description="Transient FE surrogate pipeline: generate ground truth, "
                    "train the rollout network, and evaluate it.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, extra in [("gen", ()), ("train", ()), ("predict", ()),
                        ("eval", ()), ("sweep", ()), ("plot", ("sim", "frames"))]:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON overrides applied on top of the profile")
        p.add_argument("--profile", choices=("paper", "desk"), default="desk")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        if "sim" in extra:
            p.add_argument("--sim", type=int, default=0,
                           help="simulation index within the dataset")
            p.add_argument("--frames", default="default",
                           help="comma-separated frame indices for heatmaps")
    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = _parser().parse_args(argv)
        cfg = resolve_config(args.profile, args.config, args.seed)
        out = args.out
        _write_config(cfg, out, args.command)
        if args.command == "gen":
            cmd_gen(cfg, out, args.threads)
        elif args.command == "train":
            cmd_train(cfg, out)
        elif args.command == "predict":
            cmd_predict(cfg, out)
        elif args.command == "eval":
            cmd_eval(cfg, out)
        elif args.command == "sweep":
            cmd_sweep(cfg, out)
        elif args.command == "plot":
            cmd_plot(cfg, out, args.sim, args.frames)
        return 0
    except DeepFeaError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - single machine-readable line
        print(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
