"""Command-line entry point: dataset generation, training, validation,
correction evaluation, closed-loop runs, scenario batteries, and report
tables, all driven by config files and seeds.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import closedloop as cl
from . import config as cfgmod
from . import mismatch as mm
from . import nn
from . import surrogate as sg
from .config import AppConfig, ConfigError
from .excitation import gen_prs, load_dataset, save_dataset, simulate_dataset

log = logging.getLogger(__name__)

TRAIN_TARGETS = ("m1", "m2", "m3", "agg", "baseline", "all")


def _dataset_path(out: Path, name: str, role: str) -> Path:
    return out / "datasets" / f"{name}_{role}.csv"


def _models_dir(out: Path) -> Path:
    return out / "models"


# ---------------------------------------------------------------------------
# subcommands


def cmd_datagen(args, cfg: AppConfig) -> int:
    out = Path(args.out)
    (out / "datasets").mkdir(parents=True, exist_ok=True)
    outputs = []
    for name in cfgmod.DATASET_NAMES:
        plant = cfg.plant_config(name)
        for role, validation in (("train", False), ("val", True)):
            spec = cfg.prs_spec(name, args.seed, args.scale, validation)
            if validation:
                spec = type(spec)(spec.levels, spec.min_hold, spec.max_hold,
                                  max(spec.length // 3, 60), spec.seed, spec.mode)
            signal = gen_prs(spec)
            dataset = simulate_dataset(
                signal, plant, noise_frac=cfg.noise_frac(validation),
                seed=cfg.noise_seed(name, args.seed, validation),
                gaussian_noise=cfg.get("excitation", "gaussian_noise"))
            path = _dataset_path(out, name, role)
            save_dataset(dataset, path, meta={
                "name": name, "role": role, "seed": spec.seed,
                "config": cfg.digest()})
            outputs.append(path)
            log.info("wrote %s (%d samples, y in [%.3f, %.3f])", path,
                     len(dataset), *dataset.operating_range)
    cfgmod.write_manifest(out, "datagen", cfg, args.seed, args.scale, outputs)
    return 0


def _write_history(result: nn.TrainResult, path: Path) -> None:
    lines = ["epoch,train_loss,val_loss"]
    for e, (tr, va) in enumerate(zip(result.train_loss, result.val_loss)):
        lines.append(f"{e},{tr:.8e},{va:.8e}")
    path.write_text("\n".join(lines) + "\n")


def cmd_train(args, cfg: AppConfig) -> int:
    out = Path(args.out)
    mdir = _models_dir(out)
    scaler = cfg.scaler()
    hidden = cfg.get("train", "hidden")
    p = cfg.get("excitation", "window")
    which = list(cfgmod.DATASET_NAMES) + ["baseline"] \
        if args.which == "all" else [args.which]
    outputs = []

    def data(name, role="train"):
        path = _dataset_path(out, name, role)
        if not path.exists():
            raise FileNotFoundError(f"dataset missing: {path} (run datagen first)")
        return load_dataset(path)

    for name in which:
        tcfg = cfg.train_config(seed=args.seed + 1000 +
                                cfgmod._DATASET_SEED_OFFSET.get(name, 9))
        if name in sg.SUB_MODEL_NAMES:
            net, result = sg.train_sub_model(name, data(name), scaler, tcfg,
                                             seed=tcfg.seed, hidden=hidden, p=p)
            target = mdir / "two_layer"
            target.mkdir(parents=True, exist_ok=True)
            nn.save_model(net, target / f"{name}.bin", extra={"role": name})
            outputs.append(target / f"{name}.bin")
        elif name == "agg":
            target = mdir / "two_layer"
            subs = {n: nn.load_model(target / f"{n}.bin")
                    for n in sg.SUB_MODEL_NAMES}
            net, result = sg.train_aggregator(subs, data("agg"), scaler, tcfg,
                                              seed=tcfg.seed, p=p)
            model = sg.TwoLayerSurrogate(subs, net, scaler, p)
            sg.save_surrogate(model, target)
            outputs.append(target / "surrogate.json")
        else:  # baseline
            net, result = sg.train_baseline(data("agg"), scaler, tcfg,
                                            seed=tcfg.seed, hidden=hidden, p=p)
            model = sg.SingleLstmSurrogate(net, scaler, p)
            sg.save_surrogate(model, mdir / "baseline")
            outputs.append(mdir / "baseline" / "baseline.bin")
        hist = mdir / f"history_{name}.csv"
        _write_history(result, hist)
        outputs.append(hist)
        log.info("trained %s: best val loss %.3e (epoch %d)", name,
                 result.val_loss[result.best_epoch], result.best_epoch)
    cfgmod.write_manifest(out, f"train_{args.which}", cfg, args.seed,
                          args.scale, outputs)
    return 0


def _load_models(out: Path, cfg: AppConfig):
    mdir = _models_dir(out)
    two = sg.load_surrogate(mdir / "two_layer")
    base = sg.load_surrogate(mdir / "baseline")
    return two, base


def cmd_validate(args, cfg: AppConfig) -> int:
    out = Path(args.out)
    two, base = _load_models(out, cfg)
    subs = {name: sg.SingleLstmSurrogate(two.subs[name], two.scaler, two.window)
            for name in sg.SUB_MODEL_NAMES}
    models = dict(subs)
    models["two_layer"] = two
    models["single_lstm"] = base
    datasets = {name: load_dataset(_dataset_path(out, name, "val"))
                for name in sg.SUB_MODEL_NAMES}
    agg_val = load_dataset(_dataset_path(out, "agg", "val"))
    datasets["two_layer"] = agg_val
    datasets["single_lstm"] = agg_val
    rows = sg.validation_table(models, datasets, steps=(1, 10, 20),
                               stride=args.stride)
    vdir = out / "validation"
    vdir.mkdir(parents=True, exist_ok=True)
    sg.write_validation_csv(rows, vdir / "validation.csv")
    for r in rows:
        log.info("%-12s %2d-step NRMSE %.4f", r["model"], r["step"], r["nrmse"])
    cfgmod.write_manifest(out, "validate", cfg, args.seed, args.scale,
                          [vdir / "validation.csv"])
    return 0


def cmd_correct_eval(args, cfg: AppConfig) -> int:
    out = Path(args.out)
    model_dir = Path(args.model) if args.model else _models_dir(out) / "two_layer"
    model = sg.load_surrogate(model_dir)
    data_path = Path(args.data) if args.data else _dataset_path(out, "agg", "val")
    dataset = load_dataset(data_path)
    horizon = cfg.get("mismatch", "horizon")
    if args.kind is not None:
        c = None if args.kind == "none" else mm.CorrectionConfig(
            kind=args.kind, f=args.f)
        reports = [mm.evaluate_correction(model, dataset, None, horizon,
                                          args.stride)]
        if c is not None:
            reports.append(mm.evaluate_correction(model, dataset, c, horizon,
                                                  args.stride))
    else:
        f_values = tuple(int(f) for f in cfg.get("mismatch", "f_values"))
        reports = mm.correction_sweep(model, dataset, f_values, horizon,
                                      args.stride)
    mdir = out / "mismatch"
    mdir.mkdir(parents=True, exist_ok=True)
    mm.write_correction_csv(reports, mdir / "correction.csv")
    for r in reports:
        log.info("%-12s f=%-2d upsilon %.4f", r.kind, r.f, r.upsilon)
    cfgmod.write_manifest(out, "correct_eval", cfg, args.seed, args.scale,
                          [mdir / "correction.csv"])
    return 0


def _run_config(cfg: AppConfig) -> cl.RunConfig:
    r = cfg.values["run"]
    return cl.RunConfig(
        n_sim=r["n_sim"],
        y0=r["y0"],
        controller_model=r["controller_model"],
        correction=cfg.correction_config(),
        zone=cfg.zone_spec(),
        zmpc=cfg.zmpc_config(),
        forecast_error_frac=r["forecast_error_frac"],
        p=cfg.get("excitation", "window"),
        params=cfg.soil_params(),
        predictor_options=cl.soil.StepOptions(
            substep_init=r["richards_substep_s"]),
    )


def _scenario_for(cfg: AppConfig, run_cfg: cl.RunConfig, seed: int):
    r = cfg.values["run"]
    scen = cl.default_scenario(run_cfg.n_sim + run_cfg.zmpc.horizon,
                               rain=r["rain"], et=r["diurnal_et"])
    return cl.with_forecast_error(scen, run_cfg.forecast_error_frac,
                                  seed + 7000)


def _model_for(cfg: AppConfig, out: Path, run_cfg: cl.RunConfig):
    if run_cfg.controller_model == "richards":
        return None
    name = "two_layer" if run_cfg.controller_model == "two_layer" else "baseline"
    return sg.load_surrogate(_models_dir(out) / name)


def cmd_zmpc_run(args, cfg: AppConfig) -> int:
    out = Path(args.out)
    run_cfg = _run_config(cfg)
    noise = cl.NoiseSpec(cfg.get("run", "process_noise_frac"),
                         cfg.get("run", "measurement_noise_frac"),
                         seed=args.seed)
    scenario = _scenario_for(cfg, run_cfg, args.seed)
    model = _model_for(cfg, out, run_cfg)
    result = cl.run_closed_loop(run_cfg, noise, scenario, model)
    rdir = out / "runs" / (args.name or run_cfg.controller_model)
    rdir.mkdir(parents=True, exist_ok=True)
    cl.write_trajectory_csv(result, rdir / "trajectory.csv")
    cl.write_metrics_csv(result.metrics, rdir / "metrics.csv")
    log.info("I_T %.2f mm, zone violation %.2e, mean solve %.2f s%s",
             result.metrics.i_t_mm, result.metrics.zone_violation,
             result.metrics.mean_solve_time,
             " (ABORTED)" if result.metrics.aborted else "")
    cfgmod.write_manifest(rdir, "zmpc_run", cfg, args.seed, args.scale,
                          [rdir / "trajectory.csv", rdir / "metrics.csv"])
    return 3 if result.metrics.aborted else 0


def cmd_battery(args, cfg: AppConfig) -> int:
    out = Path(args.out)
    config_dir = Path(args.configs)
    paths = sorted(config_dir.glob("*.ini"))
    if not paths:
        raise ConfigError(f"no .ini configs in {config_dir}")
    entries = []
    models = {}
    scenario = None
    noise = None
    for path in paths:
        sub_cfg = cfgmod.load_config(path)
        run_cfg = _run_config(sub_cfg)
        entries.append((path.stem, run_cfg))
        if run_cfg.controller_model not in models:
            model = _model_for(sub_cfg, out, run_cfg)
            if model is not None:
                models[run_cfg.controller_model] = model
        if scenario is None:  # common random numbers across the battery
            scenario = _scenario_for(sub_cfg, run_cfg, args.seed)
            noise = cl.NoiseSpec(sub_cfg.get("run", "process_noise_frac"),
                                 sub_cfg.get("run", "measurement_noise_frac"),
                                 seed=args.seed)
    rows = cl.scenario_battery(entries, noise, scenario, models)
    benchmark = args.benchmark or entries[0][0]
    table = cl.battery_table(rows, benchmark=benchmark)
    report = Path(args.report) if args.report else out / "battery.csv"
    report.parent.mkdir(parents=True, exist_ok=True)
    cl.write_battery_csv(table, report)
    for rec in table:
        log.info("%s", rec)
    cfgmod.write_manifest(out, "battery", cfg, args.seed, args.scale, [report])
    return 0


def pct_improvement(reference: float, value: float) -> float:
    """Relative improvement of ``value`` over ``reference`` in percent:
    (0.076, 0.044) -> 42.1...% (positive means value is better/lower)."""
    if reference == 0.0:
        raise ValueError("reference must be nonzero")
    return 100.0 * (reference - value) / reference


def cmd_report(args, cfg: AppConfig) -> int:
    out = Path(args.out)
    lines = []
    vpath = out / "validation" / "validation.csv"
    if vpath.exists():
        rows = [r.split(",") for r in vpath.read_text().strip().split("\n")[1:]]
        scores = {(m, int(s)): float(v) for m, s, v in rows}
        lines.append("# Prediction accuracy (NRMSE)")
        for (m, s), v in sorted(scores.items()):
            lines.append(f"{m:12s} {s:2d}-step  {v:.4f}")
        lines.append("")
        lines.append("# Improvement of blended model over single network (%)")
        for s in (1, 10, 20):
            if ("two_layer", s) in scores and ("single_lstm", s) in scores:
                d = pct_improvement(scores[("single_lstm", s)],
                                    scores[("two_layer", s)])
                lines.append(f"{s:2d}-step  {d:+.1f}%")
        lines.append("")
    mpath = out / "mismatch" / "correction.csv"
    if mpath.exists():
        rows = [r.split(",") for r in mpath.read_text().strip().split("\n")[1:]]
        base = next((float(v) for k, f, v in rows if k == "none"), None)
        lines.append("# Online correction (mean |error|, scaled units)")
        for k, f, v in rows:
            extra = ""
            if base and k != "none":
                extra = f"  ({pct_improvement(base, float(v)):+.1f}% vs none)"
            lines.append(f"{k:12s} f={f:>2s}  {float(v):.4f}{extra}")
        lines.append("")
    bpath = out / "battery.csv"
    if bpath.exists():
        lines.append("# Closed-loop battery")
        lines.append(bpath.read_text().strip())
        lines.append("")
    if not lines:
        raise FileNotFoundError(f"no result CSVs under {out}")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irriloop",
        description="Soil-moisture zone control pipeline: simulate, train, "
                    "validate, and run closed-loop irrigation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, **extra):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", default=None,
                       help="INI config file (defaults in configs/default.ini)")
        p.add_argument("--seed", type=int, default=0, help="base random seed")
        p.add_argument("--out", default="artifacts",
                       help="artifact directory root")
        p.add_argument("--scale", type=int, default=1,
                       help="dataset-size divisor for quick runs")
        return p

    add("datagen", "generate training and validation datasets")
    p = add("train", "train models from generated datasets")
    p.add_argument("--which", choices=TRAIN_TARGETS, default="all")
    p = add("validate", "multi-step prediction accuracy tables")
    p.add_argument("--stride", type=int, default=1,
                   help="evaluate every n-th start index")
    p = add("correct-eval", "online-correction performance sweep")
    p.add_argument("--model", default=None, help="surrogate model directory")
    p.add_argument("--data", default=None, help="validation dataset CSV")
    p.add_argument("--kind", choices=("none", "single_bias", "linear"),
                   default=None, help="evaluate a single correction law")
    p.add_argument("--f", type=int, default=2, help="update interval")
    p.add_argument("--stride", type=int, default=1)
    p = add("zmpc-run", "one closed-loop experiment")
    p.add_argument("--name", default=None, help="run output subdirectory")
    p = add("battery", "run a directory of configs on common random numbers")
    p.add_argument("--configs", required=True, help="directory of .ini files")
    p.add_argument("--benchmark", default=None,
                   help="row for percent differences (default: first)")
    p.add_argument("--report", default=None, help="battery CSV path")
    add("report", "format result tables from recorded CSVs")
    return parser


_COMMANDS = {
    "datagen": cmd_datagen,
    "train": cmd_train,
    "validate": cmd_validate,
    "correct-eval": cmd_correct_eval,
    "zmpc-run": cmd_zmpc_run,
    "battery": cmd_battery,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure -> exit code 3
        log.exception("command failed: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
