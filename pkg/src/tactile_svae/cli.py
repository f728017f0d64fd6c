"""``tactile-svae`` command line: one executable, one subcommand per pipeline stage.

Every run resolves a JSON config (built-in defaults, then ``--config FILE``,
then flags), validates all of it, and only then touches the filesystem. The
resolved config is written next to the outputs so a run can be repeated with
``--config`` alone.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import analysis, control, data, svae
from .errors import (
    ConfigError,
    DomainError,
    InfeasibleReferenceError,
    RangeError,
    ShapeError,
    TactileError,
)
from .plant import DomainTag, FingerPlantConfig, ThresholdBand

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, DomainError, ShapeError, RangeError, InfeasibleReferenceError)

log = logging.getLogger("tactile_svae.cli")


def _object_dict(o: control.GraspObject) -> dict:
    d = dataclasses.asdict(o)
    d["offsets"] = [list(p) for p in o.offsets]
    return d


DEFAULTS = {
    "plant": {
        "finger": FingerPlantConfig().to_dict(),
        "water": {k: v for k, v in DomainTag.water().to_dict().items() if k != "variant"},
        "threshold": {"lo": 0.45, "hi": 1.0},
        "clutter": True,
    },
    "model": {
        "arch": svae.SVAEArchitecture().to_dict(),
        "loss": {"alpha": 1.0, "beta": 0.1, "objective": "svae"},
        "train": dataclasses.asdict(svae.TrainConfig()),
    },
    "data": {"n": 3000, "seed": 0, "domain": "land"},
    "control": {
        "p_c": 10.0,
        "p_max": 30.0,
        "nodes": [[0.0, 0.0], [2.0, 0.5], [6.0, 3.0], [10.0, 6.0]],
        "k": 0.6,
        "delta": 0.05,
        "loop_rate": 120.0,
        "plan": [[0.4, 60], [1.6, 60], [3.0, 60]],
        "estimator": "oracle",
        "domain": "land",
        "disturb": {"f_ref": 0.4, "angles_deg": [45.0, 60.0, -90.0], "period_ticks": 120},
        "prop1": {"trials": 200, "k_factors": [0.6, 0.8, 1.0, 1.5], "lambda": 1.0, "seed": 0},
    },
    "experiment": {
        "grasp": {
            "trials": 10,
            "sigma_mm": 5.0,
            "seed": 0,
            "k": 0.5,
            "tick_budget": 240,
            "domains": ["land", "water"],
            "objects": [_object_dict(o) for o in control.DEFAULT_OBJECTS],
        },
        "alpha_sweep": {"alphas": list(analysis.ALPHA_GRID), "epochs": analysis.SWEEP_EPOCHS,
                        "baselines": True},
        "latent_dim_sweep": {"dims": [6, 16, 32, 64, 128, 256], "epochs": analysis.SWEEP_EPOCHS, "alpha": 100.0},
        "latent": {"dims": None, "steps": 11, "range": [-5.0, 5.0], "pairs": 200, "seed": 1, "split": "test"},
        "eval": {"split": "test"},
    },
}

# sections whose contents are free-form objects rather than fixed keys
_OPAQUE = {("experiment", "grasp", "objects"), ("control", "nodes"), ("control", "plan")}


def merge_config(base: dict, override: dict, path=()) -> dict:
    """Recursive merge that rejects keys absent from ``base``."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = ".".join(path + (key,))
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and path + (key,) not in _OPAQUE:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = merge_config(base[key], value, path + (key,))
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set(cfg: dict, dotted: str, value):
    node = cfg
    *parents, leaf = dotted.split(".")
    for p in parents:
        node = node[p]
    node[leaf] = value


# ---------------------------------------------------------------------------
# typed views of a resolved config (construction validates)


def finger_config(cfg) -> FingerPlantConfig:
    return FingerPlantConfig.from_dict(cfg["plant"]["finger"])


def domain_tag(cfg, variant: str) -> DomainTag:
    if variant == "land":
        return DomainTag.land()
    if variant == "water":
        return DomainTag("water", **cfg["plant"]["water"])
    raise ConfigError(f"unknown domain {variant!r}")


def threshold_band(cfg) -> ThresholdBand:
    return ThresholdBand(**cfg["plant"]["threshold"])


def architecture(cfg) -> svae.SVAEArchitecture:
    return svae.SVAEArchitecture.from_dict(cfg["model"]["arch"])


def loss_config(cfg) -> svae.LossConfig:
    return svae.LossConfig(**cfg["model"]["loss"])


def train_config(cfg, epochs=None) -> svae.TrainConfig:
    t = dict(cfg["model"]["train"])
    if epochs is not None:
        t["epochs"] = epochs
    return svae.TrainConfig(**t)


def controller_config(cfg, k=None) -> control.ControllerConfig:
    c = cfg["control"]
    return control.ControllerConfig(k=c["k"] if k is None else k, delta=c["delta"], loop_rate=c["loop_rate"])


def grasp_plant(cfg) -> control.GraspPlant:
    c = cfg["control"]
    return control.GraspPlant.from_offsets(c["p_c"], c["p_max"], [tuple(n) for n in c["nodes"]])


def grasp_objects(cfg) -> list[control.GraspObject]:
    objs = []
    for o in cfg["experiment"]["grasp"]["objects"]:
        o = dict(o)
        o["offsets"] = tuple(tuple(p) for p in o["offsets"])
        objs.append(control.GraspObject(**o))
    return objs


def _positive_int(value, name):
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


def validate(cfg: dict) -> None:
    """Construct every typed section once so all invariants are checked up front."""
    finger_config(cfg)
    domain_tag(cfg, "water")
    threshold_band(cfg)
    architecture(cfg)
    loss_config(cfg)
    t = train_config(cfg)
    _positive_int(t.batch_size, "batch_size")
    _positive_int(t.epochs, "epochs")
    if not t.lr > 0 or not 0 < t.lr_decay <= 1:
        raise ConfigError("lr must be > 0 and lr_decay in (0, 1]")
    d = cfg["data"]
    if not isinstance(d["n"], int) or d["n"] < data.MIN_SAMPLES:
        raise ConfigError(f"data.n must be an integer >= {data.MIN_SAMPLES}")
    domain_tag(cfg, d["domain"])
    c = cfg["control"]
    plant = grasp_plant(cfg)
    controller_config(cfg)
    if c["estimator"] not in ("oracle", "svae"):
        raise ConfigError(f"unknown estimator {c['estimator']!r}")
    domain_tag(cfg, c["domain"])
    for f_ref, hold in c["plan"]:
        _positive_int(hold, "plan hold ticks")
        if f_ref > plant.max_force():
            raise InfeasibleReferenceError(f"setpoint {f_ref} N exceeds the plant's {plant.max_force():.4g} N")
    _positive_int(c["disturb"]["period_ticks"], "disturb.period_ticks")
    _positive_int(c["prop1"]["trials"], "prop1.trials")
    if not c["prop1"]["lambda"] > 0:
        raise ConfigError("prop1.lambda must be positive")
    g = cfg["experiment"]["grasp"]
    grasp_objects(cfg)
    _positive_int(g["trials"], "grasp.trials")
    _positive_int(g["tick_budget"], "grasp.tick_budget")
    if g["sigma_mm"] < 0:
        raise ConfigError("grasp.sigma_mm must be >= 0")
    for dom in g["domains"]:
        domain_tag(cfg, dom)
    control.ControllerConfig(k=g["k"], delta=c["delta"], loop_rate=c["loop_rate"])
    sw = cfg["experiment"]["alpha_sweep"]
    if len(sw["alphas"]) < 2:
        raise ConfigError("alpha sweep needs at least two alphas")
    _positive_int(sw["epochs"], "alpha_sweep.epochs")
    ld = cfg["experiment"]["latent_dim_sweep"]
    if len(ld["dims"]) < 2:
        raise ConfigError("latent-dimension sweep needs at least two sizes")
    _positive_int(ld["epochs"], "latent_dim_sweep.epochs")
    lt = cfg["experiment"]["latent"]
    if lt["steps"] < 2:
        raise ConfigError("traversal steps must be >= 2")
    _positive_int(lt["pairs"], "latent.pairs")
    if lt["split"] not in data.SPLIT_NAMES or cfg["experiment"]["eval"]["split"] not in data.SPLIT_NAMES:
        raise ConfigError("split must be one of train/val/test")


# ---------------------------------------------------------------------------
# argument parsing


class ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports problems by raising instead of exiting with status 2."""

    def error(self, message):
        raise ArgumentError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_required=True):
    p.add_argument("--config", help="JSON config file; unknown keys are rejected")
    p.add_argument("--out", required=out_required, help="output path")
    p.add_argument("--threads", type=int, help="cap on BLAS threads (default: $SVAE_THREADS)")


def _model_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--latent", type=int, help="latent dimension d")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tactile-svae", description="Synthetic in-finger vision: data, SVAE training, analysis, force control.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="render a synthetic dataset")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--domain", choices=("land", "water"))

    p = sub.add_parser("train", help="train an SVAE; --out is the checkpoint file")
    _common(p)
    p.add_argument("--data", required=True)
    _model_flags(p)

    p = sub.add_parser("eval", help="metrics and error histograms on a split")
    _common(p, out_required=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=data.SPLIT_NAMES)

    p = sub.add_parser("latent", help="latent-space studies")
    p.add_argument("study", choices=("corr", "traverse", "shift"))
    _common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="dataset directory (needed by corr)")
    p.add_argument("--dims", type=int, nargs="+")
    p.add_argument("--steps", type=int)
    p.add_argument("--pairs", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("sweep", help="alpha or latent-dimension sweeps")
    p.add_argument("kind", choices=("alpha", "latent-dim"))
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--alphas", type=float, nargs="+")
    p.add_argument("--dims", type=int, nargs="+")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-baselines", action="store_true")

    p = sub.add_parser("control", help="force-control scenarios")
    p.add_argument("scenario", choices=("track", "disturb", "prop1"))
    _common(p, out_required=False)
    p.add_argument("--k", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--lambda", dest="lam", type=float, help="steepest plant slope for prop1")
    p.add_argument("--trials", type=int)
    p.add_argument("--estimator", choices=("oracle", "svae"))
    p.add_argument("--ckpt")
    p.add_argument("--domain", choices=("land", "water"))

    p = sub.add_parser("grasp", help="open- vs closed-loop grasp experiment")
    _common(p, out_required=False)
    p.add_argument("--ckpt", help="svae checkpoint; the oracle estimator is used without one")
    p.add_argument("--trials", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    return parser


# flag name -> config path, per subcommand
_OVERRIDES = {
    "gen-data": {"n": "data.n", "seed": "data.seed", "domain": "data.domain"},
    "train": {"alpha": "model.loss.alpha", "beta": "model.loss.beta", "latent": "model.arch.latent_dim",
              "epochs": "model.train.epochs", "seed": "model.train.seed", "batch_size": "model.train.batch_size",
              "lr": "model.train.lr"},
    "eval": {"split": "experiment.eval.split"},
    "latent": {"dims": "experiment.latent.dims", "steps": "experiment.latent.steps",
               "pairs": "experiment.latent.pairs", "seed": "experiment.latent.seed"},
    "sweep": {"alphas": "experiment.alpha_sweep.alphas", "dims": "experiment.latent_dim_sweep.dims",
              "seed": "model.train.seed"},
    "control": {"k": "control.k", "delta": "control.delta", "lam": "control.prop1.lambda",
                "trials": "control.prop1.trials", "estimator": "control.estimator", "domain": "control.domain"},
    "grasp": {"trials": "experiment.grasp.trials", "sigma": "experiment.grasp.sigma_mm",
              "seed": "experiment.grasp.seed"},
}


def resolve_config(args) -> dict:
    cfg = DEFAULTS
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = merge_config(DEFAULTS, user)
    cfg = copy.deepcopy(cfg)
    for flag, path in _OVERRIDES.get(args.command, {}).items():
        value = getattr(args, flag, None)
        if value is not None:
            _set(cfg, path, value)
    if args.command == "sweep" and args.epochs is not None:
        key = "alpha_sweep" if args.kind == "alpha" else "latent_dim_sweep"
        cfg["experiment"][key]["epochs"] = args.epochs
    if args.command == "sweep" and args.no_baselines:
        cfg["experiment"]["alpha_sweep"]["baselines"] = False
    validate(cfg)
    return cfg


def _require_file(path, what):
    if not Path(path).is_file():
        raise ConfigError(f"{what} {path} does not exist")


def _require_dataset(path):
    if not (Path(path) / "manifest.json").is_file():
        raise ConfigError(f"{path} is not a dataset directory (no manifest.json)")


def _echo(path, cfg):
    Path(path).write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands. Each validates its inputs before creating any output.


def cmd_gen_data(args, cfg):
    out = Path(args.out)
    d = cfg["data"]
    manifest = data.generate_dataset(d["n"], finger_config(cfg), domain_tag(cfg, d["domain"]), d["seed"], out,
                                     clutter=cfg["plant"]["clutter"])
    _echo(out / "config.json", cfg)
    s = manifest["split_sizes"]
    return f"gen-data: {manifest['count']} samples ({d['domain']}) -> {out} [train {s['train']} / val {s['val']} / test {s['test']}]"


def _load(cfg, path):
    return data.load_dataset(path, finger_config(cfg), band=threshold_band(cfg))


def cmd_train(args, cfg):
    _require_dataset(args.data)
    ds = _load(cfg, args.data)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt = svae.train(ds, architecture(cfg), loss_config(cfg), train_config(cfg))
    svae.save_checkpoint(ckpt, out)
    _echo(out.with_name(out.name + ".config.json"), cfg)
    val = ckpt.metadata["val_history"][-1]["total"]
    return f"train: {ckpt.metadata['epochs']} epochs, final val loss {val:.5f} -> {out}"


def cmd_eval(args, cfg):
    _require_file(args.ckpt, "checkpoint")
    _require_dataset(args.data)
    ckpt = svae.load_checkpoint(args.ckpt)
    split = _load(cfg, args.data).view(cfg["experiment"]["eval"]["split"])
    out = Path(args.out or f"{args.ckpt}.eval")
    report = analysis.evaluate(ckpt, split)
    mu, _ = svae.encode_all(ckpt, split.images)
    hists = analysis.wrench_error_histograms(svae.predict_wrench(ckpt, mu), split.wrenches)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_json(out / "metrics.json", {"split": cfg["experiment"]["eval"]["split"], **report.to_dict(),
                                               "axes": list(analysis.AXES)})
    analysis.write_csv(out / "metrics.csv", analysis.metrics_rows(report))
    analysis.write_json(out / "histograms.json", hists)
    analysis.write_csv(out / "histograms.csv", analysis.histogram_rows(hists))
    _echo(out / "config.json", cfg)
    per_axis = " ".join(f"{a}={v:.3f}" for a, v in zip(analysis.AXES, report.r2))
    return f"eval: R2 {per_axis} mean={report.mean_r2:.4f} recon_mse={report.recon_mse:.5f} -> {out}"


def cmd_latent(args, cfg):
    _require_file(args.ckpt, "checkpoint")
    lt = cfg["experiment"]["latent"]
    if args.study == "corr":
        if not args.data:
            raise ConfigError("latent corr needs --data")
        _require_dataset(args.data)
    ckpt = svae.load_checkpoint(args.ckpt)
    d = ckpt.arch.latent_dim
    dims = lt["dims"] if lt["dims"] is not None else list(range(d))
    if args.study == "traverse":
        for k in dims:
            if not 0 <= k < d:
                raise ConfigError(f"latent dimension {k} outside [0, {d})")
    out = Path(args.out)
    if args.study == "corr":
        split = _load(cfg, args.data).view(lt["split"])
        cm = analysis.latent_correlation(ckpt, split)
        lw = analysis.latent_wrench_correlation(ckpt, split)
        out.mkdir(parents=True, exist_ok=True)
        analysis.write_json(out / "latent_correlation.json", {"values": cm.values, "flagged": cm.flagged,
                                                              "mean_abs_offdiag": cm.mean_abs_offdiag()})
        analysis.write_json(out / "latent_wrench_correlation.json", {"values": lw.values, "flagged": lw.flagged,
                                                                     "axes": list(analysis.AXES)})
        rows = [{"i": i, "j": j, "r": cm.values[i, j], "flagged": bool(cm.flagged[i, j])}
                for i in range(d) for j in range(d)]
        analysis.write_csv(out / "latent_correlation.csv", rows)
        summary = f"latent corr: mean |off-diagonal| {cm.mean_abs_offdiag():.3f}, {int(np.diag(cm.flagged).sum())} flagged dims"
    elif args.study == "traverse":
        grid = analysis.latent_traversal(ckpt, dims, tuple(lt["range"]), lt["steps"])
        out.mkdir(parents=True, exist_ok=True)
        analysis.write_pgm_mosaic(out / "traversal.pgm", grid)
        np.save(out / "traversal.npy", grid)
        summary = f"latent traverse: {len(dims)} dims x {lt['steps']} steps over {lt['range']}"
    else:
        land, wet, wrenches, _ = data.generate_pairs(lt["pairs"], finger_config(cfg), domain_tag(cfg, "water"),
                                                     lt["seed"], cfg["plant"]["clutter"], threshold_band(cfg))
        rep = analysis.domain_shift_report(ckpt, land, wet, wrenches)
        out.mkdir(parents=True, exist_ok=True)
        analysis.write_json(out / "domain_shift.json", rep)
        analysis.write_csv(out / "domain_shift.csv", [
            {"pair": i, "cosine_similarity": c} for i, c in enumerate(rep["cosine_similarity"])])
        summary = (f"latent shift: {rep['pairs']} pairs, mean cosine {rep['mean_cosine_similarity']:.4f}, "
                   f"mean R2 land {rep['land']['mean_r2']:.4f} water {rep['water']['mean_r2']:.4f}")
    _echo(out / "config.json", cfg)
    return summary


def cmd_sweep(args, cfg):
    _require_dataset(args.data)
    ds = _load(cfg, args.data)
    out = Path(args.out)
    arch, beta = architecture(cfg), cfg["model"]["loss"]["beta"]
    if args.kind == "alpha":
        sw = cfg["experiment"]["alpha_sweep"]
        rows = analysis.alpha_sweep(ds, sw["alphas"], arch, beta, train_config(cfg, sw["epochs"]), sw["baselines"],
                                    progress=lambda r: log.info("alpha cell %s", r))
        name, summary = "alpha_sweep", f"sweep alpha: {len(rows)} rows"
    else:
        sw = cfg["experiment"]["latent_dim_sweep"]
        rows = analysis.latent_dim_sweep(ds, sw["dims"], arch, sw["alpha"], beta, train_config(cfg, sw["epochs"]),
                                         progress=lambda r: log.info("latent-dim cell %s", r))
        name = "latent_dim_sweep"
        summary = "sweep latent-dim: " + ", ".join(f"d={r['latent_dim']} mse={r['recon_mse']:.5f}" for r in rows)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_json(out / f"{name}.json", rows)
    analysis.write_csv(out / f"{name}.csv", rows)
    _echo(out / "config.json", cfg)
    return f"{summary} -> {out}"


def _svae_estimator(cfg, ckpt_path, domain: str, obj: control.GraspObject | None = None):
    ckpt = svae.load_checkpoint(ckpt_path)
    z, theta = (obj.z_cm, obj.theta_rad) if obj is not None else (0.0, 0.0)
    return control.SVAEEstimator(ckpt, finger_config(cfg), domain_tag(cfg, domain), z, theta,
                                 band=threshold_band(cfg), clutter=cfg["plant"]["clutter"])


def cmd_control(args, cfg):
    c = cfg["control"]
    out = Path(args.out or f"control_{args.scenario}")
    if args.scenario == "prop1":
        p1 = c["prop1"]
        lam = p1["lambda"]
        k = c["k"] if args.k is not None else None
        factors = [k / lam] if k is not None else p1["k_factors"]
        k_lin = k if k is not None else factors[0] * lam
        extra = [(control.GraspPlant.linear(lam), k_lin, 1.0)]
        rep = control.verify_contraction(p1["trials"], factors, lam, c["delta"], p1["seed"], extra)
        out.mkdir(parents=True, exist_ok=True)
        slim = {k_: v for k_, v in rep.items() if k_ not in ("results", "flagged")}
        slim["flagged_count"] = len(rep["flagged"])
        slim["linear_case"] = rep["results"][-1]
        analysis.write_json(out / "prop1.json", slim)
        analysis.write_csv(out / "prop1.csv", [{k_: v for k_, v in r.items() if k_ != "errors"} for r in rep["results"]])
        _echo(out / "config.json", cfg)
        lin = rep["results"][-1]
        verdict = "converges" if lin["converged"] and lin["strictly_decreasing"] else "NON-CONVERGENT (flagged)"
        return (f"control prop1: K={k_lin:g} Lambda={lam:g}: linear case {verdict}; "
                f"{len(rep['flagged'])}/{rep['runs']} runs flagged, eligible pass rate {rep['pass_rate']}")

    if c["estimator"] == "svae":
        if not args.ckpt:
            raise ConfigError("the svae estimator needs --ckpt")
        _require_file(args.ckpt, "checkpoint")
    plant, ccfg = grasp_plant(cfg), controller_config(cfg)
    if args.scenario == "disturb":
        dist = c["disturb"]
        sched = control.rotation_schedule(dist["angles_deg"], dist["period_ticks"], ccfg.loop_rate)
        plant = plant.with_shifts(sched)
        for t0, _ in ((0.0, 0.0),) + plant.shifts:
            if dist["f_ref"] > plant.max_force(t0):
                raise InfeasibleReferenceError(f"reference {dist['f_ref']} N infeasible after a shift")
    est = _svae_estimator(cfg, args.ckpt, c["domain"]) if c["estimator"] == "svae" else control.OracleEstimator()
    if args.scenario == "track":
        trace = control.run_force_tracking([(f, int(h)) for f, h in c["plan"]], plant, ccfg, est)
        settle = trace.settling("step", ccfg.delta)
    else:
        trace = control.run_disturbance(plant, c["disturb"]["f_ref"], ccfg, est)
        settle = trace.settling("shift", ccfg.delta)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / "trace.csv")
    analysis.write_json(out / "settling.json", settle)
    _echo(out / "config.json", cfg)
    ticks = [s["ticks"] for s in settle]
    return f"control {args.scenario} ({c['estimator']}): settling ticks {ticks}, {len(trace)} ticks -> {out}"


def cmd_grasp(args, cfg):
    g = cfg["experiment"]["grasp"]
    if args.ckpt:
        _require_file(args.ckpt, "checkpoint")
    objects = grasp_objects(cfg)
    out = Path(args.out or "grasp")
    estimators = {}
    for dom in g["domains"]:
        if args.ckpt:
            estimators[dom] = (lambda d: lambda obj: _svae_estimator(cfg, args.ckpt, d, obj))(dom)
        else:
            estimators[dom] = lambda obj: control.OracleEstimator()
    ccfg = control.ControllerConfig(k=g["k"], delta=cfg["control"]["delta"], loop_rate=cfg["control"]["loop_rate"])
    table = control.grasp_experiment(objects, g["trials"], g["sigma_mm"], g["seed"], estimators, ccfg, g["tick_budget"])
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_json(out / "grasp.json", table)
    analysis.write_csv(out / "grasp.csv", control.grasp_rows(table))
    _echo(out / "config.json", cfg)
    cells = ", ".join(f"{k} {v['average']:.0%}" for k, v in table.items())
    return f"grasp ({'svae' if args.ckpt else 'oracle'}): {cells} -> {out}"


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "latent": cmd_latent,
            "sweep": cmd_sweep, "control": cmd_control, "grasp": cmd_grasp}


def _thread_cap(args) -> int | None:
    if args.threads is not None:
        value, source = args.threads, "--threads"
    elif os.environ.get("SVAE_THREADS"):
        value, source = os.environ["SVAE_THREADS"], "SVAE_THREADS"
    else:
        return None
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"{source} must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError(f"{source} must be >= 1")
    return n


def run(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ArgumentError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        threads = _thread_cap(args)
        cfg = resolve_config(args)
        with threadpool_limits(limits=threads):
            summary = COMMANDS[args.command](args, cfg)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TactileError, OSError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(summary)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
