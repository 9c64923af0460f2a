"""Command-line toolchain: simulate | train | score | evaluate | gridsearch.

Exit codes: 0 success, 1 runtime failure, 2 configuration/usage error.
All outputs are deterministic given identical inputs and seeds; wall-clock
timestamps are confined to the ``run.meta.json`` sidecar. The EPSNODE_SEED
environment variable overrides the base seed of any command.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from . import dataset as ds
from . import evaluation as ev
from . import features as feat
from . import gridsearch as gs
from . import novelty as nov
from . import render
from . import simulator as sim


class UsageError(Exception):
    """Configuration or usage problem; maps to exit code 2."""


def _base_seed(value: int) -> int:
    env = os.environ.get("EPSNODE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"EPSNODE_SEED must be an integer, got {env!r}") from exc
    return value


def _load_environment(scenario_name: str | None, env_file: str | None) -> tuple[sim.Environment, str]:
    if env_file:
        path = Path(env_file)
        if not path.exists():
            raise UsageError(f"environment file not found: {env_file}")
        return sim.load_environment(path), path.stem
    if scenario_name is None:
        raise UsageError("either --scenario or --env-file is required")
    try:
        return sim.scenario(scenario_name), scenario_name
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _parse_grid(spec: str | None) -> ds.GridMap:
    if spec is None:
        return sim.default_grid()
    try:
        ox, oy, nx, ny, cs = spec.split(",")
        return ds.GridMap(origin=(float(ox), float(oy)), nx=int(nx), ny=int(ny), cell_size=float(cs))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid grid spec {spec!r}; expected ox,oy,nx,ny,cell_size") from exc


def _write_meta(out_dir: Path, command: str, config: dict) -> None:
    meta = {"command": command, "timestamp": time.time(), "config": config}
    (out_dir / "run.meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    env, name = _load_environment(args.scenario, args.env_file)
    grid = _parse_grid(args.grid)
    seed = _base_seed(args.seed)
    params = sim.ChannelParams(
        noise_sigma=args.noise_sigma, range_jitter_sigma=args.jitter_sigma
    )
    mset = sim.generate_dataset(
        env, grid, args.passes, args.samples_per_cell, seed, params, scenario_name=name
    )
    ds.save(mset, args.out)
    print(
        f"wrote {args.out}: {grid.n_cells} cells x {args.passes} passes x "
        f"{args.samples_per_cell} samples = {len(mset)} measurements"
    )
    return 0


def _prepare_features(mset, pipeline, val_fraction, seed, variance_target):
    """Split, fit preprocessing on the training half, return scaled rows."""
    train_set, val_set = ds.split(mset, val_fraction, seed)
    pca = None
    if pipeline is feat.Pipeline.PCA:
        rows = np.array([feat.cir_concat(m) for m in train_set.measurements])
        pca = feat.fit_pca(rows, variance_target)
    train_raw = feat.extract_matrix(train_set.measurements, pipeline, pca)
    val_raw = feat.extract_matrix(val_set.measurements, pipeline, pca)
    scaler = feat.fit_scaler(train_raw)
    return feat.scale(scaler, train_raw), feat.scale(scaler, val_raw), scaler, pca


def _load_train_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {args.config}")
        cfg = json.loads(path.read_text(encoding="utf-8"))
    overrides = {
        "dataset": args.dataset,
        "pipeline": args.pipeline,
        "architecture": args.architecture,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "max_epochs": args.max_epochs,
        "patience": args.patience,
        "val_fraction": args.val_fraction,
        "seed": args.seed,
        "out_dir": args.out_dir,
        "jobs": getattr(args, "jobs", None),
    }
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    for key in ("dataset", "pipeline", "out_dir"):
        if key not in cfg:
            raise UsageError(f"missing required config key {key!r}")
    cfg.setdefault("architecture", "search")
    cfg.setdefault("batch_size", 32)
    cfg.setdefault("learning_rate", 1e-3)
    cfg.setdefault("max_epochs", 200)
    cfg.setdefault("patience", 20)
    cfg.setdefault("val_fraction", 0.2)
    cfg.setdefault("seed", 0)
    cfg.setdefault("jobs", 1)
    cfg.setdefault("variance_target", 0.90)
    try:
        cfg["pipeline"] = feat.Pipeline(cfg["pipeline"])
    except ValueError as exc:
        raise UsageError(f"pipeline must be one of RNG, MA, PCA: {exc}") from exc
    return cfg


def _cmd_train(args) -> int:
    cfg = _load_train_config(args)
    pipeline = cfg["pipeline"]
    seed = _base_seed(int(cfg["seed"]))
    if not Path(cfg["dataset"]).exists():
        raise UsageError(f"dataset not found: {cfg['dataset']}")
    mset = ds.load(cfg["dataset"])
    train_rows, val_rows, scaler, pca = _prepare_features(
        mset, pipeline, float(cfg["val_fraction"]), seed, float(cfg["variance_target"])
    )

    arch = cfg["architecture"]
    if arch == "search":
        space = gs.TABLE_SPACES[pipeline]
        results, best = gs.run(
            space,
            train_rows,
            val_rows,
            parallelism=int(cfg["jobs"]),
            base_seed=seed,
            max_epochs=int(cfg["max_epochs"]),
            patience=int(cfg["patience"]),
        )
        e1, e2, d1 = best.e1, best.e2, best.d1
        batch, lr = best.batch_size, best.learning_rate
    else:
        try:
            e1, e2, d1 = (int(v) for v in arch)
        except (TypeError, ValueError) as exc:
            raise UsageError(
                f"architecture must be [e1, e2, d1] or \"search\", got {arch!r}"
            ) from exc
        batch, lr = int(cfg["batch_size"]), float(cfg["learning_rate"])

    n = train_rows.shape[1]
    try:
        model = ae.build(n, e1, e2, d1, seed=seed)
    except ae.ConstraintError as exc:
        raise UsageError(str(exc)) from exc
    config = ae.TrainConfig(
        batch_size=batch,
        learning_rate=lr,
        max_epochs=int(cfg["max_epochs"]),
        patience=int(cfg["patience"]),
        seed=seed,
    )
    trained, report = ae.train(model, train_rows, val_rows, config)

    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ae.save_bundle(out_dir / "model.json", trained, pipeline, scaler, pca)
    (out_dir / "train_report.json").write_text(
        json.dumps(
            {
                "pipeline": pipeline.value,
                "architecture": [e1, e2, d1],
                "batch_size": batch,
                "learning_rate": lr,
                "train_mse": report.train_mse,
                "val_mse": report.val_mse,
                "stopped_epoch": report.stopped_epoch,
                "final_val_mse": report.final_val_mse,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    _write_meta(out_dir, "train", {k: str(v) for k, v in cfg.items()})
    print(
        f"trained {pipeline.value} ({n},{e1},{e2},{d1}) for {report.stopped_epoch} epochs, "
        f"best validation MSE {report.final_val_mse:.6g}"
    )
    return 0


def _cmd_score(args) -> int:
    for path, what in ((args.model, "model"), (args.dataset, "dataset")):
        if not Path(path).exists():
            raise UsageError(f"{what} file not found: {path}")
    bundle = ae.load_bundle(args.model)
    if bundle["pipeline"] is None or bundle["scaler"] is None:
        raise UsageError("model bundle is missing pipeline/scaler metadata")
    mset = ds.load(args.dataset)
    try:
        emap, anchor_maps, _ = nov.score(
            bundle["model"], bundle["scaler"], bundle["pipeline"], bundle["pca"], mset,
            aggregate=args.aggregate,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nov.write_error_map_csv(emap, out_dir / "error_map.csv")
    for amap in anchor_maps:
        nov.write_error_map_csv(amap, out_dir / f"anchor_{amap.anchor_id}.csv")
    art = render.ascii_heatmap(
        emap.values, title=f"total error [{mset.scenario_name}] ({args.aggregate} per cell)"
    )
    (out_dir / "heatmap.txt").write_text(art, encoding="utf-8")
    render.write_pgm(emap.values, out_dir / "heatmap.pgm")
    print(art, end="")
    return 0


def _cmd_evaluate(args) -> int:
    if not Path(args.error_map).exists():
        raise UsageError(f"error map not found: {args.error_map}")
    env, name = _load_environment(args.scenario, args.env_file)
    try:
        emap = nov.read_error_map_csv(args.error_map)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    xmin, ymin, xmax, ymax = emap.grid.extent
    if not (env.room.contains((xmin, ymin)) and env.room.contains((xmax, ymax))):
        raise UsageError("error-map grid does not fit the scenario room")
    try:
        pred = ev.kde(emap, args.bandwidth)
        truth = ev.ground_truth_density(env, emap.grid, args.bandwidth)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    uniform = ev.uniform_density(emap.grid)
    report = ev.KlReport(
        scenario=name,
        pipeline=args.pipeline or "",
        bandwidth=args.bandwidth,
        eps=args.eps,
        kl_pred_vs_truth=ev.kl_divergence(pred, truth, args.eps),
        kl_uniform_vs_truth=ev.kl_divergence(uniform, truth, args.eps),
    )
    report.save(args.out)
    print(
        f"KL(pred || truth) = {report.kl_pred_vs_truth:.4f} nats, "
        f"KL(uniform || truth) = {report.kl_uniform_vs_truth:.4f} nats"
    )
    return 0


def _cmd_gridsearch(args) -> int:
    cfg = _load_train_config(args)
    pipeline = cfg["pipeline"]
    seed = _base_seed(int(cfg["seed"]))
    if not Path(cfg["dataset"]).exists():
        raise UsageError(f"dataset not found: {cfg['dataset']}")
    mset = ds.load(cfg["dataset"])
    train_rows, val_rows, _, _ = _prepare_features(
        mset, pipeline, float(cfg["val_fraction"]), seed, float(cfg["variance_target"])
    )
    space = gs.TABLE_SPACES[pipeline]
    results, best = gs.run(
        space,
        train_rows,
        val_rows,
        parallelism=int(cfg["jobs"]),
        base_seed=seed,
        max_epochs=int(cfg["max_epochs"]),
        patience=int(cfg["patience"]),
    )
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    gs.write_report(results, out_dir / "sweep.json", out_dir / "sweep.csv")
    _write_meta(out_dir, "gridsearch", {k: str(v) for k, v in cfg.items()})
    print(
        f"{len(results)} trials; best: e1={best.e1} e2={best.e2} "
        f"batch={best.batch_size} lr={best.learning_rate}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epsnode", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a fingerprint dataset")
    p.add_argument("--scenario", help=f"preset name ({', '.join(sim.PRESET_NAMES)})")
    p.add_argument("--env-file", help="custom environment JSON file")
    p.add_argument("--grid", help="ox,oy,nx,ny,cell_size (default: standard grid)")
    p.add_argument("--passes", type=int, default=5)
    p.add_argument("--samples-per-cell", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=sim.ChannelParams().noise_sigma)
    p.add_argument("--jitter-sigma", type=float, default=sim.ChannelParams().range_jitter_sigma)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    for name, func, help_text in (
        ("train", _cmd_train, "train an autoencoder on nominal data"),
        ("gridsearch", _cmd_gridsearch, "sweep the hyperparameter table"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--dataset")
        p.add_argument("--pipeline", choices=[pl.value for pl in feat.Pipeline])
        p.add_argument(
            "--architecture",
            nargs=3,
            type=int,
            metavar=("E1", "E2", "D1"),
            help='hidden layer sizes (train only; omit to use "search")',
        )
        p.add_argument("--batch-size", type=int)
        p.add_argument("--learning-rate", type=float)
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--val-fraction", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--out-dir")
        p.set_defaults(func=func)

    p = sub.add_parser("score", help="score a dataset with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--aggregate", choices=("mean", "median", "max"), default="mean")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("evaluate", help="KDE + KL scoring of an error map")
    p.add_argument("--error-map", required=True)
    p.add_argument("--scenario")
    p.add_argument("--env-file")
    p.add_argument("--pipeline")
    p.add_argument("--bandwidth", type=float, default=ev.DEFAULT_BANDWIDTH)
    p.add_argument("--eps", type=float, default=ev.DEFAULT_EPS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ds.DatasetFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
