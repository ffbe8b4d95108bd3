"""Command-line front end: dataset generation, training, prediction, adaptation,
experiment runs, and plot-data export.

All commands share one JSON configuration format, validated against the
schema below; unknown keys are rejected with their dotted path. Every output
bundle records the hash of the canonical configuration, and rerunning a
command with the same configuration rewrites byte-identical files (timings
are printed, never written).

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from gppca import datasets as ds
from gppca import evaluation as ev
from gppca import gp_pca
from gppca.epca import ConvergenceError, FitOptions, ValidityError, ValidityStallError
from gppca.gaussian_geometry import DecompositionError
from gppca.kernels_gp import GpPrior, KernelConfig, TaskData
from gppca.sparse_gp import grid_inducing

__all__ = ["main", "ConfigError", "DataError"]


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# Configuration schema. Leaves are (type tuple, default); None defaults mean
# the key may be absent. Dicts nest. Lists hold floats.

_FIT_SCHEMA = {
    "learning_rate": (float, None),
    "max_iters": (int, None),
    "rel_tol": (float, None),
    "seed": (int, None),
    "backtrack_factor": (float, None),
}

_SCHEMA = {
    "experiment": (str, None),
    "data": {
        # artificial
        "num_tasks": (int, None),
        "samples_per_task": (int, None),
        "noise_variance": (float, None),
        "z_values": (list, None),
        "eval_points_per_task": (int, None),
        "num_new_tasks": (int, None),
        "new_task_samples": (int, None),
        # vdp
        "alphas": (list, None),
        "sequences_per_task": (int, None),
        "points_per_sequence": (int, None),
        "dt": (float, None),
        "substep": (float, None),
        "initial_state": (list, None),
        "eval_sequences_per_task": (int, None),
        "new_task_sequences": (int, None),
        # shared
        "seed": (int, None),
    },
    "kernel": {"kind": (str, None), "lengthscale": (float, None)},
    "beta": (float, None),
    "prior_mean": (float, None),
    "model": {
        "mode": (str, None),
        "latent_dim": (int, None),
        "inducing_count": (int, None),
    },
    "fit": dict(_FIT_SCHEMA),
    "adapt": dict(_FIT_SCHEMA),
    "evaluate": {
        "n_sweep": (list, None),
        "repetitions": (int, None),
        "base_seed": (int, None),
        "methods": (list, None),
    },
}

_ARTIFICIAL_DATA_KEYS = {
    "num_tasks", "samples_per_task", "noise_variance", "z_values",
    "eval_points_per_task", "num_new_tasks", "new_task_samples", "seed",
}
_VDP_DATA_KEYS = {
    "alphas", "sequences_per_task", "points_per_sequence", "dt", "substep",
    "initial_state", "eval_sequences_per_task", "num_new_tasks",
    "new_task_sequences", "seed",
}

DEFAULT_HYPERPARAMS = {
    "artificial": {"lengthscale": 0.2, "beta": 25.0},
    "vdp": {"lengthscale": 0.6, "beta": 50.0},
}


def _validate(doc, schema, path="") -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"section {path or '<root>'} must be an object")
    for key, value in doc.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown configuration key {where!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            _validate(value, spec, where)
            continue
        expected, _ = spec
        if expected is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            continue
        if expected is int and isinstance(value, bool):
            raise ConfigError(f"key {where!r} must be an integer")
        if value is not None and not isinstance(value, expected):
            raise ConfigError(f"key {where!r} must be of type {expected.__name__}")


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration file {path} is not valid JSON: {exc}")
    _validate(doc, _SCHEMA)
    return doc


def _require_experiment(doc: dict, flag) -> str:
    experiment = flag or doc.get("experiment")
    if experiment is None:
        raise ConfigError("missing required field 'experiment' (set it in the config or pass --experiment)")
    if experiment not in ("artificial", "vdp"):
        raise ConfigError(f"experiment must be 'artificial' or 'vdp', got {experiment!r}")
    return experiment


def _data_config(doc: dict, experiment: str) -> dict:
    data = dict(doc.get("data", {}))
    allowed = _ARTIFICIAL_DATA_KEYS if experiment == "artificial" else _VDP_DATA_KEYS
    for key in data:
        if key not in allowed:
            raise ConfigError(f"key 'data.{key}' does not apply to the {experiment} experiment")
    if "initial_state" in data and data["initial_state"] is not None:
        data["initial_state"] = tuple(float(v) for v in data["initial_state"])
    return data


def _fit_options(doc: dict, section: str) -> FitOptions:
    kwargs = {k: v for k, v in doc.get(section, {}).items() if v is not None}
    if section == "adapt" and not kwargs:
        return FitOptions(rel_tol=1e-6, max_iters=20_000)
    try:
        return FitOptions(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section} options: {exc}")


def _hyper(doc: dict, experiment: str):
    defaults = DEFAULT_HYPERPARAMS[experiment]
    kernel_doc = doc.get("kernel", {})
    lengthscale = kernel_doc.get("lengthscale", defaults["lengthscale"])
    kind = kernel_doc.get("kind", "rbf")
    beta = doc.get("beta", defaults["beta"])
    prior_mean = doc.get("prior_mean", 0.0)
    try:
        kernel = KernelConfig(kind=kind, lengthscale=float(lengthscale))
        prior = GpPrior(kernel=kernel, beta=float(beta), mean_fn=float(prior_mean))
    except ValueError as exc:
        raise ConfigError(str(exc))
    return prior


def _float_list(values) -> list:
    return [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]


# ---------------------------------------------------------------------------
# Commands.


def cmd_generate(args) -> int:
    doc = load_config(args.config)
    experiment = _require_experiment(doc, args.experiment)
    data_cfg = _data_config(doc, experiment)
    if experiment == "artificial":
        dataset = ds.gen_artificial(ds.ArtificialConfig(**data_cfg))
    else:
        dataset = ds.vdp_tasks(ds.VdpConfig(**data_cfg))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ds.write_dataset_csv(dataset, outdir / "dataset.csv")
    echo = dict(doc)
    echo["experiment"] = experiment
    manifest = {
        "experiment": experiment,
        "config": echo,
        "config_hash": ev.config_hash(echo),
        "train_task_ids": [t.task_id for t in dataset.train_tasks],
        "new_task_ids": [t.task_id for t in dataset.new_tasks],
        "latents_train": _float_list(dataset.latents_train),
        "latents_new": _float_list(dataset.latents_new),
    }
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {outdir / 'dataset.csv'} and manifest (config hash {manifest['config_hash'][:12]})")
    return 0


def _load_manifest(data_dir: Path) -> dict:
    path = data_dir / "manifest.json"
    if not path.exists():
        raise DataError(f"no manifest.json in {data_dir}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_training_data(data_dir: Path):
    manifest = _load_manifest(data_dir)
    csv_path = data_dir / "dataset.csv"
    if not csv_path.exists():
        raise DataError(f"no dataset.csv in {data_dir}")
    dataset = ds.read_dataset_csv(csv_path, manifest["train_task_ids"], manifest["new_task_ids"])
    return manifest, dataset


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    manifest, dataset = _load_training_data(data_dir)
    doc = load_config(args.config) if args.config else manifest.get("config", {})
    _validate(doc, _SCHEMA)
    experiment = manifest["experiment"]
    prior = _hyper(doc, experiment)
    model_doc = doc.get("model", {})
    mode = args.mode or model_doc.get("mode", "sparse")
    latent_dim = args.latent_dim if args.latent_dim is not None else model_doc.get("latent_dim", 1)
    if mode not in ("exact", "sparse"):
        raise ConfigError(f"mode must be 'exact' or 'sparse', got {mode!r}")
    tasks = dataset.train_tasks
    if latent_dim >= len(tasks):
        raise ConfigError(
            f"latent dimension {latent_dim} must be at most {len(tasks) - 1} "
            f"for {len(tasks)} training tasks"
        )
    inducing = None
    if mode == "sparse":
        count = model_doc.get("inducing_count", 12)
        inducing = grid_inducing(np.vstack([t.inputs for t in tasks]), count)
    opts = _fit_options(doc, "fit")
    model = gp_pca.train(tasks, prior, latent_dim, mode=mode, opts=opts, inducing=inducing)
    train_echo = {
        "manifest_hash": manifest["config_hash"],
        "mode": mode,
        "latent_dim": latent_dim,
        "kernel": {"kind": prior.kernel.kind, "lengthscale": prior.kernel.lengthscale},
        "beta": prior.beta,
        "prior_mean": float(prior.mean_fn),
        "fit": {k: getattr(opts, k) for k in ("learning_rate", "max_iters", "rel_tol", "seed", "backtrack_factor")},
        "inducing_count": len(inducing) if inducing is not None else None,
    }
    gp_pca.save_model(model, args.out, config_hash=ev.config_hash(train_echo))
    fr = model.fit_result
    print(
        f"trained {mode} model on {len(tasks)} tasks: objective {fr.objective!r} "
        f"after {fr.iterations} iterations (converged={fr.converged})"
    )
    print(f"wrote {args.out}")
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, num = spec.split(":")
        return np.linspace(float(lo), float(hi), int(num)).reshape(-1, 1)
    except ValueError:
        raise ConfigError(f"--grid must look like 'start:stop:count', got {spec!r}")


def _read_xy_csv(path) -> TaskData:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[-1] != "y" or not all(h.startswith("x") for h in header[:-1]):
                raise DataError(f"{path}: expected header x[,x1,...],y, got {header}")
            xs, ys = [], []
            for rec in reader:
                xs.append([float(v) for v in rec[:-1]])
                ys.append(float(rec[-1]))
    except FileNotFoundError:
        raise DataError(f"few-shot file not found: {path}")
    except (StopIteration, IndexError, ValueError) as exc:
        raise DataError(f"{path}: malformed few-shot CSV ({exc})")
    if not xs:
        raise DataError(f"{path}: no observations")
    return TaskData(inputs=np.asarray(xs), outputs=np.asarray(ys), task_id=-1)


def _prediction_inputs(args) -> np.ndarray:
    if args.grid:
        return _parse_grid(args.grid)
    if args.inputs:
        return _read_inputs_csv(args.inputs)
    raise ConfigError("provide either --grid or --inputs")


def _read_inputs_csv(path) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not all(h.startswith("x") for h in header):
                raise DataError(f"{path}: expected header of x columns, got {header}")
            rows = [[float(v) for v in rec] for rec in reader]
    except FileNotFoundError:
        raise DataError(f"inputs file not found: {path}")
    except (StopIteration, ValueError) as exc:
        raise DataError(f"{path}: malformed inputs CSV ({exc})")
    if not rows:
        raise DataError(f"{path}: no input rows")
    return np.asarray(rows)


def _write_prediction_csv(path, points: np.ndarray, means, variances) -> None:
    x_cols = ["x"] if points.shape[1] == 1 else [f"x{j}" for j in range(points.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*x_cols, "mean", "variance"])
        for row, m, v in zip(points, means, variances):
            writer.writerow([*(repr(float(c)) for c in row), repr(float(m)), repr(float(v))])


def cmd_predict(args) -> int:
    model = _load_model_checked(args.model)
    if args.task is not None and args.weights:
        raise ConfigError("pass either --task or --weights, not both")
    if args.task is not None:
        target = args.task
        if not 0 <= target < model.num_tasks:
            raise ConfigError(f"--task {target} out of range [0, {model.num_tasks})")
    elif args.weights:
        target = np.asarray([float(v) for v in args.weights.split(",")])
        if target.shape[0] != model.latent_dim:
            raise ConfigError(
                f"--weights needs {model.latent_dim} components, got {target.shape[0]}"
            )
    else:
        raise ConfigError("provide either --task or --weights")
    points = _prediction_inputs(args)
    means, variances = gp_pca.predict_batch(model, target, points)
    _write_prediction_csv(args.out, points, means, variances)
    print(f"wrote {args.out} ({points.shape[0]} predictions)")
    return 0


def _load_model_checked(path) -> gp_pca.GpPcaModel:
    try:
        return gp_pca.load_model(path)
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}")
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load model {path}: {exc}")


def cmd_adapt(args) -> int:
    model = _load_model_checked(args.model)
    fewshot = _read_xy_csv(args.data)
    doc = load_config(args.config) if args.config else {}
    opts = _fit_options(doc, "adapt")
    w = gp_pca.adapt_new_task(model, fewshot, opts)
    print("adapted weights:", json.dumps([float(v) for v in w]))
    if args.out:
        augmented = gp_pca.with_extra_task(model, w)
        gp_pca.save_model(augmented, args.out, config_hash="")
        print(f"wrote {args.out} (task index {augmented.num_tasks - 1})")
    return 0


def cmd_evaluate(args) -> int:
    doc = load_config(args.config)
    experiment = _require_experiment(doc, None)
    data_cfg = _data_config(doc, experiment)
    data_cfg.pop("samples_per_task", None)
    data_cfg.pop("sequences_per_task", None)
    prior_defaults = DEFAULT_HYPERPARAMS[experiment]
    kernel_doc = doc.get("kernel", {})
    model_doc = doc.get("model", {})
    eval_doc = doc.get("evaluate", {})
    cfg = ev.ExperimentConfig(
        experiment=experiment,
        n_sweep=tuple(eval_doc.get("n_sweep", [10])),
        repetitions=eval_doc.get("repetitions", 5),
        base_seed=eval_doc.get("base_seed", 0),
        methods=tuple(eval_doc.get("methods", [ev.METHOD_GP, ev.METHOD_SUBSPACE])),
        mode=model_doc.get("mode", "sparse"),
        latent_dim=model_doc.get("latent_dim", 1),
        inducing_count=model_doc.get("inducing_count", 12),
        lengthscale=float(kernel_doc.get("lengthscale", prior_defaults["lengthscale"])),
        beta=float(doc.get("beta", prior_defaults["beta"])),
        prior_mean=float(doc.get("prior_mean", 0.0)),
        data=data_cfg,
        fit_opts=_fit_options(doc, "fit"),
        adapt_opts=_fit_options(doc, "adapt"),
        jobs=args.jobs,
    )
    report = ev.run_experiment(cfg)
    ev.write_report_files(report, args.out)
    print(f"config hash {report.config_hash[:12]}; wrote report files to {args.out}")
    for row in report.summary():
        print(
            f"  {row['method']:8s} N={row['n']:<4d} {row['split']:5s} "
            f"rmse {row['mean_rmse']:.4f} +- {row['std_rmse']:.4f}"
        )
    print(f"total wall clock: {report.timings['total_seconds']:.1f}s")
    return 0


def cmd_export_plot(args) -> int:
    if args.kind == "rmse":
        if not args.report:
            raise ConfigError("--kind rmse needs --report DIR")
        summary_path = Path(args.report) / "summary.json"
        if not summary_path.exists():
            raise DataError(f"no summary.json in {args.report}")
        with open(summary_path, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "N", "split", "mean_rmse", "std_rmse"])
            for row in summary["summary"]:
                writer.writerow(
                    [row["method"], row["n"], row["split"],
                     repr(row["mean_rmse"]), repr(row["std_rmse"])]
                )
    elif args.kind == "latent":
        if not args.report:
            raise ConfigError("--kind latent needs --report DIR")
        latents_path = Path(args.report) / "latents.csv"
        if not latents_path.exists():
            raise DataError(f"no latents.csv in {args.report}")
        with open(latents_path, newline="", encoding="utf-8") as src:
            rows = list(csv.reader(src))
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
    elif args.kind == "curves":
        if not args.model:
            raise ConfigError("--kind curves needs --model FILE")
        model = _load_model_checked(args.model)
        points = _parse_grid(args.grid or "0:1:101")
        latents = None
        if args.data:
            latents = _load_manifest(Path(args.data)).get("latents_train")
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["task_id", "x", "mean", "variance"]
            if latents is not None:
                header.append("latent")
            writer.writerow(header)
            for i in range(model.num_tasks):
                means, variances = gp_pca.predict_batch(model, i, points)
                for x, m, v in zip(points[:, 0], means, variances):
                    row = [i, repr(float(x)), repr(float(m)), repr(float(v))]
                    if latents is not None:
                        row.append(repr(float(latents[i])) if i < len(latents) else "")
                    writer.writerow(row)
    else:
        raise ConfigError(f"unknown --kind {args.kind!r}")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gppca",
        description="Subspace learning over GP posteriors: generate, train, predict, adapt, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate an experiment dataset")
    p.add_argument("--experiment", choices=["artificial", "vdp"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the shared subspace on a dataset")
    p.add_argument("--data", required=True, help="dataset directory from `generate`")
    p.add_argument("--mode", choices=["exact", "sparse"])
    p.add_argument("--latent-dim", type=int, dest="latent_dim")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--task", type=int)
    p.add_argument("--weights")
    p.add_argument("--grid", help="start:stop:count over a 1-D input range")
    p.add_argument("--inputs", help="CSV of input points (x columns)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("adapt", help="place a new task on the subspace from few observations")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="few-shot CSV with columns x[,...],y")
    p.add_argument("--config")
    p.add_argument("--out", help="write the augmented model here")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("evaluate", help="run the multi-task benchmark protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-plot", help="emit plot-ready CSV tables")
    p.add_argument("--kind", required=True, choices=["rmse", "latent", "curves"])
    p.add_argument("--report", help="report directory from `evaluate`")
    p.add_argument("--model", help="model file for --kind curves")
    p.add_argument("--data", help="dataset directory (adds latents to curves)")
    p.add_argument("--grid", help="start:stop:count for --kind curves")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (DecompositionError, ValidityError, ValidityStallError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
