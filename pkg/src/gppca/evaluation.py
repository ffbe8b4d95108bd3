"""Benchmark protocol: subspace-sharing GP versus independent GP baselines.

For each repetition and each training-set size N, one dataset is generated
and both methods consume identical splits (verified by hashing the
evaluation arrays). The subspace method trains on all tasks jointly,
predicts training tasks from their fitted weights, and handles held-out
tasks by few-shot projection onto the learned subspace; the baseline fits a
plain GP per task on that task's own data. RMSE is computed per task over
its evaluation split, averaged over tasks to one cell value, and mean/std
are reported over repetitions.

Report files are deterministic given the configuration: timings are kept in
memory and printed, never written, so rerunning a configuration reproduces
the output files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from gppca import gp_pca
from gppca.datasets import ArtificialConfig, VdpConfig, gen_artificial, vdp_tasks
from gppca.epca import FitOptions
from gppca.kernels_gp import GpPrior, KernelConfig, gp_predictive_batch
from gppca.sparse_gp import grid_inducing

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "rmse",
    "run_experiment",
    "config_hash",
    "write_report_files",
]

METHOD_GP = "gp"
METHOD_SUBSPACE = "gp_epca"


def rmse(predicted, truth) -> float:
    """Root mean squared error between two equal-length vectors."""
    p = np.asarray(predicted, dtype=float).reshape(-1)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if p.shape != t.shape or p.size == 0:
        raise ValueError(f"need equal nonempty lengths, got {p.shape} and {t.shape}")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def config_hash(doc) -> str:
    """Hash of the canonical JSON form of a configuration object."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str  # "artificial" | "vdp"
    n_sweep: tuple = (10,)
    repetitions: int = 5
    base_seed: int = 0
    methods: tuple = (METHOD_GP, METHOD_SUBSPACE)
    mode: str = "sparse"
    latent_dim: int = 1
    inducing_count: int = 12
    lengthscale: float = 0.2
    beta: float = 25.0
    prior_mean: float = 0.0
    data: dict = field(default_factory=dict)  # generator overrides
    fit_opts: FitOptions = field(default_factory=FitOptions)
    adapt_opts: FitOptions = field(default_factory=lambda: FitOptions(rel_tol=1e-6, max_iters=20_000))
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in ("artificial", "vdp"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        for m in self.methods:
            if m not in (METHOD_GP, METHOD_SUBSPACE):
                raise ValueError(f"unknown method {m!r}")
        object.__setattr__(self, "n_sweep", tuple(int(n) for n in self.n_sweep))
        object.__setattr__(self, "methods", tuple(self.methods))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["n_sweep"] = list(self.n_sweep)
        doc["methods"] = list(self.methods)
        return doc


@dataclass
class ExperimentReport:
    config: dict
    config_hash: str
    cells: list  # {method, n, repetition, split, rmse}
    per_task: list  # cells plus task_id and latent
    latents: list  # subspace weights per task: {repetition, n, task_id, kind, latent, w...}
    split_hashes: dict  # "rep:n" -> {method: hash of evaluation arrays}
    timings: dict  # wall-clock seconds; in-memory only

    def summary(self) -> list:
        """Mean and population std of cell RMSE over repetitions."""
        keys = sorted({(c["method"], c["n"], c["split"]) for c in self.cells})
        rows = []
        for method, n, split in keys:
            vals = np.asarray(
                [
                    c["rmse"]
                    for c in self.cells
                    if (c["method"], c["n"], c["split"]) == (method, n, split)
                ]
            )
            rows.append(
                {
                    "method": method,
                    "n": n,
                    "split": split,
                    "mean_rmse": float(np.mean(vals)),
                    "std_rmse": float(np.std(vals)),
                    "repetitions": int(vals.size),
                }
            )
        return rows


def _cell_seed(base_seed: int, repetition: int) -> int:
    return int(np.random.SeedSequence(base_seed, spawn_key=(repetition,)).generate_state(1)[0])


def _make_dataset(cfg: ExperimentConfig, n: int, seed: int):
    if cfg.experiment == "artificial":
        data_cfg = ArtificialConfig(**{**cfg.data, "samples_per_task": n, "seed": seed})
        return gen_artificial(data_cfg)
    data_cfg = VdpConfig(**{**cfg.data, "sequences_per_task": n, "seed": seed})
    return vdp_tasks(data_cfg)


def _split_hash(dataset) -> str:
    h = hashlib.sha256()
    for task in [*dataset.train_eval, *dataset.new_eval]:
        h.update(np.ascontiguousarray(task.inputs).tobytes())
        h.update(np.ascontiguousarray(task.outputs).tobytes())
    return h.hexdigest()


def _per_task_rows(method, n, rep, split, tasks, evals, latents, mean_per_task):
    rows = []
    for task, eval_task, latent, means in zip(tasks, evals, latents, mean_per_task):
        rows.append(
            {
                "method": method,
                "n": n,
                "repetition": rep,
                "split": split,
                "task_id": task.task_id,
                "latent": float(latent),
                "rmse": rmse(means, eval_task.outputs),
            }
        )
    return rows


def _run_cell(cfg: ExperimentConfig, rep: int, n: int) -> dict:
    seed = _cell_seed(cfg.base_seed, rep)
    dataset = _make_dataset(cfg, n, seed)
    prior = GpPrior(
        kernel=KernelConfig(kind="rbf", lengthscale=cfg.lengthscale),
        beta=cfg.beta,
        mean_fn=cfg.prior_mean,
    )
    out = {"cells": [], "per_task": [], "latents": [], "split_hashes": {}, "timings": {}}

    for method in cfg.methods:
        start = time.perf_counter()
        out["split_hashes"][method] = _split_hash(dataset)
        if method == METHOD_GP:
            train_means = [
                gp_predictive_batch(prior, task, ev.inputs)[0]
                for task, ev in zip(dataset.train_tasks, dataset.train_eval)
            ]
            test_means = [
                gp_predictive_batch(prior, task, ev.inputs)[0]
                for task, ev in zip(dataset.new_tasks, dataset.new_eval)
            ]
        else:
            inducing = None
            if cfg.mode == "sparse":
                all_inputs = np.vstack([t.inputs for t in dataset.train_tasks])
                inducing = grid_inducing(all_inputs, cfg.inducing_count)
            model = gp_pca.train(
                dataset.train_tasks, prior, cfg.latent_dim,
                mode=cfg.mode, opts=cfg.fit_opts, inducing=inducing,
            )
            train_means = [
                gp_pca.predict_batch(model, i, ev.inputs)[0]
                for i, ev in enumerate(dataset.train_eval)
            ]
            adapted = [
                gp_pca.adapt_new_task(model, task, cfg.adapt_opts) for task in dataset.new_tasks
            ]
            test_means = [
                gp_pca.predict_batch(model, w, ev.inputs)[0]
                for w, ev in zip(adapted, dataset.new_eval)
            ]
            for i, (task, latent) in enumerate(zip(dataset.train_tasks, dataset.latents_train)):
                out["latents"].append(
                    {
                        "repetition": rep, "n": n, "task_id": task.task_id, "kind": "train",
                        "latent": float(latent),
                        **{f"w{j}": float(v) for j, v in enumerate(model.weights[i])},
                    }
                )
            for task, latent, w in zip(dataset.new_tasks, dataset.latents_new, adapted):
                out["latents"].append(
                    {
                        "repetition": rep, "n": n, "task_id": task.task_id, "kind": "new",
                        "latent": float(latent),
                        **{f"w{j}": float(v) for j, v in enumerate(w)},
                    }
                )

        train_rows = _per_task_rows(
            method, n, rep, "train",
            dataset.train_tasks, dataset.train_eval, dataset.latents_train, train_means,
        )
        test_rows = _per_task_rows(
            method, n, rep, "test",
            dataset.new_tasks, dataset.new_eval, dataset.latents_new, test_means,
        )

        for split, rows in (("train", train_rows), ("test", test_rows)):
            if rows:
                out["per_task"].extend(rows)
                out["cells"].append(
                    {
                        "method": method, "n": n, "repetition": rep, "split": split,
                        "rmse": float(np.mean([r["rmse"] for r in rows])),
                    }
                )
        out["timings"][method] = time.perf_counter() - start
    return out


def _run_cell_packed(args) -> tuple:
    cfg, rep, n = args
    return rep, n, _run_cell(cfg, rep, n)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the full protocol; deterministic given the configuration."""
    work = [(cfg, rep, n) for rep in range(cfg.repetitions) for n in cfg.n_sweep]
    start = time.perf_counter()
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            raw = list(pool.map(_run_cell_packed, work))
    else:
        raw = [_run_cell_packed(args) for args in work]
    raw.sort(key=lambda item: (item[0], item[1]))

    report = ExperimentReport(
        config=cfg.to_dict(),
        config_hash=config_hash(cfg.to_dict()),
        cells=[],
        per_task=[],
        latents=[],
        split_hashes={},
        timings={"total_seconds": 0.0, "cells": {}},
    )
    for rep, n, out in raw:
        key = f"{rep}:{n}"
        report.cells.extend(out["cells"])
        report.per_task.extend(out["per_task"])
        report.latents.extend(out["latents"])
        report.split_hashes[key] = out["split_hashes"]
        report.timings["cells"][key] = out["timings"]
    report.cells.sort(key=lambda c: (c["method"], c["n"], c["repetition"], c["split"]))
    report.per_task.sort(
        key=lambda c: (c["method"], c["n"], c["repetition"], c["split"], c["task_id"])
    )
    report.latents.sort(key=lambda c: (c["repetition"], c["n"], c["task_id"]))
    report.timings["total_seconds"] = time.perf_counter() - start
    return report


def write_report_files(report: ExperimentReport, outdir) -> None:
    """Write report.csv, per_task.csv, latents.csv and summary.json.

    Timings stay out of the files so identical configurations rewrite
    identical bytes.
    """
    import csv
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    with open(outdir / "report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "N", "repetition", "split", "rmse"])
        for c in report.cells:
            writer.writerow([c["method"], c["n"], c["repetition"], c["split"], repr(c["rmse"])])

    with open(outdir / "per_task.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "N", "repetition", "split", "task_id", "latent", "rmse"])
        for c in report.per_task:
            writer.writerow(
                [c["method"], c["n"], c["repetition"], c["split"], c["task_id"],
                 repr(c["latent"]), repr(c["rmse"])]
            )

    if report.latents:
        w_cols = sorted(k for k in report.latents[0] if k.startswith("w"))
        with open(outdir / "latents.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["repetition", "N", "task_id", "kind", "latent", *w_cols])
            for c in report.latents:
                writer.writerow(
                    [c["repetition"], c["n"], c["task_id"], c["kind"], repr(c["latent"]),
                     *(repr(c[k]) for k in w_cols)]
                )

    summary = {
        "config": report.config,
        "config_hash": report.config_hash,
        "summary": report.summary(),
        "split_hashes": report.split_hashes,
    }
    with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
