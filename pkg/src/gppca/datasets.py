"""Deterministic generators for the two benchmark task families.

Artificial curves: each task interpolates between a sinusoid and a shifted
parabola through a latent z in [0, 1],

    y = z sin(2 pi x) + (1 - z) ((-x - 1)^2 + 1) + eps,   x ~ U(0, 1)

with Gaussian observation noise. Training-task latents sit on an even grid;
held-out task latents are drawn uniformly from a dedicated stream.

Van der Pol vector fields: tasks are damped oscillators

    x'' - alpha (1 - x^2) x' + x = 0

integrated by fixed-step RK4 from a common initial state. Each task's
trajectory is recorded at a coarse step and chopped into sequences of J
points; regression pairs are (x_j, v_j) with the forward difference
v_j = (x_{j+1} - x_j) / (t_{j+1} - t_j), giving N (J - 1) pairs per task.
Evaluation sequences restart from random initial states.

All randomness flows through numpy SeedSequence children keyed by purpose
and task index, so resizing one part of a dataset never reshuffles another.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from gppca.kernels_gp import TaskData

__all__ = [
    "ArtificialConfig",
    "VdpConfig",
    "MultiTaskDataset",
    "artificial_curve",
    "gen_artificial",
    "integrate_vdp",
    "vdp_tasks",
    "write_dataset_csv",
    "read_dataset_csv",
]

# Purpose keys for seed streams; stable across config changes.
_STREAM_TRAIN_X = 0
_STREAM_TRAIN_NOISE = 1
_STREAM_EVAL_X = 2
_STREAM_EVAL_NOISE = 3
_STREAM_NEW_LATENT = 4
_STREAM_NEW_X = 5
_STREAM_NEW_NOISE = 6
_STREAM_NEW_EVAL_X = 7
_STREAM_NEW_EVAL_NOISE = 8
_STREAM_VDP_INIT = 9
_STREAM_VDP_EVAL_INIT = 10


def _rng(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, index)))


@dataclass(frozen=True)
class MultiTaskDataset:
    """Training tasks with per-task evaluation splits, plus held-out tasks."""

    train_tasks: list
    train_eval: list
    new_tasks: list
    new_eval: list
    latents_train: np.ndarray
    latents_new: np.ndarray


@dataclass(frozen=True)
class ArtificialConfig:
    num_tasks: int = 20
    samples_per_task: int = 10
    noise_variance: float = 0.04
    seed: int = 0
    z_values: Optional[Sequence[float]] = None  # None: even grid on [0, 1]
    eval_points_per_task: int = 100
    num_new_tasks: int = 100
    new_task_samples: Optional[int] = None  # None: same as samples_per_task

    def __post_init__(self):
        if self.num_tasks < 1 or self.samples_per_task < 1:
            raise ValueError("num_tasks and samples_per_task must be at least 1")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")


def artificial_curve(z: float, x) -> np.ndarray:
    """Noise-free task curve: z sin(2 pi x) + (1 - z) ((-x - 1)^2 + 1)."""
    x = np.asarray(x, dtype=float)
    return z * np.sin(2.0 * np.pi * x) + (1.0 - z) * ((-x - 1.0) ** 2 + 1.0)


def _sample_artificial_task(z, n, noise_std, rng_x, rng_eps, task_id) -> TaskData:
    x = rng_x.uniform(0.0, 1.0, size=n)
    eps = rng_eps.normal(0.0, noise_std, size=n)
    return TaskData(inputs=x.reshape(-1, 1), outputs=artificial_curve(z, x) + eps, task_id=task_id)


def gen_artificial(cfg: ArtificialConfig) -> MultiTaskDataset:
    """Training tasks on the latent grid plus freshly drawn held-out tasks."""
    if cfg.z_values is not None:
        z_train = np.asarray(list(cfg.z_values), dtype=float)
        if z_train.shape[0] != cfg.num_tasks:
            raise ValueError(f"{z_train.shape[0]} z values for {cfg.num_tasks} tasks")
    elif cfg.num_tasks == 1:
        z_train = np.array([0.5])
    else:
        z_train = np.linspace(0.0, 1.0, cfg.num_tasks)
    noise_std = float(np.sqrt(cfg.noise_variance))
    new_n = cfg.new_task_samples if cfg.new_task_samples is not None else cfg.samples_per_task

    train_tasks, train_eval = [], []
    for i, z in enumerate(z_train):
        train_tasks.append(
            _sample_artificial_task(
                z, cfg.samples_per_task, noise_std,
                _rng(cfg.seed, _STREAM_TRAIN_X, i), _rng(cfg.seed, _STREAM_TRAIN_NOISE, i), i,
            )
        )
        train_eval.append(
            _sample_artificial_task(
                z, cfg.eval_points_per_task, noise_std,
                _rng(cfg.seed, _STREAM_EVAL_X, i), _rng(cfg.seed, _STREAM_EVAL_NOISE, i), i,
            )
        )

    z_new = _rng(cfg.seed, _STREAM_NEW_LATENT).uniform(0.0, 1.0, size=cfg.num_new_tasks)
    new_tasks, new_eval = [], []
    for j, z in enumerate(z_new):
        tid = cfg.num_tasks + j
        new_tasks.append(
            _sample_artificial_task(
                z, new_n, noise_std,
                _rng(cfg.seed, _STREAM_NEW_X, j), _rng(cfg.seed, _STREAM_NEW_NOISE, j), tid,
            )
        )
        new_eval.append(
            _sample_artificial_task(
                z, cfg.eval_points_per_task, noise_std,
                _rng(cfg.seed, _STREAM_NEW_EVAL_X, j), _rng(cfg.seed, _STREAM_NEW_EVAL_NOISE, j), tid,
            )
        )
    return MultiTaskDataset(
        train_tasks=train_tasks,
        train_eval=train_eval,
        new_tasks=new_tasks,
        new_eval=new_eval,
        latents_train=z_train,
        latents_new=z_new,
    )


@dataclass(frozen=True)
class VdpConfig:
    alphas: Optional[Sequence[float]] = None  # None: 10 values evenly in [0.1, 1.0]
    sequences_per_task: int = 10
    points_per_sequence: int = 5
    dt: float = 0.1  # spacing of recorded points
    substep: float = 0.01  # RK4 integration step
    initial_state: tuple = (2.0, 0.0)
    seed: int = 0
    eval_sequences_per_task: int = 100
    eval_burn_in: float = 1.0  # time integrated before an eval sequence starts
    num_new_tasks: int = 10
    new_task_sequences: Optional[int] = None

    def __post_init__(self):
        if self.points_per_sequence < 2:
            raise ValueError("points_per_sequence must be at least 2")
        if not (self.dt > 0 and self.substep > 0):
            raise ValueError("dt and substep must be positive")

    def alpha_grid(self) -> np.ndarray:
        if self.alphas is not None:
            a = np.asarray(list(self.alphas), dtype=float)
        else:
            a = np.linspace(0.1, 1.0, 10)
        if np.any(a < 0):
            raise ValueError("alpha must be nonnegative")
        return a


def _vdp_rhs(state: np.ndarray, alpha: float) -> np.ndarray:
    x, v = state
    return np.array([v, alpha * (1.0 - x * x) * v - x])


def integrate_vdp(alpha: float, state0, dt: float, steps: int) -> np.ndarray:
    """Fixed-step RK4 trajectory, rows (t, x, dx/dt), steps+1 of them."""
    state = np.asarray(state0, dtype=float).reshape(2)
    out = np.empty((steps + 1, 3))
    out[0] = (0.0, state[0], state[1])
    t = 0.0
    for n in range(1, steps + 1):
        k1 = _vdp_rhs(state, alpha)
        k2 = _vdp_rhs(state + 0.5 * dt * k1, alpha)
        k3 = _vdp_rhs(state + 0.5 * dt * k2, alpha)
        k4 = _vdp_rhs(state + dt * k3, alpha)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
        out[n] = (t, state[0], state[1])
    return out


def _record_trajectory(alpha, state0, dt, substep, n_points) -> np.ndarray:
    """Trajectory sampled every `dt` using RK4 substeps; rows (t, x, v)."""
    stride = max(int(round(dt / substep)), 1)
    fine = integrate_vdp(alpha, state0, dt / stride, (n_points - 1) * stride)
    return fine[::stride][:n_points]


def _sequences_to_pairs(recorded: np.ndarray, seq_len: int, task_id: int) -> TaskData:
    """Forward-difference pairs (x_j, v_j) within each length-`seq_len` block."""
    n_seq = recorded.shape[0] // seq_len
    xs, vs = [], []
    for s in range(n_seq):
        block = recorded[s * seq_len : (s + 1) * seq_len]
        t, x = block[:, 0], block[:, 1]
        vs.append((x[1:] - x[:-1]) / (t[1:] - t[:-1]))
        xs.append(x[:-1])
    return TaskData(
        inputs=np.concatenate(xs).reshape(-1, 1),
        outputs=np.concatenate(vs),
        task_id=task_id,
    )


def _vdp_task(alpha, initials, cfg: VdpConfig, task_id: int, burn_in: float = 0.0) -> TaskData:
    """One task: one recorded block per initial state, chopped into pairs.

    A positive burn-in integrates the state toward the attractor before the
    recorded sequence starts, so randomly seeded sequences measure the
    settled dynamics rather than arbitrary transients.
    """
    blocks = []
    for s0 in initials:
        if burn_in > 0.0:
            steps = max(int(round(burn_in / cfg.substep)), 1)
            s0 = integrate_vdp(alpha, s0, cfg.substep, steps)[-1, 1:3]
        blocks.append(_record_trajectory(alpha, s0, cfg.dt, cfg.substep, cfg.points_per_sequence))
    recorded = np.concatenate(blocks, axis=0)
    return _sequences_to_pairs(recorded, cfg.points_per_sequence, task_id)


def _chained_initials(alpha, state0, cfg: VdpConfig, n_seq: int) -> list[np.ndarray]:
    """Initial states of consecutive sequences along one continuous trajectory.

    Sequence n starts where sequence n-1 ended, so every task shares the
    same single entry point while still covering the cycle.
    """
    total = n_seq * cfg.points_per_sequence
    recorded = _record_trajectory(alpha, state0, cfg.dt, cfg.substep, total)
    return [recorded[n * cfg.points_per_sequence, 1:3] for n in range(n_seq)]


def vdp_tasks(cfg: VdpConfig) -> MultiTaskDataset:
    """Oscillator tasks on the alpha grid plus held-out tasks at random alphas.

    Training sequences continue one trajectory from the shared initial
    state, so initial points coincide across tasks. Evaluation sequences
    start at random states from a dedicated stream, shared across tasks.
    """
    alphas = cfg.alpha_grid()
    new_n = cfg.new_task_sequences if cfg.new_task_sequences is not None else cfg.sequences_per_task

    eval_rng = _rng(cfg.seed, _STREAM_VDP_EVAL_INIT)
    eval_inits = eval_rng.uniform(-2.5, 2.5, size=(cfg.eval_sequences_per_task, 2))

    train_tasks, train_eval = [], []
    for i, alpha in enumerate(alphas):
        initials = _chained_initials(alpha, cfg.initial_state, cfg, cfg.sequences_per_task)
        train_tasks.append(_vdp_task(alpha, initials, cfg, i))
        train_eval.append(_vdp_task(alpha, eval_inits, cfg, i, burn_in=cfg.eval_burn_in))

    new_rng = _rng(cfg.seed, _STREAM_VDP_INIT)
    alphas_new = new_rng.uniform(0.1, 1.0, size=cfg.num_new_tasks)
    new_tasks, new_eval = [], []
    for j, alpha in enumerate(alphas_new):
        tid = len(alphas) + j
        initials = _chained_initials(alpha, cfg.initial_state, cfg, new_n)
        new_tasks.append(_vdp_task(alpha, initials, cfg, tid))
        new_eval.append(_vdp_task(alpha, eval_inits, cfg, tid, burn_in=cfg.eval_burn_in))
    return MultiTaskDataset(
        train_tasks=train_tasks,
        train_eval=train_eval,
        new_tasks=new_tasks,
        new_eval=new_eval,
        latents_train=alphas,
        latents_new=alphas_new,
    )


# ---------------------------------------------------------------------------
# CSV interchange: columns task_id, split, x..., y with a header row.


def _float_repr(v: float) -> str:
    return repr(float(v))


def write_dataset_csv(dataset: MultiTaskDataset, path) -> None:
    """One file for the whole experiment; held-out tasks keep their ids."""
    all_tasks = [
        (dataset.train_tasks, "train"),
        (dataset.train_eval, "test"),
        (dataset.new_tasks, "train"),
        (dataset.new_eval, "test"),
    ]
    p = 1
    for tasks, _ in all_tasks:
        for task in tasks:
            p = max(p, task.inputs.shape[1])
    x_cols = ["x"] if p == 1 else [f"x{j}" for j in range(p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id", "split", *x_cols, "y"])
        for tasks, split in all_tasks:
            for task in tasks:
                for row, y in zip(task.inputs, task.outputs):
                    writer.writerow(
                        [task.task_id, split, *(_float_repr(v) for v in row), _float_repr(y)]
                    )


def read_dataset_csv(path, train_ids: Sequence[int], new_ids: Sequence[int]) -> MultiTaskDataset:
    """Rebuild a dataset from CSV given the id partition recorded in a manifest."""
    rows: dict[tuple[int, str], list[tuple[list[float], float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "task_id" or header[1] != "split" or header[-1] != "y":
            raise ValueError(f"unexpected dataset header {header}")
        for rec in reader:
            tid = int(rec[0])
            split = rec[1]
            xs = [float(v) for v in rec[2:-1]]
            rows.setdefault((tid, split), []).append((xs, float(rec[-1])))

    def build(tid: int, split: str) -> TaskData:
        entries = rows.get((tid, split), [])
        if not entries:
            return TaskData(inputs=np.zeros((0, 1)), outputs=np.zeros(0), task_id=tid)
        xs = np.asarray([e[0] for e in entries], dtype=float)
        ys = np.asarray([e[1] for e in entries], dtype=float)
        return TaskData(inputs=xs, outputs=ys, task_id=tid)

    return MultiTaskDataset(
        train_tasks=[build(t, "train") for t in train_ids],
        train_eval=[build(t, "test") for t in train_ids],
        new_tasks=[build(t, "train") for t in new_ids],
        new_eval=[build(t, "test") for t in new_ids],
        latents_train=np.full(len(train_ids), np.nan),
        latents_new=np.full(len(new_ids), np.nan),
    )
