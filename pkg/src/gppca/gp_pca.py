"""Multi-task subspace learning over GP posteriors, prediction, adaptation.

Training builds one Gaussian coordinate point per task, either

- exact mode: the posterior of f(X) over the deduplicated union X of all
  task inputs, converted to natural coordinates, or
- sparse mode: the variational posterior over a given inducing set, in the
  rescaled chart of `sparse_gp` (a KL-isometric linear substitution),

and fits a flat subspace through those points with `epca`. Every point on
the fitted subspace is again a valid posterior parameter, so predictions at
arbitrary inputs come from reconstructing a task's coordinates and running
the ordinary predictive equations. The extension from the anchor set to any
test set is an affine map of the coordinates that preserves KL divergences
(`joint_posterior_coords` realizes it explicitly), which is what makes
fitting over the anchor set equivalent to fitting over any enlarged input
set.

New tasks are placed on the subspace by computing their posterior
coordinates from the few observations available and projecting onto the
fitted subspace (the unique KL-minimizing projection).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_solve

from gppca import epca
from gppca.epca import FitOptions, FitResult, Subspace, ValidityError
from gppca.gaussian_geometry import (
    DecompositionError,
    MomentGaussian,
    NaturalCoord,
    _sym,
    chol_pd,
    moment_to_natural,
    natural_to_moment,
    pack_natural,
    unpack_natural,
)
from gppca.kernels_gp import (
    GpPrior,
    KernelConfig,
    TaskData,
    as_points,
    exact_posterior,
    gram,
    predictive_batch,
    union_inputs,
)
from gppca.sparse_gp import (
    InducingSet,
    SparsePosterior,
    sparse_predictive_batch,
    variational_coords,
)

__all__ = [
    "GpPcaModel",
    "TaskPrediction",
    "train",
    "task_coordinates",
    "predict",
    "predict_batch",
    "adapt_new_task",
    "joint_posterior_coords",
    "save_model",
    "load_model",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TaskPrediction:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"variance must be nonnegative, got {self.variance}")


@dataclass(frozen=True)
class GpPcaModel:
    """Trained artifact: prior, anchor inputs, fitted subspace and task weights.

    In exact mode `anchor` is the union of the training inputs; in sparse
    mode it is the inducing set and all coordinates live in the rescaled
    chart. `fit_result` carries training diagnostics and is not persisted.
    """

    prior: GpPrior
    anchor: np.ndarray
    subspace: Subspace
    weights: np.ndarray
    mode: str
    latent_dim: int
    fit_result: Optional[FitResult] = None

    def __post_init__(self):
        anchor = as_points(self.anchor)
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 2:
            if self.latent_dim == 0:
                weights = weights.reshape(max(weights.shape[0], 0) if weights.ndim else 0, 0)
            else:
                weights = weights.reshape(-1, self.latent_dim)
        if anchor.shape[0] < 1:
            raise ValueError("anchor must be nonempty")
        if self.mode not in ("exact", "sparse"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if weights.ndim != 2 or weights.shape[1] != self.latent_dim:
            raise ValueError(f"weights shape {weights.shape} does not match latent dim")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "weights", weights)

    @property
    def num_tasks(self) -> int:
        return self.weights.shape[0]


def task_coordinates(
    tasks: Sequence[TaskData],
    prior: GpPrior,
    mode: str,
    inducing: Optional[InducingSet] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Flattened natural coordinates of each task posterior, plus the anchor."""
    if mode == "exact":
        anchor = union_inputs(tasks)
        coords = []
        for task in tasks:
            rho = exact_posterior(prior, task, anchor)
            coords.append(pack_natural(moment_to_natural(rho)))
        return np.asarray(coords), anchor
    if mode == "sparse":
        if inducing is None:
            raise ValueError("sparse mode requires an inducing set")
        coords = []
        for task in tasks:
            nat, _ = variational_coords(prior, task, inducing)
            coords.append(pack_natural(nat))
        return np.asarray(coords), inducing.points
    raise ValueError(f"unknown mode {mode!r}")


def train(
    tasks: Sequence[TaskData],
    prior: GpPrior,
    latent_dim: int,
    mode: str = "exact",
    opts: Optional[FitOptions] = None,
    inducing: Optional[InducingSet] = None,
) -> GpPcaModel:
    """Fit the shared subspace through all task posteriors.

    Requires at least two tasks and latent_dim <= len(tasks) - 1. The
    returned model's stored objective is exactly `epca.objective` of its
    weights and subspace on the training coordinates.
    """
    tasks = list(tasks)
    if len(tasks) < 2:
        raise ValueError(f"need at least two tasks, got {len(tasks)}")
    if latent_dim > len(tasks) - 1:
        raise ValueError(f"latent dimension {latent_dim} exceeds task count {len(tasks)} - 1")
    coords, anchor = task_coordinates(tasks, prior, mode, inducing)
    try:
        result = epca.fit(coords, latent_dim, opts, mode="e_flat")
    except ValidityError as exc:
        raise ValidityError(exc.task_index, "e_flat") from exc
    return GpPcaModel(
        prior=prior,
        anchor=anchor,
        subspace=result.subspace,
        weights=result.weights,
        mode=mode,
        latent_dim=latent_dim,
        fit_result=result,
    )


def _reconstructed_moments(model: GpPcaModel, w: np.ndarray) -> MomentGaussian:
    flat = epca.reconstruct(w, model.subspace)
    nat = unpack_natural(flat, model.anchor.shape[0])
    try:
        return natural_to_moment(nat)
    except DecompositionError as exc:
        raise ValidityError(-1, "e_flat") from exc


def _resolve_weights(model: GpPcaModel, task_or_weights) -> np.ndarray:
    if isinstance(task_or_weights, (int, np.integer)):
        idx = int(task_or_weights)
        if not 0 <= idx < model.num_tasks:
            raise IndexError(f"task index {idx} out of range [0, {model.num_tasks})")
        return model.weights[idx]
    w = np.asarray(task_or_weights, dtype=float).reshape(-1)
    if w.shape[0] != model.latent_dim:
        raise ValueError(f"weight length {w.shape[0]} != latent dim {model.latent_dim}")
    return w


def predict_batch(model: GpPcaModel, task_or_weights, x_plus):
    """Means and variances at each test point for a task index or weight vector."""
    w = _resolve_weights(model, task_or_weights)
    rho = _reconstructed_moments(model, w)
    if model.mode == "exact":
        return predictive_batch(model.prior, rho, model.anchor, x_plus)
    sp = SparsePosterior(mu_prime=rho.mu, sigma_prime=rho.sigma)
    return sparse_predictive_batch(model.prior, sp, InducingSet(model.anchor), x_plus)


def predict(model: GpPcaModel, task_or_weights, x_plus) -> TaskPrediction:
    """Prediction at a single test input."""
    means, variances = predict_batch(model, task_or_weights, x_plus)
    return TaskPrediction(mean=float(means[0]), variance=float(variances[0]))


def adapt_new_task(
    model: GpPcaModel, fewshot: TaskData, opts: Optional[FitOptions] = None
) -> np.ndarray:
    """Weights of a new task from few observations.

    Computes the new task's posterior coordinates over the model's anchor
    under the model's prior and projects them onto the fitted subspace.
    """
    if len(fewshot) == 0:
        raise ValueError("few-shot task must contain at least one observation")
    if model.mode == "exact":
        # The anchor stays fixed by the model, not re-derived from the few-shot inputs.
        rho = exact_posterior(model.prior, fewshot, model.anchor)
        flat = pack_natural(moment_to_natural(rho))
    else:
        nat, _ = variational_coords(model.prior, fewshot, InducingSet(model.anchor))
        flat = pack_natural(nat)
    return epca.project_point(flat, model.subspace, opts)


def joint_posterior_coords(prior: GpPrior, rho: MomentGaussian, anchor, test) -> NaturalCoord:
    """Natural coordinates of the posterior extended to anchor plus test inputs.

    The extension q(f+, f) = p(f+ | f) q(f) has moments

        mu*      = mu0(X*) + K* K^-1 (mu - mu0(X))
        Sigma**  = K** + K* K^-1 (Sigma - K) K^-1 K*^T

    over X* = X union X+ (anchor block first). The induced coordinate map is
    affine and KL-preserving; test points duplicating anchor points are
    dropped. With no test points this is the identity on coordinates.
    """
    anchor = as_points(anchor)
    test = as_points(test) if test is not None else np.zeros((0, anchor.shape[1]))
    if rho.dim != anchor.shape[0]:
        raise ValueError(f"posterior dim {rho.dim} does not match anchor size {anchor.shape[0]}")
    fresh = []
    for row in test:
        close = np.max(np.abs(anchor - row), axis=1) <= 1e-12
        if not bool(np.any(close)):
            fresh.append(row)
    if not fresh:
        return moment_to_natural(rho)
    union = np.vstack([anchor, np.asarray(fresh)])
    k_anchor = gram(prior.kernel, anchor, anchor)
    chol = chol_pd(k_anchor, "K(anchor, anchor)")
    k_star = gram(prior.kernel, union, anchor)
    b = cho_solve((chol, True), k_star.T)  # K^-1 K*^T, (n, M)
    mu_star = prior.mean_at(union) + b.T @ (rho.mu - prior.mean_at(anchor))
    k_union = gram(prior.kernel, union, union)
    sigma_star = k_union + b.T @ (rho.sigma - k_anchor) @ b
    return moment_to_natural(MomentGaussian(mu=mu_star, sigma=_sym(sigma_star)))


# ---------------------------------------------------------------------------
# Persistence: versioned JSON with row-major arrays at full precision.


def _require(doc: dict, key: str):
    if key not in doc:
        raise ValueError(f"model file is missing field {key!r}")
    return doc[key]


def model_to_dict(model: GpPcaModel, config_hash: str = "") -> dict:
    if callable(model.prior.mean_fn):
        raise ValueError("only constant prior means can be persisted")
    return {
        "version": MODEL_FORMAT_VERSION,
        "mode": model.mode,
        "kernel": {
            "kind": model.prior.kernel.kind,
            "lengthscale": float(model.prior.kernel.lengthscale),
        },
        "beta": float(model.prior.beta),
        "latent_dim": int(model.latent_dim),
        "anchor": [[float(v) for v in row] for row in model.anchor],
        "u0": [float(v) for v in model.subspace.u0],
        "basis": [[float(v) for v in row] for row in model.subspace.basis],
        "weights": [[float(v) for v in row] for row in model.weights],
        "prior_mean_constant": float(model.prior.mean_fn),
        "config_hash": config_hash,
    }


def model_from_dict(doc: dict) -> GpPcaModel:
    version = _require(doc, "version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    kernel_doc = _require(doc, "kernel")
    prior = GpPrior(
        kernel=KernelConfig(
            kind=_require(kernel_doc, "kind"),
            lengthscale=float(_require(kernel_doc, "lengthscale")),
        ),
        beta=float(_require(doc, "beta")),
        mean_fn=float(_require(doc, "prior_mean_constant")),
    )
    latent_dim = int(_require(doc, "latent_dim"))
    anchor = np.asarray(_require(doc, "anchor"), dtype=float)
    u0 = np.asarray(_require(doc, "u0"), dtype=float)
    basis = np.asarray(_require(doc, "basis"), dtype=float).reshape(latent_dim, u0.shape[0])
    weights = np.asarray(_require(doc, "weights"), dtype=float).reshape(-1, latent_dim)
    return GpPcaModel(
        prior=prior,
        anchor=anchor,
        subspace=Subspace(u0=u0, basis=basis, mode="e_flat"),
        weights=weights,
        mode=_require(doc, "mode"),
        latent_dim=latent_dim,
    )


def save_model(model: GpPcaModel, path, config_hash: str = "") -> None:
    doc = model_to_dict(model, config_hash)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> GpPcaModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def with_extra_task(model: GpPcaModel, w: np.ndarray) -> GpPcaModel:
    """Model with one more weight row (an adapted task) appended."""
    w = np.asarray(w, dtype=float).reshape(1, model.latent_dim)
    return replace(model, weights=np.vstack([model.weights, w]), fit_result=None)
