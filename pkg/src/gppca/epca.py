"""Flat-subspace PCA over Gaussian coordinate points by KL-minimizing descent.

Data are Gaussians given as flattened coordinate points (theta, vec(Theta))
or (eta, vec(H)) of length D = d + d^2. A rank-L affine subspace

    point(w) = u0 + sum_l w_l u_l

is fitted in either chart by descent on the weights W (I x L) and the
stacked basis U ((L+1) x D rows u0, u1, ..., uL):

- e_flat mode: reconstructions live in natural coordinates and the loss is
  sum_i KL(data_i || recon_i), the divergence minimized by the unique
  projection of each point onto the subspace along its mixture geodesic.
- m_flat mode: reconstructions live in expectation coordinates and the loss
  is sum_i KL(recon_i || data_i), the dual projection problem.

In both modes the per-point loss gradient with respect to the reconstruction
is simply the dual-chart residual R_i (expectation residual in e_flat mode,
natural residual in m_flat mode), giving

    dE/dW = R U~^T          (U~ = basis rows only)
    dE/dU = [1 | W]^T R     (offset row receives the plain column sum)

Iterates must stay inside the cone of valid parameters (Theta negative
definite, H - eta eta^T positive definite). The joint fit runs a
limited-memory quasi-Newton descent whose line search treats any invalid
candidate as a barrier value, so accepted iterates are always valid
Gaussians and the objective over them is non-increasing (plain alternating
gradient steps provably crawl on the scale degeneracy between W and the
basis and cannot reach the tolerances this module is tested at).
Single-point projections are convex in w and use a monotone backtracking
descent: candidates that leave the cone or fail to decrease the objective
are shrunk by `backtrack_factor`, with quasi-Newton step proposals and the
learning rate as the initial step scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from gppca.gaussian_geometry import dim_from_flat

__all__ = [
    "FitOptions",
    "Subspace",
    "FitResult",
    "ValidityError",
    "ValidityStallError",
    "ConvergenceError",
    "reconstruct",
    "objective",
    "gradients",
    "project_point",
    "fit",
]

Mode = Literal["e_flat", "m_flat"]

_MAX_BACKTRACKS = 40
_LBFGS_MEMORY = 20
_BARRIER = 1e15  # line-search value reported for reconstructions outside the cone


class ValidityError(RuntimeError):
    """A reconstructed point left the valid parameter cone."""

    def __init__(self, task_index: int, mode: str):
        self.task_index = task_index
        cone = "negative definite Theta" if mode == "e_flat" else "positive definite H - eta eta^T"
        super().__init__(f"reconstruction for point {task_index} violates {cone}")


class ValidityStallError(RuntimeError):
    """Backtracking could not find any valid step."""


class ConvergenceError(RuntimeError):
    """Projection descent hit the iteration cap before reaching stationarity."""

    def __init__(self, grad_norm: float, tol: float, iters: int):
        self.grad_norm = grad_norm
        super().__init__(
            f"projection did not converge in {iters} iterations: "
            f"gradient norm {grad_norm:.3e} > tolerance {tol:.3e}"
        )


@dataclass(frozen=True)
class FitOptions:
    """Descent controls shared by fitting and projection."""

    learning_rate: float = 0.1
    max_iters: int = 10_000
    rel_tol: float = 1e-8
    seed: int = 0
    backtrack_factor: float = 0.5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")


@dataclass(frozen=True)
class Subspace:
    """Affine subspace: offset u0 (D,), basis rows (L, D), and the chart it lives in."""

    u0: np.ndarray
    basis: np.ndarray
    mode: Mode = "e_flat"

    def __post_init__(self):
        u0 = np.asarray(self.u0, dtype=float).reshape(-1)
        basis = np.asarray(self.basis, dtype=float)
        if basis.size == 0:
            basis = basis.reshape(0, u0.shape[0])
        if basis.ndim != 2 or basis.shape[1] != u0.shape[0]:
            raise ValueError(f"basis shape {basis.shape} does not match offset length {u0.shape[0]}")
        if self.mode not in ("e_flat", "m_flat"):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "basis", basis)

    @property
    def latent_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def flat_dim(self) -> int:
        return self.u0.shape[0]


@dataclass(frozen=True)
class FitResult:
    subspace: Subspace
    weights: np.ndarray  # (I, L)
    objective: float
    iterations: int
    converged: bool
    history: np.ndarray = field(repr=False)  # objective at each accepted evaluation


def reconstruct(w: np.ndarray, subspace: Subspace) -> np.ndarray:
    """Affine reconstruction u0 + w @ basis."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != subspace.latent_dim:
        raise ValueError(f"weight length {w.shape[0]} != latent dim {subspace.latent_dim}")
    if w.shape[0] == 0:
        return subspace.u0.copy()
    return subspace.u0 + w @ subspace.basis


class _InvalidBatch(Exception):
    def __init__(self, index: int):
        self.index = index


def _strict_cholesky(stack: np.ndarray) -> np.ndarray:
    """Batched Cholesky without jitter; identifies the offending slice on failure."""
    try:
        return np.linalg.cholesky(stack)
    except np.linalg.LinAlgError:
        for i, a in enumerate(stack):
            try:
                np.linalg.cholesky(a)
            except np.linalg.LinAlgError:
                raise _InvalidBatch(i) from None
        raise _InvalidBatch(0) from None


def _batched_cholesky(stack: np.ndarray, mode: Mode) -> np.ndarray:
    try:
        return _strict_cholesky(stack)
    except _InvalidBatch as exc:
        raise ValidityError(exc.index, mode) from None


def _batched_logdet(chol: np.ndarray) -> np.ndarray:
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.sum(np.log(diag), axis=-1)


class _PointBatch:
    """Precomputed per-point quantities of the data in a fixed chart.

    For each data Gaussian stores its moments, precision, log-determinant and
    both flat charts, so KL values and dual residuals against a batch of
    reconstructions cost one batched factorization per evaluation.
    """

    def __init__(self, points: np.ndarray, mode: Mode):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        self.mode = mode
        self.count, self.flat_dim = points.shape
        self.dim = dim_from_flat(self.flat_dim)
        d, n = self.dim, self.count
        self.primal = points
        vec = points[:, :d]
        mat = points[:, d:].reshape(n, d, d)
        mat = 0.5 * (mat + np.transpose(mat, (0, 2, 1)))
        if mode == "e_flat":
            a = -2.0 * mat  # Sigma^-1 per point, must be PD
            chol = _batched_cholesky(a, mode)
            self.lam = a
            self.logdet = -_batched_logdet(chol)  # log det Sigma
            self.mu = np.linalg.solve(a, vec[..., None])[..., 0]
            self.sigma = np.linalg.inv(a)
            dual_mat = self.sigma + np.einsum("ni,nj->nij", self.mu, self.mu)
            self.dual = np.concatenate([self.mu, dual_mat.reshape(n, -1)], axis=1)
        else:
            sigma = mat - np.einsum("ni,nj->nij", vec, vec)
            sigma = 0.5 * (sigma + np.transpose(sigma, (0, 2, 1)))
            chol = _batched_cholesky(sigma, mode)
            self.mu = vec
            self.sigma = sigma
            lam = np.linalg.inv(sigma)
            self.lam = 0.5 * (lam + np.transpose(lam, (0, 2, 1)))
            self.logdet = _batched_logdet(chol)
            theta = np.einsum("nij,nj->ni", self.lam, vec)
            self.dual = np.concatenate([theta, (-0.5 * self.lam).reshape(n, -1)], axis=1)

    def evaluate(self, recon: np.ndarray):
        """KL objective and dual coordinates of a batch of reconstructions.

        Returns (total_kl, per_point_kl, duals); raises _InvalidBatch with
        the first offending point index if a reconstruction leaves the cone.
        """
        d, n = self.dim, self.count
        vec = recon[:, :d]
        mat = recon[:, d:].reshape(n, d, d)
        mat = 0.5 * (mat + np.transpose(mat, (0, 2, 1)))
        if self.mode == "e_flat":
            a = -2.0 * mat  # reconstruction precisions
            chol = _strict_cholesky(a)
            logdet_rec = -_batched_logdet(chol)  # log det Sigma_rec
            mu_rec = np.linalg.solve(a, vec[..., None])[..., 0]
            # KL(data || recon): the reconstruction precision is `a` exactly.
            trace = np.einsum("nij,nij->n", a, self.sigma)
            diff = mu_rec - self.mu
            quad = np.einsum("ni,nij,nj->n", diff, a, diff)
            kl = 0.5 * (trace + quad - d + logdet_rec - self.logdet)
            sigma_rec = np.linalg.inv(a)
            dual_mat = sigma_rec + np.einsum("ni,nj->nij", mu_rec, mu_rec)
            duals = np.concatenate([mu_rec, dual_mat.reshape(n, -1)], axis=1)
        else:
            sigma_rec = mat - np.einsum("ni,nj->nij", vec, vec)
            sigma_rec = 0.5 * (sigma_rec + np.transpose(sigma_rec, (0, 2, 1)))
            chol = _strict_cholesky(sigma_rec)
            logdet_rec = _batched_logdet(chol)
            # KL(recon || data): the data precision is precomputed.
            trace = np.einsum("nij,nij->n", self.lam, sigma_rec)
            diff = self.mu - vec
            quad = np.einsum("ni,nij,nj->n", diff, self.lam, diff)
            kl = 0.5 * (trace + quad - d + self.logdet - logdet_rec)
            lam_rec = np.linalg.inv(sigma_rec)
            lam_rec = 0.5 * (lam_rec + np.transpose(lam_rec, (0, 2, 1)))
            theta_rec = np.einsum("nij,nj->ni", lam_rec, vec)
            duals = np.concatenate([theta_rec, (-0.5 * lam_rec).reshape(n, -1)], axis=1)
        return float(np.sum(kl)), kl, duals


def _recon_batch(weights: np.ndarray, u0: np.ndarray, basis: np.ndarray) -> np.ndarray:
    if basis.shape[0] == 0:
        return np.broadcast_to(u0, (weights.shape[0], u0.shape[0])).copy()
    return u0 + weights @ basis


def objective(weights: np.ndarray, subspace: Subspace, points) -> float:
    """Summed KL between the data points and their reconstructions."""
    batch = _PointBatch(np.atleast_2d(np.asarray(points, dtype=float)), subspace.mode)
    weights = np.asarray(weights, dtype=float).reshape(batch.count, subspace.latent_dim)
    recon = _recon_batch(weights, subspace.u0, subspace.basis)
    try:
        total, _, _ = batch.evaluate(recon)
    except _InvalidBatch as exc:
        raise ValidityError(exc.index, subspace.mode) from None
    return total


def gradients(weights: np.ndarray, subspace: Subspace, points) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the objective: (dW of shape (I, L), dU of shape (L+1, D)).

    Row 0 of dU is the offset gradient, the plain column sum of the dual
    residuals; rows 1..L correspond to the basis vectors.
    """
    batch = _PointBatch(np.atleast_2d(np.asarray(points, dtype=float)), subspace.mode)
    weights = np.asarray(weights, dtype=float).reshape(batch.count, subspace.latent_dim)
    recon = _recon_batch(weights, subspace.u0, subspace.basis)
    try:
        _, _, duals = batch.evaluate(recon)
    except _InvalidBatch as exc:
        raise ValidityError(exc.index, subspace.mode) from None
    residual = duals - batch.dual
    d_w = residual @ subspace.basis.T
    w_aug = np.concatenate([np.ones((batch.count, 1)), weights], axis=1)
    d_u = w_aug.T @ residual
    return d_w, d_u


# ---------------------------------------------------------------------------
# Monotone quasi-Newton descent with validity backtracking.


class _Minimizer:
    """Limited-memory quasi-Newton descent over one flat parameter vector.

    `evaluate(p)` returns (objective, payload) or raises _InvalidBatch;
    `gradient(p, payload)` returns the flat gradient. Every accepted step
    strictly decreases the objective; candidates that leave the valid cone
    or fail to decrease are backtracked by `backtrack_factor` up to
    _MAX_BACKTRACKS times. A stall with an active quasi-Newton memory resets
    to a steepest step once before declaring stationarity.
    """

    def __init__(self, evaluate: Callable, gradient: Callable, opts: FitOptions):
        self.evaluate = evaluate
        self.gradient = gradient
        self.opts = opts
        self.s_list: list[np.ndarray] = []
        self.y_list: list[np.ndarray] = []

    def _direction(self, g: np.ndarray) -> np.ndarray:
        if not self.s_list:
            return -self.opts.learning_rate * g
        q = g.copy()
        alphas = []
        rhos = [1.0 / float(y @ s) for s, y in zip(self.s_list, self.y_list)]
        for s, y, rho in zip(reversed(self.s_list), reversed(self.y_list), reversed(rhos)):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        s_last, y_last = self.s_list[-1], self.y_list[-1]
        q *= float(s_last @ y_last) / float(y_last @ y_last)
        for s, y, rho, a in zip(self.s_list, self.y_list, rhos, reversed(alphas)):
            q += s * (a - rho * float(y @ q))
        descent = -q
        if float(descent @ g) >= 0.0:  # model lost descent property
            self.s_list.clear()
            self.y_list.clear()
            return -self.opts.learning_rate * g
        return descent

    def _push_pair(self, s: np.ndarray, y: np.ndarray) -> None:
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)) and sy > 0:
            self.s_list.append(s)
            self.y_list.append(y)
            if len(self.s_list) > _LBFGS_MEMORY:
                self.s_list.pop(0)
                self.y_list.pop(0)

    def _line_search(self, p, kl_cur, direction):
        t = 1.0
        saw_valid = False
        for _ in range(_MAX_BACKTRACKS):
            candidate = p + t * direction
            try:
                kl_new, payload = self.evaluate(candidate)
            except _InvalidBatch:
                t *= self.opts.backtrack_factor
                continue
            saw_valid = True
            if kl_new < kl_cur and np.isfinite(kl_new):
                return candidate, kl_new, payload, True
            t *= self.opts.backtrack_factor
        if not saw_valid:
            raise ValidityStallError(
                f"no valid step found after {_MAX_BACKTRACKS} backtracks"
            )
        return p, kl_cur, None, False

    def run(self, p0: np.ndarray, stop_grad_tol: float = 0.0):
        """Returns (p, kl, history, iterations, converged, grad_norm).

        Converged means any of: gradient norm under `stop_grad_tol`,
        relative objective change under rel_tol, or no strictly decreasing
        valid step at line-search resolution (a stall, i.e. numeric
        stationarity). Only exhausting max_iters counts as non-convergence.
        """
        opts = self.opts
        kl, payload = self.evaluate(p0)
        p = p0.copy()
        g = self.gradient(p, payload)
        history = [kl]
        iteration = 0
        for iteration in range(1, opts.max_iters + 1):
            grad_norm = float(np.linalg.norm(g))
            if stop_grad_tol > 0.0 and grad_norm < stop_grad_tol:
                return p, kl, history, iteration - 1, True, grad_norm
            direction = self._direction(g)
            p_new, kl_new, payload, accepted = self._line_search(p, kl, direction)
            if not accepted and self.s_list:
                # quasi-Newton direction exhausted; retry once from steepest
                self.s_list.clear()
                self.y_list.clear()
                p_new, kl_new, payload, accepted = self._line_search(
                    p, kl, -opts.learning_rate * g
                )
            if not accepted:
                # stationary at line-search resolution
                return p, kl, history, iteration, True, float(np.linalg.norm(g))
            g_new = self.gradient(p_new, payload)
            self._push_pair(p_new - p, g_new - g)
            change = kl - kl_new
            p, kl, g = p_new, kl_new, g_new
            history.append(kl)
            if change <= opts.rel_tol * max(abs(kl), 1e-300):
                return p, kl, history, iteration, True, float(np.linalg.norm(g))
        return p, kl, history, opts.max_iters, False, float(np.linalg.norm(g))


def _mean_point_in_chart(batch: _PointBatch) -> np.ndarray:
    """Chart point whose dual coordinates are the mean of the data duals.

    The dual means live in a convex cone, so the resulting point is always a
    valid Gaussian; it serves as the initial offset.
    """
    d = batch.dim
    mean_dual = np.mean(batch.dual, axis=0)
    vec = mean_dual[:d]
    mat = mean_dual[d:].reshape(d, d)
    mat = 0.5 * (mat + mat.T)
    if batch.mode == "e_flat":
        # dual is the expectation chart: convert mean (eta, H) back to natural
        sigma = mat - np.outer(vec, vec)
        sigma = 0.5 * (sigma + sigma.T)
        lam = np.linalg.inv(sigma)
        lam = 0.5 * (lam + lam.T)
        return np.concatenate([lam @ vec, (-0.5 * lam).reshape(-1)])
    # dual is the natural chart: convert mean (theta, Theta) back to expectation
    a = -2.0 * mat
    sigma = np.linalg.inv(a)
    sigma = 0.5 * (sigma + sigma.T)
    mu = sigma @ vec
    return np.concatenate([mu, (sigma + np.outer(mu, mu)).reshape(-1)])


def _initial_subspace(
    batch: _PointBatch, latent_dim: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Offset, basis and weights to start the descent from.

    The offset is the always-valid mean-dual point, the basis holds the
    top-L right singular vectors of the centered data, and the weights are
    the least-squares scores of the data against that frame, halved until
    every starting reconstruction is a valid Gaussian (weights of zero put
    the start at the offset itself, which is always valid).
    """
    u0 = _mean_point_in_chart(batch)
    if latent_dim == 0:
        return u0, np.zeros((0, batch.flat_dim)), np.zeros((batch.count, 0))
    centered = batch.primal - np.mean(batch.primal, axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:latent_dim].copy()
    if basis.shape[0] < latent_dim:  # degenerate data: pad deterministically
        pad = np.zeros((latent_dim - basis.shape[0], batch.flat_dim))
        for k in range(pad.shape[0]):
            pad[k, (basis.shape[0] + k) % batch.flat_dim] = 1.0
        basis = np.vstack([basis, pad])
    # Deterministic sign: largest-magnitude entry of each row is positive.
    for row in basis:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    weights = (batch.primal - u0) @ basis.T  # rows are orthonormal
    for _ in range(80):
        try:
            batch.evaluate(_recon_batch(weights, u0, basis))
            break
        except _InvalidBatch:
            weights *= 0.5
    else:
        weights = np.zeros((batch.count, latent_dim))
    return u0, basis, weights


def _normalize(u0, basis, weights):
    """Rescale basis rows to unit norm, folding the scale into the weights."""
    if basis.shape[0] == 0:
        return u0, basis, weights
    norms = np.linalg.norm(basis, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    return u0, basis / norms[:, None], weights * norms[None, :]


def fit(points, latent_dim: int, opts: Optional[FitOptions] = None, mode: Mode = "e_flat") -> FitResult:
    """Fit a rank-`latent_dim` affine subspace to Gaussian coordinate points.

    Descends the summed KL jointly over (W, u0, basis) until the relative
    objective change falls below opts.rel_tol or opts.max_iters is reached,
    then polishes each weight row by projecting its point onto the final
    basis. The objective over accepted steps never increases. The returned
    `objective` is recomputed exactly for the returned (normalized)
    parameters.
    """
    opts = opts or FitOptions()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n_points = pts.shape[0]
    if n_points < 1:
        raise ValueError("need at least one point")
    if latent_dim < 0 or (n_points > 1 and latent_dim > n_points - 1) or (
        n_points == 1 and latent_dim > 0
    ):
        raise ValueError(
            f"latent dimension {latent_dim} not in [0, {max(n_points - 1, 0)}] for {n_points} points"
        )
    batch = _PointBatch(pts, mode)
    u0_init, basis_init, w_init = _initial_subspace(batch, latent_dim)
    flat_dim = batch.flat_dim
    n_w = n_points * latent_dim

    def unpack_params(p):
        w = p[:n_w].reshape(n_points, latent_dim)
        u0 = p[n_w : n_w + flat_dim]
        basis = p[n_w + flat_dim :].reshape(latent_dim, flat_dim)
        return w, u0, basis

    def value_and_grad(p):
        w, u0, basis = unpack_params(p)
        try:
            total, _, duals = batch.evaluate(_recon_batch(w, u0, basis))
        except _InvalidBatch:
            return _BARRIER, np.zeros_like(p)
        if not np.isfinite(total):
            return _BARRIER, np.zeros_like(p)
        residual = duals - batch.dual
        d_w = residual @ basis.T
        w_aug = np.concatenate([np.ones((n_points, 1)), w], axis=1)
        d_u = w_aug.T @ residual
        return total, np.concatenate([d_w.ravel(), d_u[0], d_u[1:].ravel()])

    p0 = np.concatenate([w_init.reshape(-1), u0_init, basis_init.reshape(-1)])
    history = [value_and_grad(p0)[0]]

    def record(pk):
        history.append(value_and_grad(pk)[0])

    # Quasi-Newton descent; its sufficient-decrease line search never accepts
    # an iterate at the barrier, so every recorded iterate is a valid subspace.
    result = _scipy_minimize(
        value_and_grad,
        p0,
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={
            "maxiter": opts.max_iters,
            "ftol": opts.rel_tol,
            "gtol": 1e-14,
            "maxcor": _LBFGS_MEMORY,
        },
    )
    iterations = int(result.nit)
    converged = result.status != 1  # 1 = iteration cap; stalls count as converged
    weights, u0, basis = unpack_params(result.x)
    subspace = Subspace(u0=u0, basis=basis, mode=mode)
    if latent_dim > 0:
        weights = _polish_weights(batch, subspace, weights, opts)
    u0, basis, weights = _normalize(u0, basis, weights)
    subspace = Subspace(u0=u0, basis=basis, mode=mode)
    final = objective(weights, subspace, pts)
    return FitResult(
        subspace=subspace,
        weights=weights,
        objective=final,
        iterations=iterations,
        converged=converged,
        history=np.asarray(history),
    )


def _polish_weights(batch: _PointBatch, subspace: Subspace, weights: np.ndarray, opts: FitOptions):
    """Project every point onto the final basis; KL per point can only drop."""
    polished = weights.copy()
    for i in range(batch.count):
        try:
            polished[i] = _project_flat(
                batch.primal[i], subspace, opts, start=weights[i], strict=False
            )
        except ValidityStallError:
            continue
    return polished


def _project_flat(
    point: np.ndarray, subspace: Subspace, opts: FitOptions, start=None, strict=True
) -> np.ndarray:
    basis = subspace.basis
    latent_dim = basis.shape[0]
    if latent_dim == 0:
        return np.zeros(0)
    batch = _PointBatch(point[None, :], subspace.mode)
    scale = float(np.linalg.norm(batch.dual[0]))
    tol = opts.rel_tol * max(scale, 1e-300)

    def evaluate(w):
        total, _, duals = batch.evaluate(_recon_batch(w[None, :], subspace.u0, basis))
        return total, duals

    def gradient(w, duals):
        return (duals[0] - batch.dual[0]) @ basis.T

    # Start at the offset itself (always valid); the problem is convex in w.
    w = np.zeros(latent_dim) if start is None else np.asarray(start, dtype=float).copy()

    minimizer = _Minimizer(evaluate, gradient, opts)
    try:
        w, _, _, iterations, converged, grad_norm = minimizer.run(w, stop_grad_tol=tol)
    except _InvalidBatch as exc:
        raise ValidityError(exc.index, subspace.mode) from None
    if not converged and strict:
        raise ConvergenceError(grad_norm, tol, opts.max_iters)
    return w


def project_point(point, subspace: Subspace, opts: Optional[FitOptions] = None) -> np.ndarray:
    """Weights of the KL-minimizing projection of one coordinate point.

    Descends the point's KL over w alone until the weight-space gradient
    norm falls below rel_tol times the norm of the point's dual coordinates,
    the per-step relative KL change falls below rel_tol, or no strictly
    decreasing valid step exists (stationarity at numeric resolution); the
    problem is convex in w so all three witness the unique projection.
    Raises ConvergenceError with the final gradient norm if the iteration
    cap is hit first.
    """
    opts = opts or FitOptions()
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape[0] != subspace.flat_dim:
        raise ValueError(f"point length {point.shape[0]} != subspace dim {subspace.flat_dim}")
    return _project_flat(point, subspace, opts, start=None, strict=True)
