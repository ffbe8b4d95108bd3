"""Dual-coordinate algebra for finite-dimensional Gaussians.

A Gaussian N(mu, Sigma) on R^d is a point of an exponential family and
carries three equivalent parameterizations:

- moment:      (mu, Sigma)
- natural (e): theta = Sigma^-1 mu,  Theta = -1/2 Sigma^-1
- expectation (m): eta = mu,  H = mu mu^T + Sigma

The two potentials are Legendre duals,

    psi(xi)  = 1/2 mu^T Sigma^-1 mu + 1/2 log det(2 pi Sigma)
    phi(zeta) = -1/2 log det(2 pi e Sigma)

and satisfy psi(xi) + phi(zeta) - <xi, zeta> = 0 at matched coordinates,
where <xi, zeta> = theta^T eta + tr(Theta^T H).

KL divergence orientation: with these potentials the integral divergence
KL(p||q) = E_p[log p/q] equals psi(xi_q) + phi(zeta_p) - <xi_q, zeta_p>.
`kl_divergence` evaluates the numerically stable closed form; the potential
route is exposed through `log_partition`, `dual_potential`, `inner_product`
so the two can be compared independently.

Matrix blocks are stored dense d x d and re-symmetrized after every
construction so that flattened inner products agree with the matrix trace
pairing. Inverses appear only where the parameterization itself is an
inverse matrix (Theta, Sigma); everything else goes through a Cholesky
factorization with a bounded jitter-repair policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

__all__ = [
    "DecompositionError",
    "MomentGaussian",
    "NaturalCoord",
    "ExpectationCoord",
    "moment_to_natural",
    "natural_to_moment",
    "moment_to_expectation",
    "expectation_to_moment",
    "natural_to_expectation",
    "expectation_to_natural",
    "log_partition",
    "dual_potential",
    "inner_product",
    "kl_divergence",
    "chol_pd",
    "pack_coords",
    "unpack_coords",
    "dim_from_flat",
]

# Jitter repair: relative to trace(A)/d, escalating tenfold per retry.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6

_LOG_2PI = math.log(2.0 * math.pi)


class DecompositionError(RuntimeError):
    """A required Cholesky factorization failed even after jitter repair."""

    def __init__(self, name: str, detail: str = ""):
        self.matrix_name = name
        msg = f"matrix {name!r} is not positive definite"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def chol_pd(a: np.ndarray, name: str) -> np.ndarray:
    """Lower Cholesky factor of a symmetric PD matrix, with jitter repair.

    On failure, adds jitter eps * trace(a)/d starting at eps = 1e-10 and
    escalating tenfold up to 1e-6, then raises DecompositionError naming
    the offending matrix. The returned factor corresponds to the repaired
    matrix; the distortion is bounded by the jitter cap.
    """
    a = _sym(np.asarray(a, dtype=float))
    d = a.shape[0]
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    tr = float(np.trace(a))
    if not tr > 0.0:
        raise DecompositionError(name, f"trace {tr:.3e} is not positive")
    scale = tr / d
    eps = _JITTER_START
    eye = np.eye(d)
    while eps <= _JITTER_MAX * (1.0 + 1e-12):
        try:
            return np.linalg.cholesky(a + eps * scale * eye)
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise DecompositionError(name, f"jitter escalation exhausted at {_JITTER_MAX:.0e}*trace/d")


def _logdet_from_chol(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _check_symmetry(a: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > 1e-12 * max(scale, 1e-300):
        raise ValueError(f"{what} is not symmetric: max|A - A^T| = {asym:.3e}")
    return _sym(a)


@dataclass(frozen=True)
class MomentGaussian:
    """Gaussian in moment form: mean vector mu and covariance sigma."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = _check_symmetry(self.sigma, "sigma")
        if sigma.shape[0] != mu.shape[0]:
            raise ValueError(f"mu has dim {mu.shape[0]} but sigma is {sigma.shape}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class NaturalCoord:
    """Natural (e-) coordinates: theta = Sigma^-1 mu, big_theta = -1/2 Sigma^-1.

    big_theta must be negative definite; this is enforced by the operations
    that factorize it rather than at construction.
    """

    theta: np.ndarray
    big_theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        big_theta = _check_symmetry(self.big_theta, "big_theta")
        if big_theta.shape[0] != theta.shape[0]:
            raise ValueError(f"theta has dim {theta.shape[0]} but big_theta is {big_theta.shape}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "big_theta", big_theta)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class ExpectationCoord:
    """Expectation (m-) coordinates: eta = mu, big_h = mu mu^T + Sigma."""

    eta: np.ndarray
    big_h: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        big_h = _check_symmetry(self.big_h, "big_h")
        if big_h.shape[0] != eta.shape[0]:
            raise ValueError(f"eta has dim {eta.shape[0]} but big_h is {big_h.shape}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "big_h", big_h)

    @property
    def dim(self) -> int:
        return self.eta.shape[0]


def moment_to_natural(g: MomentGaussian) -> NaturalCoord:
    """theta = Sigma^-1 mu, Theta = -1/2 Sigma^-1."""
    chol = chol_pd(g.sigma, "sigma")
    theta = cho_solve((chol, True), g.mu)
    # Theta is itself an inverse matrix, so the explicit inverse is structural.
    inv_sigma = cho_solve((chol, True), np.eye(g.dim))
    return NaturalCoord(theta=theta, big_theta=-0.5 * _sym(inv_sigma))


def natural_to_moment(c: NaturalCoord) -> MomentGaussian:
    """mu = -1/2 Theta^-1 theta, Sigma = -1/2 Theta^-1."""
    a = -2.0 * c.big_theta  # equals Sigma^-1, must be PD
    chol = chol_pd(a, "-2*big_theta")
    mu = cho_solve((chol, True), c.theta)
    sigma = cho_solve((chol, True), np.eye(c.dim))
    return MomentGaussian(mu=mu, sigma=_sym(sigma))


def moment_to_expectation(g: MomentGaussian) -> ExpectationCoord:
    """eta = mu, H = mu mu^T + Sigma."""
    return ExpectationCoord(eta=g.mu, big_h=_sym(np.outer(g.mu, g.mu) + g.sigma))


def expectation_to_moment(c: ExpectationCoord) -> MomentGaussian:
    """mu = eta, Sigma = H - eta eta^T."""
    sigma = _sym(c.big_h - np.outer(c.eta, c.eta))
    # Validate positive definiteness up front so the error names this input.
    chol_pd(sigma, "big_h - eta*eta^T")
    return MomentGaussian(mu=c.eta, sigma=sigma)


def natural_to_expectation(c: NaturalCoord) -> ExpectationCoord:
    """Composition through moment form; equals the direct rational formula

    eta = -1/2 Theta^-1 theta,
    H = 1/4 Theta^-1 theta theta^T Theta^-1 - 1/2 Theta^-1.
    """
    return moment_to_expectation(natural_to_moment(c))


def expectation_to_natural(c: ExpectationCoord) -> NaturalCoord:
    """Composition through moment form; equals

    theta = (H - eta eta^T)^-1 eta,
    Theta = -1/2 (H - eta eta^T)^-1.
    """
    return moment_to_natural(expectation_to_moment(c))


def log_partition(c: NaturalCoord) -> float:
    """Log normalizer psi(xi) = 1/2 mu^T Sigma^-1 mu + 1/2 log det(2 pi Sigma).

    Its gradient in (theta, Theta) is the matched expectation coordinate.
    """
    a = -2.0 * c.big_theta
    chol = chol_pd(a, "-2*big_theta")
    mu = cho_solve((chol, True), c.theta)
    # log det Sigma = -log det(Sigma^-1)
    logdet_sigma = -_logdet_from_chol(chol)
    quad = float(c.theta @ mu)  # mu^T Sigma^-1 mu
    return 0.5 * quad + 0.5 * (c.dim * _LOG_2PI + logdet_sigma)


def dual_potential(c: ExpectationCoord) -> float:
    """Dual potential phi(zeta) = -1/2 log det(2 pi e Sigma), the negative entropy."""
    sigma = _sym(c.big_h - np.outer(c.eta, c.eta))
    chol = chol_pd(sigma, "big_h - eta*eta^T")
    return -0.5 * (c.dim * (1.0 + _LOG_2PI) + _logdet_from_chol(chol))


def inner_product(xi: NaturalCoord, zeta: ExpectationCoord) -> float:
    """Pairing <xi, zeta> = theta^T eta + tr(Theta^T H)."""
    if xi.dim != zeta.dim:
        raise ValueError(f"dimension mismatch: {xi.dim} vs {zeta.dim}")
    return float(xi.theta @ zeta.eta) + float(np.sum(xi.big_theta * zeta.big_h))


def kl_divergence(p: MomentGaussian, q: MomentGaussian) -> float:
    """KL(p || q) = E_p[log p/q] for Gaussians, in closed form.

    Equals psi(xi_q) + phi(zeta_p) - <xi_q, zeta_p>; the closed form below
    avoids the large cancelling constants of the potential route.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    d = p.dim
    chol_q = chol_pd(q.sigma, "q.sigma")
    chol_p = chol_pd(p.sigma, "p.sigma")
    # tr(Sigma_q^-1 Sigma_p) via triangular solves
    half = solve_triangular(chol_q, p.sigma, lower=True)
    half = solve_triangular(chol_q, half.T, lower=True)
    trace_term = float(np.trace(half))
    diff = q.mu - p.mu
    y = solve_triangular(chol_q, diff, lower=True)
    quad = float(y @ y)
    logdet = _logdet_from_chol(chol_q) - _logdet_from_chol(chol_p)
    return 0.5 * (trace_term + quad - d + logdet)


# ---------------------------------------------------------------------------
# Flattened coordinate helpers shared by the subspace machinery.


def pack_coords(vec: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """Concatenate (vector, full row-major matrix) into one flat point."""
    return np.concatenate([np.asarray(vec, float).reshape(-1), np.asarray(mat, float).reshape(-1)])


def unpack_coords(flat: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a flat point back into (vector, symmetrized matrix)."""
    flat = np.asarray(flat, dtype=float).reshape(-1)
    if flat.shape[0] != d + d * d:
        raise ValueError(f"flat point of length {flat.shape[0]} does not match d={d}")
    vec = flat[:d]
    mat = flat[d:].reshape(d, d)
    return vec, _sym(mat)


def dim_from_flat(n: int) -> int:
    """Recover d from a flattened length D = d + d^2."""
    d = int(round((-1.0 + math.sqrt(1.0 + 4.0 * n)) / 2.0))
    if d + d * d != n:
        raise ValueError(f"flat length {n} is not of the form d + d^2")
    return d


def pack_natural(c: NaturalCoord) -> np.ndarray:
    return pack_coords(c.theta, c.big_theta)


def unpack_natural(flat: np.ndarray, d: int) -> NaturalCoord:
    vec, mat = unpack_coords(flat, d)
    return NaturalCoord(theta=vec, big_theta=mat)


def pack_expectation(c: ExpectationCoord) -> np.ndarray:
    return pack_coords(c.eta, c.big_h)


def unpack_expectation(flat: np.ndarray, d: int) -> ExpectationCoord:
    vec, mat = unpack_coords(flat, d)
    return ExpectationCoord(eta=vec, big_h=mat)
