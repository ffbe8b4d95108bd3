"""Shared strategies and builders for the test suite."""

import numpy as np
from hypothesis import strategies as st

from gppca import gaussian_geometry as gg
from gppca.gaussian_geometry import MomentGaussian


def spd_matrix(rng: np.random.Generator, d: int, cond_max: float = 100.0) -> np.ndarray:
    """Random symmetric PD matrix with bounded condition number."""
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    half = np.sqrt(cond_max)
    eigs = np.exp(rng.uniform(np.log(1.0 / half), np.log(half), size=d))
    return 0.5 * ((q * eigs) @ q.T + ((q * eigs) @ q.T).T)


def random_gaussian(rng: np.random.Generator, d: int, cond_max: float = 100.0) -> MomentGaussian:
    return MomentGaussian(mu=rng.normal(size=d), sigma=spd_matrix(rng, d, cond_max))


@st.composite
def gaussians(draw, min_dim=1, max_dim=8, cond_max=100.0):
    """Hypothesis strategy for a well-conditioned MomentGaussian."""
    d = draw(st.integers(min_dim, max_dim))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_gaussian(rng, d, cond_max)


@st.composite
def gaussian_pairs(draw, min_dim=1, max_dim=6, cond_max=50.0):
    d = draw(st.integers(min_dim, max_dim))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_gaussian(rng, d, cond_max), random_gaussian(rng, d, cond_max)


def planted_subspace(rng: np.random.Generator, d: int, latent_dim: int, n_points: int,
                     direction_scale: float = 0.05):
    """Points exactly on a valid flat subspace in natural coordinates.

    Returns (points, u0, basis, weights). The offset is a random Gaussian
    near the standard normal; directions are small enough that every
    |w| <= 1 reconstruction stays in the cone.
    """
    base = MomentGaussian(mu=0.3 * rng.normal(size=d), sigma=np.eye(d))
    u0 = gg.pack_natural(gg.moment_to_natural(base))
    rows = []
    for _ in range(latent_dim):
        vec = direction_scale * rng.normal(size=d)
        mat = rng.normal(size=(d, d))
        mat = direction_scale * 0.5 * (mat + mat.T)
        rows.append(gg.pack_coords(vec, mat))
    basis = np.asarray(rows).reshape(latent_dim, d + d * d)
    weights = rng.uniform(-1.0, 1.0, size=(n_points, latent_dim))
    points = u0 + weights @ basis if latent_dim else np.tile(u0, (n_points, 1))
    # confirm validity of every planted point
    for p in points:
        nat = gg.unpack_natural(p, d)
        np.linalg.cholesky(-2.0 * nat.big_theta)
    return points, u0, basis, weights
