"""Seeded synthetic data: subspace mixtures, Gaussian clouds, labels.

Every generator draws from ``numpy.random.default_rng(seed)`` (PCG64), so a
fixed seed reproduces the output bit for bit with the same numpy version.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class SubspaceMixtureSpec:
    k: int
    d: int
    d_j: int
    samples_per_class: int
    orthogonal: bool = True
    ambient_is_input: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.d < 1:
            raise InvalidInputError("k and d must be positive")
        if self.d_j < 1 or self.samples_per_class < 1:
            raise InvalidInputError("d_j and samples_per_class must be positive")
        if self.d_j > self.d:
            raise InvalidInputError(f"d_j={self.d_j} exceeds ambient dimension d={self.d}")
        if self.orthogonal and self.k * self.d_j > self.d:
            raise InvalidInputError(
                f"orthogonal mixture needs k*d_j <= d, got {self.k}*{self.d_j} > {self.d}"
            )


def normalize_columns(Z: np.ndarray) -> np.ndarray:
    return Z / np.linalg.norm(Z, axis=0, keepdims=True)


def gen_subspace_mixture(spec: SubspaceMixtureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm samples from ``k`` random ``d_j``-dimensional subspaces.

    Orthogonal mixtures slice one random orthonormal ``d x (k d_j)`` frame
    into disjoint blocks; otherwise each class gets an independent random
    orthonormal basis.  Coefficients are standard Gaussian.
    """
    rng = np.random.default_rng(spec.seed)
    d, dj, k, n = spec.d, spec.d_j, spec.k, spec.samples_per_class
    if spec.orthogonal:
        Q, _ = np.linalg.qr(rng.standard_normal((d, k * dj)))
        bases = [Q[:, j * dj:(j + 1) * dj] for j in range(k)]
    else:
        bases = [np.linalg.qr(rng.standard_normal((d, dj)))[0] for _ in range(k)]
    blocks = [B @ rng.standard_normal((dj, n)) for B in bases]
    Z = normalize_columns(np.hstack(blocks))
    labels = np.repeat(np.arange(k), n)
    return Z, labels


def gen_gaussian(d: int, m: int, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """I.i.d. Gaussian columns projected to the sphere, labels round-robin."""
    if d < 1 or m < 1 or k < 1:
        raise InvalidInputError("d, m, k must be positive")
    if m % k:
        raise InvalidInputError(f"m={m} is not divisible by k={k}")
    rng = np.random.default_rng(seed)
    Z = normalize_columns(rng.standard_normal((d, m)))
    return Z, np.arange(m) % k


def check_labels(labels, k: int | None = None) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InvalidInputError("labels must be a 1-D vector")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise InvalidInputError("labels must be integers")
    labels = labels.astype(np.int64)
    if labels.size and labels.min() < 0:
        raise InvalidInputError("labels must be nonnegative")
    if k is not None and labels.size and labels.max() >= k:
        raise InvalidInputError(f"label {labels.max()} out of range for k={k}")
    return labels


def membership_from_labels(labels, k: int) -> np.ndarray:
    """One-hot ``m x k`` membership matrix."""
    labels = check_labels(labels, k)
    pi = np.zeros((labels.size, k))
    pi[np.arange(labels.size), labels] = 1.0
    return pi


def corrupt_labels(labels, ratio: float, k: int, seed: int) -> np.ndarray:
    """Give a random ``floor(ratio * m)`` subset of samples a different label."""
    labels = check_labels(labels, k)
    if not 0.0 <= ratio <= 1.0:
        raise InvalidInputError(f"ratio must lie in [0, 1], got {ratio}")
    m = labels.size
    n_bad = int(np.floor(ratio * m))
    out = labels.copy()
    if n_bad == 0:
        return out
    if k < 2:
        raise InvalidInputError("cannot corrupt labels with a single class")
    rng = np.random.default_rng(seed)
    idx = rng.choice(m, size=n_bad, replace=False)
    # uniform over the k - 1 other labels
    out[idx] = (labels[idx] + rng.integers(1, k, size=n_bad)) % k
    return out


def self_label(X, n_augment: int, noise_sigma: float = 0.1, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Replicate each column ``n_augment`` times with additive noise.

    All copies of column ``j`` get label ``j``; outputs are unit-norm and
    grouped by source column.
    """
    X = np.asarray(X, dtype=float)
    if n_augment < 1:
        raise InvalidInputError("n_augment must be positive")
    if noise_sigma < 0:
        raise InvalidInputError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    D, k = X.shape
    Z = np.repeat(X, n_augment, axis=1)
    if noise_sigma > 0:
        Z = Z + noise_sigma * rng.standard_normal(Z.shape)
    return normalize_columns(Z), np.repeat(np.arange(k), n_augment)


def two_circles(m_per_class: int, radii=(1.0, 2.0), noise: float = 0.05, seed: int = 0):
    """Two noisy concentric circles in the plane, embedded in R^3.

    Third coordinate is a constant 1 so an affine first layer sees the
    radius; returns ``X`` as ``3 x m`` and labels.
    """
    rng = np.random.default_rng(seed)
    cols, labels = [], []
    for j, r in enumerate(radii):
        t = rng.uniform(0.0, 2 * np.pi, m_per_class)
        pts = np.vstack([r * np.cos(t), r * np.sin(t)]) + noise * rng.standard_normal((2, m_per_class))
        cols.append(np.vstack([pts, np.ones(m_per_class)]))
        labels.append(np.full(m_per_class, j))
    return np.hstack(cols), np.concatenate(labels)


def random_sphere(d: int, m: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return normalize_columns(rng.standard_normal((d, m)))
