"""Coding rates, rate reduction and their analytic gradients.

Conventions: a feature matrix ``Z`` is ``d x m`` with samples as columns, and a
membership matrix ``pi`` is ``m x k`` with row ``i`` holding the class
probabilities of sample ``i`` (hard labels are one-hot rows).  Column ``j`` of
``pi`` is the diagonal of the class-``j`` membership matrix.

All log-determinants are computed in nats and converted to the configured
log base at the very end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidMembershipError,
    NumericalError,
)

LogBase = Literal["bits", "nats"]

# matrices with min(d, m) up to this size go through the SVD path
SVD_CUTOFF = 64
EMPTY_CLASS_TOL = 1e-12
ROW_SUM_TOL = 1e-9
JITTER = 1e-12


@dataclass(frozen=True)
class RateParams:
    """Distortion ``eps_sq`` (the squared precision) and the log base of reports."""

    eps_sq: float = 0.5
    log_base: LogBase = "bits"

    def __post_init__(self):
        if not (np.isfinite(self.eps_sq) and self.eps_sq > 0):
            raise InvalidInputError(f"eps_sq must be positive, got {self.eps_sq}")
        if self.log_base not in ("bits", "nats"):
            raise InvalidInputError(f"unknown log base {self.log_base!r}")

    @property
    def log_scale(self) -> float:
        """Divide a value in nats by this to get the configured unit."""
        return math.log(2.0) if self.log_base == "bits" else 1.0

    def to_dict(self) -> dict:
        return {"eps_sq": self.eps_sq, "log_base": self.log_base}


@dataclass
class RateReport:
    rate_whole: float
    rate_segmented: float
    reduction: float
    per_class_rates: np.ndarray
    params: RateParams
    d: int
    m: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "R": self.rate_whole,
            "Rc": self.rate_segmented,
            "DeltaR": self.reduction,
            "per_class": [float(v) for v in self.per_class_rates],
            "d": self.d,
            "m": self.m,
            **self.params.to_dict(),
        }


# ---------------------------------------------------------------------------
# validation helpers


def check_features(Z, sphere_normalized: bool = False) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
        raise InvalidInputError(f"feature matrix must be 2-D and non-empty, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise InvalidInputError("feature matrix contains non-finite entries")
    if sphere_normalized:
        norms = np.linalg.norm(Z, axis=0)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise InvalidInputError("columns are not unit norm")
    return Z


def check_membership(pi, m: int | None = None) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2 or pi.shape[1] < 1:
        raise InvalidMembershipError(f"membership must be m x k, got shape {pi.shape}")
    if m is not None and pi.shape[0] != m:
        raise DimensionMismatchError(f"membership has {pi.shape[0]} rows, expected {m}")
    if not np.all(np.isfinite(pi)) or np.any(pi < 0):
        raise InvalidMembershipError("membership entries must be finite and nonnegative")
    if np.max(np.abs(pi.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
        raise InvalidMembershipError("membership rows must sum to 1")
    return pi


def is_hard_membership(pi: np.ndarray, tol: float = 1e-9) -> bool:
    pi = np.asarray(pi, dtype=float)
    return bool(np.all((np.abs(pi) <= tol) | (np.abs(pi - 1.0) <= tol)))


# ---------------------------------------------------------------------------
# log-det kernel


def logdet_identity_plus_gram(Z, alpha: float) -> float:
    """Return ``log det(I + alpha * Z @ Z.T)`` in nats.

    Works on whichever Gram matrix is smaller (``ZZ^T`` and ``Z^T Z`` share
    their nonzero spectrum).  Small problems use singular values; larger
    ones a Cholesky factorization with a single jitter retry.
    """
    Z = check_features(Z)
    if not (np.isfinite(alpha) and alpha > 0):
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    d, m = Z.shape
    if min(d, m) <= SVD_CUTOFF:
        s = np.linalg.svd(Z, compute_uv=False)
        return float(np.sum(np.log1p(alpha * s * s)))
    G = Z.T @ Z if m <= d else Z @ Z.T
    A = np.eye(G.shape[0]) + alpha * G
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(A + JITTER * np.eye(A.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("Cholesky factorization failed after jitter retry") from exc
    return float(2.0 * np.sum(np.log(np.diag(L))))


def _solve_identity_plus_gram(Y: np.ndarray, alpha: float) -> np.ndarray:
    """Return ``(I + alpha Y Y^T)^{-1} Y`` using the smaller side."""
    d, m = Y.shape
    if m <= d:
        A = np.eye(m) + alpha * (Y.T @ Y)
        # (I + a YY^T)^{-1} Y = Y (I + a Y^T Y)^{-1}
        return np.linalg.solve(A, Y.T).T
    A = np.eye(d) + alpha * (Y @ Y.T)
    return np.linalg.solve(A, Y)


# ---------------------------------------------------------------------------
# rates


def _whole_rate_nats(Z: np.ndarray, eps_sq: float, gamma1: float = 1.0, gamma2: float = 1.0) -> float:
    d, m = Z.shape
    return logdet_identity_plus_gram(Z, gamma2 * d / (m * eps_sq)) / (2.0 * gamma1)


def coding_rate(Z, params: RateParams) -> float:
    """R(Z, eps) = 1/2 log det(I + d/(m eps^2) Z Z^T)."""
    Z = check_features(Z)
    return _whole_rate_nats(Z, params.eps_sq) / params.log_scale


def scaled_rate(Z, params: RateParams, gamma1: float, gamma2: float) -> float:
    """Rescaled rate 1/(2 gamma1) log det(I + gamma2 d/(m eps^2) Z Z^T)."""
    if not (gamma1 > 0 and gamma2 > 0):
        raise InvalidInputError("gamma1 and gamma2 must be positive")
    Z = check_features(Z)
    return _whole_rate_nats(Z, params.eps_sq, gamma1, gamma2) / params.log_scale


def coding_length(Z, params: RateParams) -> float:
    """Total coding length ((m + d)/2) log det(I + d/(m eps^2) Z Z^T)."""
    Z = check_features(Z)
    d, m = Z.shape
    return (m + d) * coding_rate(Z, params)


def _class_terms_nats(Z: np.ndarray, pi: np.ndarray, eps_sq: float) -> np.ndarray:
    d, m = Z.shape
    out = np.zeros(pi.shape[1])
    for j in range(pi.shape[1]):
        w = pi[:, j]
        tr = w.sum()
        if tr <= EMPTY_CLASS_TOL:
            continue
        Y = Z * np.sqrt(w)
        out[j] = tr / (2.0 * m) * logdet_identity_plus_gram(Y, d / (tr * eps_sq))
    return out


def segmented_rate(Z, pi, params: RateParams) -> tuple[float, np.ndarray]:
    """Membership-weighted rate Rc(Z, eps | pi) and its per-class summands."""
    Z = check_features(Z)
    pi = check_membership(pi, Z.shape[1])
    per_class = _class_terms_nats(Z, pi, params.eps_sq) / params.log_scale
    return float(per_class.sum()), per_class


def rate_reduction(Z, pi, params: RateParams) -> RateReport:
    Z = check_features(Z)
    pi = check_membership(pi, Z.shape[1])
    R = coding_rate(Z, params)
    Rc, per_class = segmented_rate(Z, pi, params)
    d, m = Z.shape
    return RateReport(R, Rc, R - Rc, per_class, params, d, m)


def pair_distance(Zi, Zj, params: RateParams) -> float:
    """Rate reduction of two sample sets treated as a two-class partition.

    For equal sizes this is ``R([Zi Zj]) - (R(Zi) + R(Zj)) / 2``.
    """
    Zi, Zj = check_features(Zi), check_features(Zj)
    if Zi.shape[0] != Zj.shape[0]:
        raise DimensionMismatchError(f"dimension mismatch: {Zi.shape[0]} vs {Zj.shape[0]}")
    mi, mj = Zi.shape[1], Zj.shape[1]
    pi = np.zeros((mi + mj, 2))
    pi[:mi, 0] = 1.0
    pi[mi:, 1] = 1.0
    return rate_reduction(np.hstack([Zi, Zj]), pi, params).reduction


# ---------------------------------------------------------------------------
# gradients


def grad_coding_rate(Z, params: RateParams) -> np.ndarray:
    """Gradient alpha (I + alpha Z Z^T)^{-1} Z of the coding rate."""
    Z = check_features(Z)
    return _grad_whole_nats(Z, params.eps_sq) / params.log_scale


def grad_scaled_rate(Z, params: RateParams, gamma1: float, gamma2: float) -> np.ndarray:
    Z = check_features(Z)
    return _grad_whole_nats(Z, params.eps_sq, gamma1, gamma2) / params.log_scale


def _grad_whole_nats(Z, eps_sq, gamma1=1.0, gamma2=1.0):
    d, m = Z.shape
    alpha = gamma2 * d / (m * eps_sq)
    return (alpha / gamma1) * _solve_identity_plus_gram(Z, alpha)


def grad_segmented_rate(Z, pi, params: RateParams) -> np.ndarray:
    Z = check_features(Z)
    pi = check_membership(pi, Z.shape[1])
    return _grad_segmented_nats(Z, pi, params.eps_sq) / params.log_scale


def _grad_segmented_nats(Z, pi, eps_sq):
    d, m = Z.shape
    G = np.zeros_like(Z)
    for j in range(pi.shape[1]):
        w = pi[:, j]
        tr = w.sum()
        if tr <= EMPTY_CLASS_TOL:
            continue
        sw = np.sqrt(w)
        alpha = d / (tr * eps_sq)
        # d/dZ of tr/(2m) logdet(I + a Z W Z^T) = (tr a / m) (I + a Z W Z^T)^{-1} Z W
        G += (tr * alpha / m) * _solve_identity_plus_gram(Z * sw, alpha) * sw
    return G


def grad_rate_reduction(Z, pi, params: RateParams) -> np.ndarray:
    Z = check_features(Z)
    pi = check_membership(pi, Z.shape[1])
    G = _grad_whole_nats(Z, params.eps_sq) - _grad_segmented_nats(Z, pi, params.eps_sq)
    return G / params.log_scale
