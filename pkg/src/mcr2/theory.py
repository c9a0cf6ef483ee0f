"""Numerical checks of the structural properties of the rate reduction.

Bound checks evaluate both sides of an inequality and report the slack
(``rhs - lhs``).  ``optimal_singular_values`` solves the scalar program that
governs the per-class spectrum of an optimal representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import rates
from .errors import DimensionMismatchError, InvalidInputError, InvalidMembershipError
from .rates import RateParams, check_features, check_membership, logdet_identity_plus_gram

RESIDUAL_TOL = 1e-9
EQUALITY_TOL = 1e-6
RANK_RTOL = 1e-6


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    slack: float
    equality_expected: bool
    tolerance: float = RESIDUAL_TOL

    @property
    def holds(self) -> bool:
        return self.slack >= -self.tolerance

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "equality_expected": self.equality_expected,
            "tolerance": self.tolerance,
            "holds": self.holds,
        }


def _bound(lhs, rhs, equality_expected, tol=RESIDUAL_TOL) -> BoundReport:
    return BoundReport(float(lhs), float(rhs), float(rhs - lhs), bool(equality_expected), tol)


# ---------------------------------------------------------------------------
# coding-rate bounds


def _cross_orthogonal(parts, tol=EQUALITY_TOL) -> bool:
    for a in range(len(parts)):
        for b in range(a + 1, len(parts)):
            if np.max(np.abs(parts[a].T @ parts[b])) > tol:
                return False
    return True


def _equal_scaled_covariances(parts, tol=1e-8) -> bool:
    covs = [P @ P.T / P.shape[1] for P in parts]
    return all(np.max(np.abs(c - covs[0])) <= tol for c in covs[1:])


def check_rate_bounds(parts, params: RateParams) -> tuple[BoundReport, BoundReport]:
    """Lower and upper bounds on ``(m/2) log det(I + d/(m eps^2) Z Z^T)``.

    With ``Z = [Z_1, ..., Z_k]``::

        sum_j m_j/2 logdet(I + d/(m_j eps^2) Z_j Z_j^T)
            <= m/2 logdet(I + d/(m eps^2) Z Z^T)
            <= sum_j m/2 logdet(I + d/(m eps^2) Z_j Z_j^T)

    The lower bound is tight iff all ``Z_j Z_j^T / m_j`` coincide, the upper
    one iff the parts are mutually orthogonal.
    """
    parts = [check_features(P) for P in parts]
    if len(parts) < 2:
        raise InvalidInputError("need at least two parts")
    d = parts[0].shape[0]
    if any(P.shape[0] != d for P in parts):
        raise DimensionMismatchError("all parts must share the feature dimension")
    eps_sq, scale = params.eps_sq, params.log_scale
    Z = np.hstack(parts)
    m = Z.shape[1]
    middle = m / 2 * logdet_identity_plus_gram(Z, d / (m * eps_sq))
    low = sum(P.shape[1] / 2 * logdet_identity_plus_gram(P, d / (P.shape[1] * eps_sq)) for P in parts)
    high = sum(m / 2 * logdet_identity_plus_gram(P, d / (m * eps_sq)) for P in parts)
    lower = _bound(low / scale, middle / scale, _equal_scaled_covariances(parts))
    upper = _bound(middle / scale, high / scale, _cross_orthogonal(parts))
    return lower, upper


def class_blocks(Z, pi) -> list[np.ndarray]:
    """Split columns of ``Z`` by a hard membership (empty classes give ``d x 0``)."""
    labels = np.argmax(pi, axis=1)
    return [Z[:, labels == j] for j in range(pi.shape[1])]


def _require_hard(pi):
    if not rates.is_hard_membership(pi):
        raise InvalidMembershipError("a hard (one-hot) membership is required")


def reduction_upper_bound(Z, pi, params: RateParams) -> float:
    """Per-class bound on the rate reduction; tight for orthogonal classes."""
    Z = check_features(Z)
    pi = check_membership(pi, Z.shape[1])
    _require_hard(pi)
    d, m = Z.shape
    total = 0.0
    for Zj in class_blocks(Z, pi):
        mj = Zj.shape[1]
        if mj == 0:
            continue
        total += (
            m * logdet_identity_plus_gram(Zj, d / (m * params.eps_sq))
            - mj * logdet_identity_plus_gram(Zj, d / (mj * params.eps_sq))
        ) / (2 * m)
    return total / params.log_scale


def check_reduction_upper_bound(Z, pi, params: RateParams) -> BoundReport:
    Z = check_features(Z)
    pi = check_membership(pi, Z.shape[1])
    _require_hard(pi)
    dr = rates.rate_reduction(Z, pi, params).reduction
    rhs = reduction_upper_bound(Z, pi, params)
    parts = [P for P in class_blocks(Z, pi) if P.shape[1]]
    return _bound(dr, rhs, _cross_orthogonal(parts))


def check_concavity_in_pi(Z, pi_a, pi_b, alpha: float, params: RateParams) -> BoundReport:
    """Slack of ``Rc(Z | (1-a) pi_a + a pi_b) >= (1-a) Rc(Z|pi_a) + a Rc(Z|pi_b)``."""
    Z = check_features(Z)
    pi_a = check_membership(pi_a, Z.shape[1])
    pi_b = check_membership(pi_b, Z.shape[1])
    if pi_a.shape != pi_b.shape:
        raise DimensionMismatchError(f"membership shapes differ: {pi_a.shape} vs {pi_b.shape}")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    mix = (1 - alpha) * pi_a + alpha * pi_b
    lhs = (1 - alpha) * rates.segmented_rate(Z, pi_a, params)[0] + alpha * rates.segmented_rate(Z, pi_b, params)[0]
    rhs = rates.segmented_rate(Z, mix, params)[0]
    return _bound(lhs, rhs, np.allclose(pi_a, pi_b))


# ---------------------------------------------------------------------------
# scalar singular-value program


@dataclass(frozen=True)
class ScalarProgram:
    """``max sum_p f(x_p)  s.t.  sum_p x_p = c, x >= 0`` over ``r`` variables.

    ``f(x) = m log(1 + d x/(m eps^2)) - c log(1 + d x/(c eps^2))`` is the
    contribution of one squared singular value ``x`` of a class with ``c``
    samples out of ``m`` (in nats, before the ``1/(2m)`` factor).
    """

    r: int
    c: float
    d: int
    m: float
    eps_sq: float

    def __post_init__(self):
        if self.r < 1:
            raise InvalidInputError("rank budget r must be positive")
        if not self.c > 0:
            raise InvalidInputError("mass c must be positive")
        if self.d < 1 or not self.eps_sq > 0:
            raise InvalidInputError("d and eps_sq must be positive")
        if self.r > self.d:
            raise InvalidInputError("rank budget r cannot exceed d")
        if self.m < self.c:
            raise InvalidInputError("class size c cannot exceed m")

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return self.m * np.log1p(self.d * x / (self.m * self.eps_sq)) - self.c * np.log1p(
            self.d * x / (self.c * self.eps_sq)
        )

    def fprime(self, x):
        x = np.asarray(x, dtype=float)
        d, m, c, e = self.d, self.m, self.c, self.eps_sq
        return d * d * x * (m - c) / ((d * x + m * e) * (d * x + c * e))

    def objective(self, x) -> float:
        return float(np.sum(self.f(x)))

    @property
    def x_turn(self) -> float:
        """Point where ``f'`` switches from increasing to decreasing."""
        return self.eps_sq * math.sqrt(self.m * self.c) / self.d

    @property
    def diversity_condition(self) -> bool:
        return self.eps_sq**2 < (self.c / self.m) * (self.d / self.r) ** 2


def _profile(r: int, q: int, xh: float, xl: float) -> np.ndarray:
    x = np.zeros(r)
    x[:q - 1] = xh
    x[q - 1] = xl
    return x


def _best_two_level(prog: ScalarProgram, q: int, xtol: float) -> tuple[float, float]:
    """Best ``(q-1) f(x_H) + f(c - (q-1) x_H)`` over ``x_H in (c/q, c/(q-1))``."""
    c = prog.c
    lo, hi = c / q, c / (q - 1)
    g = lambda xh: -((q - 1) * prog.f(xh) + prog.f(max(c - (q - 1) * xh, 0.0)))
    grid = np.linspace(lo, hi, 2001)[1:-1]
    vals = np.array([g(x) for x in grid])
    i = int(np.argmin(vals))
    a = grid[i - 1] if i > 0 else lo
    b = grid[i + 1] if i < grid.size - 1 else hi
    res = minimize_scalar(g, bounds=(a, b), method="bounded", options={"xatol": xtol})
    if res.fun < vals[i]:
        return float(res.x), float(-res.fun)
    return float(grid[i]), float(-vals[i])


def optimal_singular_values(prog: ScalarProgram, xtol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Global maximizer of the scalar program.

    On its support of size ``q``, an optimum either splits ``c`` equally or
    takes the form ``[x_H, ..., x_H, x_L]`` with ``(q-1) x_H + x_L = c`` and
    ``x_H in (c/q, c/(q-1))``.  Both families are searched for every
    ``q = 1..r`` (the second by a bracketed 1-D search).  Ties keep the
    larger support, so the full equal split wins whenever it is optimal.
    Returns singular values (square roots, descending) and the objective.
    """
    r, c = prog.r, prog.c
    best_x, best_val = np.full(r, c / r), r * float(prog.f(c / r))
    beats = lambda v: v > best_val + 1e-12 * (1.0 + abs(best_val))
    for q in range(r, 0, -1):
        val = q * float(prog.f(c / q))
        if beats(val):
            best_x, best_val = _profile(r, q, c / q, c / q), val
        if q >= 2:
            xh, val = _best_two_level(prog, q, xtol)
            if beats(val):
                best_x, best_val = _profile(r, q, xh, c - (q - 1) * xh), val
    sig = np.sqrt(np.sort(np.clip(best_x, 0.0, None))[::-1])
    return sig, float(best_val)


def optimal_rate_reduction(class_sizes, d: int, params: RateParams, ranks=None) -> float:
    """Maximal rate reduction for classes of the given sizes.

    Each class contributes its scalar-program optimum times ``1/(2m)``;
    ``ranks`` defaults to ``min(d, m_j)``.
    """
    sizes = [int(s) for s in class_sizes]
    m = sum(sizes)
    if ranks is None:
        ranks = [min(d, s) for s in sizes]
    total = 0.0
    for mj, rj in zip(sizes, ranks):
        if mj == 0:
            continue
        _, obj = optimal_singular_values(ScalarProgram(rj, mj, d, m, params.eps_sq))
        total += obj / (2 * m)
    return total / params.log_scale


# ---------------------------------------------------------------------------
# diagnostics of a computed solution


@dataclass
class OptimalityDiagnostics:
    max_interclass_cosine: float
    per_class_singular_values: list = field(default_factory=list)
    per_class_rank_estimate: list = field(default_factory=list)
    diversity_condition_satisfied: bool = False

    def to_dict(self) -> dict:
        return {
            "max_interclass_cosine": self.max_interclass_cosine,
            "per_class_singular_values": [list(map(float, s)) for s in self.per_class_singular_values],
            "per_class_rank_estimate": list(map(int, self.per_class_rank_estimate)),
            "diversity_condition_satisfied": self.diversity_condition_satisfied,
        }


def numerical_rank(s: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def max_interclass_cosine(Z, labels) -> float:
    Zn = Z / np.linalg.norm(Z, axis=0, keepdims=True)
    C = np.abs(Zn.T @ Zn)
    cross = labels[:, None] != labels[None, :]
    return float(C[cross].max()) if cross.any() else 0.0


def diagnose_optimum(Z, pi, params: RateParams) -> OptimalityDiagnostics:
    Z = check_features(Z)
    pi = check_membership(pi, Z.shape[1])
    _require_hard(pi)
    d, m = Z.shape
    labels = np.argmax(pi, axis=1)
    spectra, ranks = [], []
    cond = []
    for Zj in class_blocks(Z, pi):
        s = np.linalg.svd(Zj, compute_uv=False) if Zj.shape[1] else np.zeros(0)
        spectra.append(s)
        ranks.append(numerical_rank(s))
        mj = Zj.shape[1]
        if mj:
            dj = min(d, mj)
            cond.append((mj / m) * (d / dj) ** 2)
    return OptimalityDiagnostics(
        max_interclass_cosine=max_interclass_cosine(Z, labels),
        per_class_singular_values=spectra,
        per_class_rank_estimate=ranks,
        diversity_condition_satisfied=bool(params.eps_sq**2 < min(cond)),
    )


def logdet_concavity_gap(A, B, alpha: float) -> float:
    """``logdet((1-a)A + aB) - (1-a) logdet A - a logdet B`` for SPD ``A, B``."""
    ld = lambda M: np.linalg.slogdet(M)[1]
    return float(ld((1 - alpha) * A + alpha * B) - (1 - alpha) * ld(A) - alpha * ld(B))
