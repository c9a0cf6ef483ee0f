"""Nearest-subspace classification, K-means and clustering scores."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatchError, InvalidInputError
from .rates import check_features
from .synth import check_labels

RANK_RTOL = 1e-10


@dataclass
class ClassModel:
    mean: np.ndarray
    basis: np.ndarray
    r_j: int
    truncated: bool = False


def fit_class_models(Z, labels, r_j: int = 30, k: int | None = None) -> list[ClassModel]:
    """Mean and top-``r_j`` principal directions of every class.

    ``r_j`` is capped at the numerical rank of the centered class matrix;
    ``truncated`` flags classes where that happened.
    """
    Z = check_features(Z)
    labels = check_labels(labels, k)
    if labels.size != Z.shape[1]:
        raise DimensionMismatchError("labels and features disagree on sample count")
    if r_j < 1:
        raise InvalidInputError("r_j must be positive")
    k = int(labels.max()) + 1 if k is None else k
    models = []
    for j in range(k):
        Zj = Z[:, labels == j]
        if Zj.shape[1] == 0:
            raise InvalidInputError(f"class {j} is empty")
        mu = Zj.mean(axis=1)
        U, s, _ = np.linalg.svd(Zj - mu[:, None], full_matrices=False)
        rank = int(np.sum(s > RANK_RTOL * max(s[0], 1.0))) if s.size else 0
        r = min(r_j, rank)
        models.append(ClassModel(mu, U[:, :r], r, truncated=r < r_j))
    return models


def subspace_residuals(models, Z) -> np.ndarray:
    """Squared residuals ``|(I - U U^T)(z - mu)|^2``, shape ``k x n``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float).T).T
    out = np.empty((len(models), Z.shape[1]))
    for j, mdl in enumerate(models):
        D = Z - mdl.mean[:, None]
        P = mdl.basis.T @ D
        out[j] = np.sum(D * D, axis=0) - np.sum(P * P, axis=0)
    return out


def nearest_subspace_predict(models, z) -> int:
    if not models:
        raise InvalidInputError("no class models")
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    return int(np.argmin(subspace_residuals(models, z)[:, 0]))


def nearest_subspace_predict_batch(models, Z) -> np.ndarray:
    # argmin picks the lowest index on ties
    return np.argmin(subspace_residuals(models, Z), axis=0)


# ---------------------------------------------------------------------------
# K-means


def _lloyd(X, centers, max_iters):
    """X is n x d (rows are samples)."""
    k = centers.shape[0]
    for _ in range(max_iters):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        lab = np.argmin(d2, axis=1)
        new = centers.copy()
        for j in range(k):
            members = X[lab == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                # re-seed an emptied cluster at the point farthest from its center
                far = np.argmax(d2[np.arange(len(X)), lab])
                new[j] = X[far]
        if np.array_equal(new, centers):
            break
        centers = new
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    lab = np.argmin(d2, axis=1)
    return lab, float(d2[np.arange(len(X)), lab].sum()), centers


def wcss(X, labels) -> float:
    """Within-cluster sum of squares for a ``d x m`` matrix and labels."""
    X = np.asarray(X, dtype=float).T
    return float(sum(((X[labels == j] - X[labels == j].mean(axis=0)) ** 2).sum() for j in np.unique(labels)))


def kmeans(X, k: int, seed: int = 0, max_iters: int = 300, restarts: int = 10) -> np.ndarray:
    """Lloyd's algorithm on the columns of ``X``, best of ``restarts`` by WCSS.

    Each restart starts from ``k`` distinct data points drawn from
    ``default_rng(seed)``; ties in WCSS go to the earliest restart.
    """
    X = check_features(X).T
    m = X.shape[0]
    if not 1 <= k <= m:
        raise InvalidInputError(f"need 1 <= k <= m, got k={k}, m={m}")
    rng = np.random.default_rng(seed)
    best_lab, best = None, np.inf
    for _ in range(max(1, restarts)):
        init = X[rng.choice(m, size=k, replace=False)].copy()
        lab, score, _ = _lloyd(X, init, max_iters)
        if score < best:
            best_lab, best = lab, score
    return best_lab


# ---------------------------------------------------------------------------
# clustering scores


def _pair(y, c):
    y, c = check_labels(y), check_labels(c)
    if y.size != c.size:
        raise DimensionMismatchError(f"label vectors differ in length: {y.size} vs {c.size}")
    return y, c


def contingency(y, c) -> np.ndarray:
    y, c = _pair(y, c)
    _, yi = np.unique(y, return_inverse=True)
    _, ci = np.unique(c, return_inverse=True)
    M = np.zeros((yi.max() + 1 if yi.size else 0, ci.max() + 1 if ci.size else 0), dtype=np.int64)
    np.add.at(M, (yi, ci), 1)
    return M


def _same_partition(y, c) -> bool:
    M = contingency(y, c)
    return M.shape[0] == M.shape[1] and np.count_nonzero(M) == M.shape[0]


def nmi(y, c) -> float:
    """Mutual information over the geometric mean of the two entropies.

    If either partition has zero entropy the score is 1 for identical
    partitions and 0 otherwise.
    """
    M = contingency(y, c).astype(float)
    m = M.sum()
    a, b = M.sum(axis=1), M.sum(axis=0)
    ha = -np.sum(a * np.log(a / m))
    hb = -np.sum(b * np.log(b / m))
    if ha <= 0 or hb <= 0:
        return 1.0 if _same_partition(y, c) else 0.0
    nz = M > 0
    mi = np.sum(M[nz] * np.log(m * M[nz] / np.outer(a, b)[nz]))
    return float(np.clip(mi / math.sqrt(ha * hb), 0.0, 1.0))


def _lsa_total(cost) -> float:
    if cost.size == 0:
        return 0.0
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].sum())


def optimal_assignment(cost) -> np.ndarray:
    """Permutation ``p`` minimizing ``sum_i cost[i, p[i]]``.

    Among optimal permutations the lexicographically smallest is returned:
    rows are fixed in order, each to the lowest column that still admits an
    optimal completion.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise InvalidInputError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InvalidInputError("cost matrix must be finite")
    n = cost.shape[0]
    best = _lsa_total(cost)
    tol = 1e-10 * (1.0 + abs(best))
    perm = np.empty(n, dtype=np.int64)
    free = list(range(n))
    spent = 0.0
    for i in range(n):
        for j in free:
            rest = [c for c in free if c != j]
            if spent + cost[i, j] + _lsa_total(cost[np.ix_(range(i + 1, n), rest)]) <= best + tol:
                perm[i] = j
                spent += cost[i, j]
                free = rest
                break
    return perm


def acc(y, c, k: int | None = None) -> tuple[float, np.ndarray]:
    """Best accuracy over one-to-one cluster-to-label maps.

    Returns the score and ``assignment`` with ``assignment[cluster] = label``.
    """
    y, c = _pair(y, c)
    n = max(int(y.max(initial=-1)), int(c.max(initial=-1))) + 1
    k = n if k is None else max(k, n)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (c, y), 1)
    assignment = optimal_assignment(-counts)
    hits = counts[np.arange(k), assignment].sum()
    return float(hits / y.size), assignment


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2


def ari(y, c) -> float:
    y, c = _pair(y, c)
    if y.size < 2:
        raise InvalidInputError("ARI needs at least two samples")
    M = contingency(y, c)
    sum_ij = _comb2(M).sum()
    sa, sb = _comb2(M.sum(axis=1)).sum(), _comb2(M.sum(axis=0)).sum()
    expected = sa * sb / _comb2(y.size)
    denom = 0.5 * (sa + sb) - expected
    if denom == 0:
        return 1.0 if _same_partition(y, c) else 0.0
    return float((sum_ij - expected) / denom)


@dataclass
class MetricReport:
    nmi: float
    acc: float
    ari: float
    assignment: np.ndarray

    def to_dict(self) -> dict:
        return {"nmi": self.nmi, "acc": self.acc, "ari": self.ari, "assignment": [int(v) for v in self.assignment]}


def evaluate(y, c, k: int | None = None) -> MetricReport:
    score, assignment = acc(y, c, k)
    return MetricReport(nmi(y, c), score, ari(y, c), assignment)
