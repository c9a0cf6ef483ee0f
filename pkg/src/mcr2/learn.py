"""Maximizing the rate reduction.

Two optimizers share the same ascent loop (full batch, backtracking that
halves the step until the objective does not decrease):

* ``optimize_representation`` moves the features directly, keeping them on
  the unit sphere (per column) or at fixed per-class Frobenius norm.
* ``train_feature_map`` moves the weights of a small fully connected map
  whose outputs are projected onto the unit sphere.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import rates
from .errors import (
    DegenerateFeatureError,
    DimensionMismatchError,
    InvalidInputError,
    NumericalError,
    StagnationError,
)
from .rates import RateParams, check_features, check_membership

MAX_HALVINGS = 30
ASCENT_SLACK = 1e-12
DEGENERATE_NORM = 1e-12


@dataclass
class OptimizerConfig:
    step_size: float = 0.5
    max_iters: int = 5000
    tol: float = 1e-8
    normalization: Literal["unit_sphere", "per_class_frobenius"] = "unit_sphere"
    use_ctrl: bool = False
    gamma1: float = 1.0
    gamma2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.step_size < 0 or not np.isfinite(self.step_size):
            raise InvalidInputError("step_size must be finite and nonnegative")
        if self.tol <= 0:
            raise InvalidInputError("tol must be positive")
        if self.max_iters < 0:
            raise InvalidInputError("max_iters must be nonnegative")
        if self.normalization not in ("unit_sphere", "per_class_frobenius"):
            raise InvalidInputError(f"unknown normalization {self.normalization!r}")
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise InvalidInputError("gamma1 and gamma2 must be positive")


@dataclass
class TraceRecord:
    iter: int
    R: float
    Rc: float
    DeltaR: float
    grad_norm: float
    objective: float


@dataclass
class OptTrace:
    records: list = field(default_factory=list)

    def append(self, *args) -> None:
        self.records.append(TraceRecord(*args))

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "R", "Rc", "DeltaR", "grad_norm"])
        for r in self.records:
            w.writerow([r.iter] + [format(v, ".17g") for v in (r.R, r.Rc, r.DeltaR, r.grad_norm)])
        return buf.getvalue()


def _objective(Z, pi, params, cfg: OptimizerConfig):
    """Return (objective, R, Rc) where objective is DeltaR or its rescaled variant."""
    R = rates.coding_rate(Z, params)
    Rc, _ = rates.segmented_rate(Z, pi, params)
    if cfg.use_ctrl:
        return rates.scaled_rate(Z, params, cfg.gamma1, cfg.gamma2) - Rc, R, Rc
    return R - Rc, R, Rc


def _objective_grad(Z, pi, params, cfg: OptimizerConfig) -> np.ndarray:
    if cfg.use_ctrl:
        return rates.grad_scaled_rate(Z, params, cfg.gamma1, cfg.gamma2) - rates.grad_segmented_rate(Z, pi, params)
    return rates.grad_rate_reduction(Z, pi, params)


# ---------------------------------------------------------------------------
# constraint sets


def _class_index(pi) -> np.ndarray:
    return np.argmax(pi, axis=1)


def project_to_constraint(Z, pi, normalization: str) -> np.ndarray:
    Z = np.array(Z, dtype=float)
    if normalization == "unit_sphere":
        n = np.linalg.norm(Z, axis=0)
        if np.any(n < DEGENERATE_NORM):
            raise DegenerateFeatureError("zero column cannot be projected to the sphere")
        return Z / n
    labels = _class_index(pi)
    for j in np.unique(labels):
        idx = labels == j
        nrm = np.linalg.norm(Z[:, idx])
        if nrm < DEGENERATE_NORM:
            raise DegenerateFeatureError(f"class {j} has zero Frobenius norm")
        Z[:, idx] *= np.sqrt(idx.sum()) / nrm
    return Z


def constraint_violation(Z, pi, normalization: str) -> float:
    if normalization == "unit_sphere":
        return float(np.max(np.abs(np.linalg.norm(Z, axis=0) - 1.0)))
    labels = _class_index(pi)
    return float(max(abs(np.sum(Z[:, labels == j] ** 2) - np.sum(labels == j)) for j in np.unique(labels)))


def tangent_projection(Z, G, pi, normalization: str) -> np.ndarray:
    """Remove the component of ``G`` normal to the constraint set at ``Z``."""
    if normalization == "unit_sphere":
        return G - Z * np.sum(Z * G, axis=0)
    P = G.copy()
    labels = _class_index(pi)
    for j in np.unique(labels):
        idx = labels == j
        Zj = Z[:, idx]
        P[:, idx] -= Zj * (np.sum(Zj * G[:, idx]) / np.sum(Zj * Zj))
    return P


# ---------------------------------------------------------------------------
# representation optimizer


def optimize_representation(Z0, pi, params: RateParams, cfg: OptimizerConfig | None = None):
    """Projected gradient ascent on the rate reduction over the features.

    Returns the final features and an ``OptTrace`` whose ``objective`` column
    never decreases (beyond ``1e-12``) between accepted iterations.
    """
    cfg = cfg or OptimizerConfig()
    Z = check_features(Z0)
    pi = check_membership(pi, Z.shape[1])
    if constraint_violation(Z, pi, cfg.normalization) > 1e-6:
        Z = project_to_constraint(Z, pi, cfg.normalization)
    else:
        Z = Z.copy()

    trace = OptTrace()
    obj, R, Rc = _objective(Z, pi, params, cfg)
    for it in range(cfg.max_iters):
        G = _objective_grad(Z, pi, params, cfg)
        if not np.all(np.isfinite(G)):
            raise NumericalError(f"non-finite gradient at iteration {it}")
        P = tangent_projection(Z, G, pi, cfg.normalization)
        gnorm = float(np.linalg.norm(P))
        trace.append(it, R, Rc, R - Rc, gnorm, obj)
        if gnorm <= 1e-12 * (1.0 + np.linalg.norm(G)):
            return Z, trace

        eta = cfg.step_size
        for _ in range(MAX_HALVINGS + 1):
            Zn = project_to_constraint(Z + eta * P, pi, cfg.normalization)
            new_obj, newR, newRc = _objective(Zn, pi, params, cfg)
            if new_obj >= obj - ASCENT_SLACK:
                break
            eta *= 0.5
        else:
            if it == 0:
                raise StagnationError("no ascent step found after 30 halvings")
            return Z, trace

        gain = new_obj - obj
        Z, obj, R, Rc = Zn, new_obj, newR, newRc
        if gain < cfg.tol:
            break

    G = _objective_grad(Z, pi, params, cfg)
    gnorm = float(np.linalg.norm(tangent_projection(Z, G, pi, cfg.normalization)))
    trace.append(len(trace), R, Rc, R - Rc, gnorm, obj)
    return Z, trace


# ---------------------------------------------------------------------------
# feature map


@dataclass
class FeatureMapParams:
    layer_widths: list
    weights: list
    biases: list
    activation: str = "smooth_rectifier"

    def copy(self) -> "FeatureMapParams":
        return FeatureMapParams(
            list(self.layer_widths),
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def with_flat(self, theta) -> "FeatureMapParams":
        out = self.copy()
        pos = 0
        for i, (W, b) in enumerate(zip(out.weights, out.biases)):
            out.weights[i] = np.asarray(theta[pos:pos + W.size]).reshape(W.shape).copy()
            pos += W.size
            out.biases[i] = np.asarray(theta[pos:pos + b.size]).copy()
            pos += b.size
        return out


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_feature_map(layer_widths, seed: int = 0) -> FeatureMapParams:
    """Gaussian weights with standard deviation ``1/sqrt(fan_in)``, zero biases."""
    widths = [int(w) for w in layer_widths]
    if len(widths) < 2:
        raise InvalidInputError("need at least an input and an output width")
    if any(w < 1 for w in widths):
        raise InvalidInputError(f"widths must be positive, got {widths}")
    rng = np.random.default_rng(seed)
    Ws, bs = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        Ws.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        bs.append(np.zeros(fan_out))
    return FeatureMapParams(widths, Ws, bs)


def _forward(params: FeatureMapParams, X):
    """Return pre-normalization output and cached layer activations."""
    X = check_features(X)
    if X.shape[0] != params.layer_widths[0]:
        raise DimensionMismatchError(f"input dimension {X.shape[0]} != {params.layer_widths[0]}")
    acts, pre = [X], []
    H = X
    n = len(params.weights)
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        A = W @ H + b[:, None]
        pre.append(A)
        H = softplus(A) if i < n - 1 else A
        acts.append(H)
    return H, acts, pre


def _sphere(U):
    norms = np.linalg.norm(U, axis=0)
    if np.any(norms < DEGENERATE_NORM):
        raise DegenerateFeatureError("feature column collapsed to zero norm before sphere projection")
    return U / norms, norms


def feature_map_forward(params: FeatureMapParams, X) -> np.ndarray:
    """Apply the map and project every output column onto the unit sphere."""
    U, _, _ = _forward(params, X)
    return _sphere(U)[0]


def feature_map_objective(params, X, pi, rate_params, cfg: OptimizerConfig):
    Z = feature_map_forward(params, X)
    return _objective(Z, pi, rate_params, cfg)


def feature_map_grad(params: FeatureMapParams, X, pi, rate_params: RateParams, cfg: OptimizerConfig):
    """Objective value, (R, Rc) and the gradient w.r.t. every weight and bias."""
    U, acts, pre = _forward(params, X)
    Z, norms = _sphere(U)
    obj, R, Rc = _objective(Z, pi, rate_params, cfg)
    G = _objective_grad(Z, pi, rate_params, cfg)
    # through z = u/|u|: dL/du = (I - z z^T) g / |u|
    delta = (G - Z * np.sum(Z * G, axis=0)) / norms
    n = len(params.weights)
    gW, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            delta = delta * sigmoid(pre[i])
        gW[i] = delta @ acts[i].T
        gb[i] = delta.sum(axis=1)
        if i > 0:
            delta = params.weights[i].T @ delta
    return obj, R, Rc, gW, gb


def train_feature_map(params: FeatureMapParams, X, pi, rate_params: RateParams, cfg: OptimizerConfig | None = None):
    """Full-batch gradient ascent of the rate reduction over the map weights."""
    cfg = cfg or OptimizerConfig()
    X = check_features(X)
    pi = check_membership(pi, X.shape[1])
    params = params.copy()
    trace = OptTrace()
    obj, R, Rc, gW, gb = feature_map_grad(params, X, pi, rate_params, cfg)
    for it in range(cfg.max_iters):
        gnorm = float(np.sqrt(sum(np.sum(g * g) for g in gW + gb)))
        if not np.isfinite(gnorm):
            raise NumericalError(f"non-finite parameter gradient at iteration {it}")
        trace.append(it, R, Rc, R - Rc, gnorm, obj)
        if gnorm == 0.0:
            return params, trace

        eta = cfg.step_size
        for _ in range(MAX_HALVINGS + 1):
            cand = params.copy()
            for i in range(len(cand.weights)):
                cand.weights[i] += eta * gW[i]
                cand.biases[i] += eta * gb[i]
            new_obj, newR, newRc = feature_map_objective(cand, X, pi, rate_params, cfg)
            if new_obj >= obj - ASCENT_SLACK:
                break
            eta *= 0.5
        else:
            if it == 0:
                raise StagnationError("no ascent step found after 30 halvings")
            return params, trace

        gain = new_obj - obj
        params = cand
        obj, R, Rc, gW, gb = feature_map_grad(params, X, pi, rate_params, cfg)
        if gain < cfg.tol:
            break

    gnorm = float(np.sqrt(sum(np.sum(g * g) for g in gW + gb)))
    trace.append(len(trace), R, Rc, R - Rc, gnorm, obj)
    return params, trace
