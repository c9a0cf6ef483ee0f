"""Randomized property sweeps.

Each sweep draws ``trials`` seeded instances, evaluates one property and
returns a ``PropertyResult`` holding the worst slack seen (negative means
violated) and the instance that produced it.  The ``verify`` CLI command and
the acceptance tests are thin wrappers around these.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ortho_group

from . import learn, metrics, rates, synth, theory
from .rates import RateParams


@dataclass
class PropertyResult:
    name: str
    passed: bool
    worst_slack: float
    trials: int
    tolerance: float
    witness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_slack": self.worst_slack,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "witness": self.witness,
        }


class _Worst:
    """Track the smallest slack and the instance that produced it."""

    def __init__(self, name, trials, tol):
        self.name, self.trials, self.tol = name, trials, tol
        self.slack, self.witness = math.inf, {}

    def see(self, slack, **witness):
        if slack < self.slack:
            self.slack = float(slack)
            self.witness = {k: _jsonable(v) for k, v in witness.items()}

    def result(self) -> PropertyResult:
        return PropertyResult(self.name, bool(self.slack >= -self.tol), self.slack, self.trials, self.tol, self.witness)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# random instances


def random_membership(rng, m, k, soft=False):
    if soft:
        return rng.dirichlet(np.ones(k), size=m)
    labels = rng.integers(0, k, size=m)
    return synth.membership_from_labels(labels, k)


def random_instance(rng, max_d=32, max_m=64, max_k=5, soft=None):
    d = int(rng.integers(1, max_d + 1))
    m = int(rng.integers(2, max_m + 1))
    k = int(rng.integers(1, max_k + 1))
    if soft is None:
        soft = bool(rng.integers(0, 2))
    Z = rng.standard_normal((d, m)) * float(np.exp(rng.uniform(-1.5, 1.5)))
    eps_sq = float(np.exp(rng.uniform(np.log(0.05), np.log(2.0))))
    return Z, random_membership(rng, m, k, soft), RateParams(eps_sq, "nats")


def random_spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + 0.1 * np.eye(n)


# ---------------------------------------------------------------------------
# lemma sweeps


def sweep_nonnegativity(trials, seed, tol=1e-9) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("reduction_nonnegative", trials, tol)
    for t in range(trials):
        Z, pi, p = random_instance(rng)
        dr = rates.rate_reduction(Z, pi, p).reduction
        w.see(dr, trial=t, DeltaR=dr, d=Z.shape[0], m=Z.shape[1], k=pi.shape[1])
    return w.result()


def sweep_commutativity(trials, seed, tol=1e-8) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("logdet_commutative", trials, tol)
    for t in range(trials):
        d, m = rng.integers(1, 40, size=2)
        Z = rng.standard_normal((d, m))
        a = float(np.exp(rng.uniform(-2, 2)))
        v1 = np.linalg.slogdet(np.eye(d) + a * Z @ Z.T)[1]
        v2 = np.linalg.slogdet(np.eye(m) + a * Z.T @ Z)[1]
        w.see(tol * (1 + abs(v1)) - abs(v1 - v2) - tol, trial=t, left=v1, right=v2)
    return w.result()


def sweep_orthogonal_invariance(trials, seed, tol=1e-8) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("rate_orthogonal_invariant", trials, tol)
    for t in range(trials):
        d, m = (int(v) for v in rng.integers(2, 30, size=2))
        Z = rng.standard_normal((d, m))
        p = RateParams(float(rng.uniform(0.1, 2.0)), "nats")
        U = ortho_group.rvs(d, random_state=rng)
        V = ortho_group.rvs(m, random_state=rng)
        r1, r2 = rates.coding_rate(Z, p), rates.coding_rate(U @ Z @ V.T, p)
        w.see(tol * (1 + abs(r1)) - abs(r1 - r2) - tol, trial=t, R=r1, R_rotated=r2)
    return w.result()


def _random_parts(rng, max_d=16, max_parts=4):
    d = int(rng.integers(1, max_d + 1))
    return [rng.standard_normal((d, int(rng.integers(1, 12)))) for _ in range(int(rng.integers(2, max_parts + 1)))]


def sweep_rate_bounds(trials, seed, tol=1e-9) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("coding_rate_bounds", trials, tol)
    for t in range(trials):
        parts = _random_parts(rng)
        p = RateParams(float(rng.uniform(0.1, 2.0)), "nats")
        lo, hi = theory.check_rate_bounds(parts, p)
        w.see(min(lo.slack, hi.slack), trial=t, lower_slack=lo.slack, upper_slack=hi.slack)
    return w.result()


def orthogonal_block_parts(rng, d=12, sizes=(3, 4, 2), dims=(2, 3, 4)):
    Q, _ = np.linalg.qr(rng.standard_normal((d, sum(dims))))
    out, pos = [], 0
    for n, r in zip(sizes, dims):
        out.append(Q[:, pos:pos + r] @ rng.standard_normal((r, n)))
        pos += r
    return out


def equal_covariance_parts(rng, d=6, n=5, copies=3):
    """Parts sharing ``Z_j Z_j^T / m_j``: rotated copies of one block."""
    base = rng.standard_normal((d, n))
    return [base @ ortho_group.rvs(n, random_state=rng) for _ in range(copies)]


def sweep_bound_equality(trials, seed, tol=1e-6) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("bound_equality_cases", trials, tol)
    for t in range(trials):
        p = RateParams(float(rng.uniform(0.1, 2.0)), "nats")
        lo, _ = theory.check_rate_bounds(equal_covariance_parts(rng), p)
        _, hi = theory.check_rate_bounds(orthogonal_block_parts(rng), p)
        Z = np.hstack(orthogonal_block_parts(rng))
        labels = np.repeat(np.arange(3), (3, 4, 2))
        red = theory.check_reduction_upper_bound(Z, synth.membership_from_labels(labels, 3), p)
        worst = max(abs(lo.slack), abs(hi.slack), abs(red.slack))
        w.see(-worst, trial=t, lower_slack=lo.slack, upper_slack=hi.slack, reduction_slack=red.slack)
    return w.result()


def sweep_reduction_upper_bound(trials, seed, tol=1e-9) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("reduction_upper_bound", trials, tol)
    for t in range(trials):
        Z, pi, p = random_instance(rng, soft=False)
        rep = theory.check_reduction_upper_bound(Z, pi, p)
        w.see(rep.slack, trial=t, DeltaR=rep.lhs, bound=rep.rhs)
    return w.result()


def sweep_logdet_concavity(trials, seed, tol=0.0) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("logdet_strictly_concave", trials, tol)
    for t in range(trials):
        n = int(rng.integers(1, 10))
        A, B = random_spd(rng, n), random_spd(rng, n)
        a = float(rng.uniform(0.05, 0.95))
        gap = theory.logdet_concavity_gap(A, B, a)
        # strictness: demand a strictly positive gap
        w.see(gap if gap > 0 else -1.0, trial=t, gap=gap, alpha=a)
    return w.result()


def sweep_concavity_in_pi(trials, seed, tol=1e-9) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("segmented_rate_concave_in_pi", trials, tol)
    for t in range(trials):
        Z, pa, p = random_instance(rng, soft=True)
        pb = random_membership(rng, Z.shape[1], pa.shape[1], soft=bool(rng.integers(0, 2)))
        a = float(rng.uniform(0.01, 0.99))
        rep = theory.check_concavity_in_pi(Z, pa, pb, a, p)
        w.see(rep.slack, trial=t, concavity_slack=rep.slack, alpha=a)
    return w.result()


SCALE_GRID = np.round(np.arange(1, 101) * 0.1, 10)


def sweep_scale_monotonicity(trials, seed, tol=1e-9) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("reduction_monotone_in_scale", trials, tol)
    for t in range(trials):
        d = int(rng.integers(2, 17))
        k = int(rng.integers(2, 5))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=int(rng.integers(0, 20)))])
        Z = rng.standard_normal((d, labels.size))
        pi = synth.membership_from_labels(labels, k)
        p = RateParams(float(rng.uniform(0.1, 2.0)), "nats")
        vals = np.array([rates.rate_reduction(c * Z, pi, p).reduction for c in SCALE_GRID])
        steps = np.diff(vals)
        i = int(np.argmin(steps))
        w.see(steps[i], trial=t, c=SCALE_GRID[i], drop=steps[i])
    return w.result()


# ---------------------------------------------------------------------------
# theorem sweeps


def random_program(rng, r_choices=(2, 3)) -> theory.ScalarProgram:
    r = int(rng.choice(r_choices))
    d = int(rng.integers(r, 40))
    c = int(rng.integers(r, 60))
    m = c + int(rng.integers(1, 200))
    return theory.ScalarProgram(r, float(c), d, float(m), float(np.exp(rng.uniform(np.log(0.01), np.log(4.0)))))


def grid_max(prog: theory.ScalarProgram, step: float = 1e-4) -> float:
    """Brute-force maximum over the simplex grid with spacing ``step * c``."""
    n = int(round(1 / step))
    F = prog.f(np.arange(n + 1) * prog.c / n)
    if prog.r == 1:
        return float(F[n])
    if prog.r == 2:
        return float(np.max(F + F[::-1]))
    if prog.r == 3:
        best = -np.inf
        for i in range(n + 1):
            j = np.arange(n - i + 1)
            best = max(best, float(np.max(F[i] + F[j] + F[n - i - j])))
        return best
    raise ValueError("grid search only for r <= 3")


def sweep_scalar_program_vs_grid(trials, seed, tol=1e-6) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("scalar_program_beats_grid", trials, tol)
    for t in range(trials):
        prog = random_program(rng)
        _, obj = theory.optimal_singular_values(prog)
        g = grid_max(prog)
        w.see(obj - g, trial=t, r=prog.r, c=prog.c, d=prog.d, m=prog.m, eps_sq=prog.eps_sq, objective=obj, grid=g)
    return w.result()


def in_candidate_family(sig, rtol=1e-9) -> bool:
    """Nonzero part is an equal split or ``[x_H, ..., x_H, x_L]``."""
    x = np.asarray(sig) ** 2
    x = x[x > 0]
    if x.size <= 2:
        return True
    return bool(np.allclose(x[:-1], x[0], rtol=rtol, atol=0))


def sweep_scalar_program_vs_random(trials, seed, n_points=10_000, tol=1e-9) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("scalar_program_beats_random_points", trials, tol)
    for t in range(trials):
        prog = random_program(rng, r_choices=(1, 2, 3, 4, 6, 8))
        sig, obj = theory.optimal_singular_values(prog)
        X = rng.dirichlet(np.ones(prog.r), size=n_points) * prog.c
        best = float(np.max(np.sum(prog.f(X), axis=1)))
        w.see(obj - best if in_candidate_family(sig) else -1.0, trial=t, objective=obj, random_best=best)
    return w.result()


def sweep_profile_under_diversity(trials, seed, tol=1e-9) -> PropertyResult:
    """Under the precision condition the optimum is one of the candidate profiles.

    The equal split itself is not guaranteed: some programs satisfying the
    condition prefer a smaller support.
    """
    rng = np.random.default_rng(seed)
    w = _Worst("optimal_profile_family_under_diversity", trials, tol)
    seen = 0
    while seen < trials:
        prog = random_program(rng, r_choices=(1, 2, 3, 5, 8))
        if not prog.diversity_condition:
            continue
        sig, obj = theory.optimal_singular_values(prog)
        eq = prog.objective(np.full(prog.r, prog.c / prog.r))
        ok = in_candidate_family(sig) and obj >= eq - tol
        w.see(obj - eq if ok else -1.0, trial=seen, r=prog.r, sigmas=sig)
        seen += 1
    return w.result()


def a7_run(seed: int, params=None):
    """One start of the d=16, k=2, 4-samples-per-class emergence experiment."""
    params = params or RateParams(0.5, "nats")
    labels = np.repeat([0, 1], 4)
    pi = synth.membership_from_labels(labels, 2)
    Z0 = synth.random_sphere(16, 8, seed)
    cfg = learn.OptimizerConfig(step_size=0.5, max_iters=5000, tol=1e-10, normalization="unit_sphere")
    Z, trace = learn.optimize_representation(Z0, pi, params, cfg)
    return Z, trace, pi


def sweep_theorem_emergence(trials, seed, tol=0.0) -> PropertyResult:
    p = RateParams(0.5, "nats")
    sig, _ = theory.optimal_singular_values(theory.ScalarProgram(4, 4.0, 16, 8.0, 0.5))
    best = theory.optimal_rate_reduction([4, 4], 16, p)
    w = _Worst("theorem_structure_emerges", trials, tol)
    for t in range(trials):
        Z, trace, pi = a7_run(seed + t, p)
        diag = theory.diagnose_optimum(Z, pi, p)
        spec_err = max(float(np.max(np.abs(s[:4] - sig) / sig)) for s in diag.per_class_singular_values)
        gap = abs(trace.records[-1].DeltaR - best) / best
        margin = min(1e-2 - diag.max_interclass_cosine, 1e-2 - spec_err, 5e-3 - gap)
        w.see(margin, trial=t, cosine=diag.max_interclass_cosine, spectrum_rel_err=spec_err, dr_rel_gap=gap)
    return w.result()


# ---------------------------------------------------------------------------
# gradient sweeps


def finite_difference(f, X, h=1e-5) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    G = np.zeros_like(X)
    it = np.nditer(X, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        G[idx] = (f(Xp) - f(Xm)) / (2 * h)
    return G


def relative_error(g, fd) -> float:
    scale = max(float(np.max(np.abs(fd))), 1e-12)
    return float(np.max(np.abs(g - fd))) / scale


def sweep_matrix_gradients(trials, seed, tol=1e-5) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("matrix_gradients_match_fd", trials, tol)
    for t in range(trials):
        d, m = (int(v) for v in rng.integers(1, 13, size=2))
        k = int(rng.integers(1, 4))
        Z = rng.standard_normal((d, m))
        pi = random_membership(rng, m, k, soft=bool(rng.integers(0, 2)))
        p = RateParams(float(rng.uniform(0.2, 2.0)), "bits")
        errs = {
            "R": relative_error(rates.grad_coding_rate(Z, p), finite_difference(lambda X: rates.coding_rate(X, p), Z)),
            "Rc": relative_error(
                rates.grad_segmented_rate(Z, pi, p), finite_difference(lambda X: rates.segmented_rate(X, pi, p)[0], Z)
            ),
        }
        dr_fd = finite_difference(lambda X: rates.rate_reduction(X, pi, p).reduction, Z)
        # DeltaR vanishes identically for one class; compare absolute error there
        if k > 1 and np.max(np.abs(dr_fd)) > 1e-6:
            errs["DeltaR"] = relative_error(rates.grad_rate_reduction(Z, pi, p), dr_fd)
        worst = max(errs, key=errs.get)
        w.see(-errs[worst], trial=t, which=worst, rel_err=errs[worst], d=d, m=m)
    return w.result()


def network_gradient_error(widths, m, seed, use_ctrl=False, gammas=(1.0, 1.0)) -> float:
    rng = np.random.default_rng(seed)
    params = learn.init_feature_map(widths, seed)
    for b in params.biases:
        b[:] = 0.1 * rng.standard_normal(b.shape)
    X = rng.standard_normal((widths[0], m))
    k = 2
    labels = np.arange(m) % k
    pi = synth.membership_from_labels(labels, k)
    p = RateParams(0.5, "nats")
    cfg = learn.OptimizerConfig(use_ctrl=use_ctrl, gamma1=gammas[0], gamma2=gammas[1])
    _, _, _, gW, gb = learn.feature_map_grad(params, X, pi, p, cfg)
    g = np.concatenate([a.ravel() for pair in zip(gW, gb) for a in pair])
    theta = params.flat()
    fd = finite_difference(lambda th: learn.feature_map_objective(params.with_flat(th), X, pi, p, cfg)[0], theta)
    return relative_error(g, fd)


def sweep_network_gradients(trials, seed, tol=1e-4) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("network_gradient_matches_fd", trials, tol)
    for t in range(trials):
        widths = [int(v) for v in rng.integers(2, 7, size=int(rng.integers(2, 4)))]
        m = int(rng.integers(4, 11))
        use_ctrl = bool(rng.integers(0, 2))
        gam = tuple(float(v) for v in rng.uniform(0.5, 3, size=2))
        err = network_gradient_error(widths, m, int(rng.integers(1 << 30)), use_ctrl, gam)
        w.see(-err, trial=t, widths=widths, m=m, rel_err=err)
    return w.result()


# ---------------------------------------------------------------------------
# metric sweeps


def brute_force_acc(y, c, k) -> float:
    best = 0
    for perm in itertools.permutations(range(k)):
        best = max(best, int(np.sum(y == np.asarray(perm)[c])))
    return best / len(y)


def pairwise_ari(y, c) -> float:
    """ARI from explicit O(m^2) pair counting."""
    m = len(y)
    same_y = y[:, None] == y[None, :]
    same_c = c[:, None] == c[None, :]
    iu = np.triu_indices(m, 1)
    a = np.sum(same_y[iu] & same_c[iu])
    ny, nc = np.sum(same_y[iu]), np.sum(same_c[iu])
    total = m * (m - 1) / 2
    expected = ny * nc / total
    denom = 0.5 * (ny + nc) - expected
    if denom == 0:
        return 1.0 if np.array_equal(same_y, same_c) else 0.0
    return float((a - expected) / denom)


def brute_force_assignment(cost):
    n = cost.shape[0]
    best, arg = np.inf, None
    for perm in itertools.permutations(range(n)):
        v = cost[np.arange(n), perm].sum()
        if v < best:
            best, arg = v, perm
    return best, np.array(arg)


def sweep_acc(trials, seed, tol=1e-12) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("acc_equals_brute_force", trials, tol)
    for t in range(trials):
        k = int(rng.integers(1, 6))
        m = int(rng.integers(1, 40))
        y, c = rng.integers(0, k, m), rng.integers(0, k, m)
        got = metrics.acc(y, c, k)[0]
        ref = brute_force_acc(y, c, k)
        w.see(-abs(got - ref), trial=t, acc=got, brute=ref)
    return w.result()


def sweep_ari(trials, seed, tol=1e-12) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("ari_equals_pairwise_oracle", trials, tol)
    for t in range(trials):
        m = int(rng.integers(2, 60))
        y, c = rng.integers(0, int(rng.integers(1, 6)), m), rng.integers(0, int(rng.integers(1, 6)), m)
        got, ref = metrics.ari(y, c), pairwise_ari(y, c)
        w.see(-abs(got - ref), trial=t, ari=got, oracle=ref)
    return w.result()


def sweep_assignment(trials, seed, tol=1e-9) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("assignment_equals_brute_force", trials, tol)
    for t in range(trials):
        cost = rng.standard_normal((6, 6))
        perm = metrics.optimal_assignment(cost)
        got = cost[np.arange(6), perm].sum()
        ref, _ = brute_force_assignment(cost)
        w.see(-abs(got - ref), trial=t, total=got, brute=ref)
    return w.result()


def sweep_identical_partitions(trials, seed, tol=1e-12) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = _Worst("scores_one_on_identical_partitions", trials, tol)
    for t in range(trials):
        m = int(rng.integers(2, 50))
        y = rng.integers(0, int(rng.integers(1, 6)), m)
        relabel = rng.permutation(int(y.max()) + 1)
        rep = metrics.evaluate(y, relabel[y])
        w.see(-max(abs(rep.nmi - 1), abs(rep.acc - 1), abs(rep.ari - 1)), trial=t, **rep.to_dict())
    return w.result()


SUITES = {
    "lemmas": [
        sweep_nonnegativity,
        sweep_commutativity,
        sweep_orthogonal_invariance,
        sweep_rate_bounds,
        sweep_bound_equality,
        sweep_reduction_upper_bound,
        sweep_logdet_concavity,
        sweep_concavity_in_pi,
        sweep_scale_monotonicity,
    ],
    "theorem": [
        sweep_scalar_program_vs_grid,
        sweep_scalar_program_vs_random,
        sweep_profile_under_diversity,
        sweep_theorem_emergence,
    ],
    "gradients": [sweep_matrix_gradients, sweep_network_gradients],
    "metrics": [sweep_acc, sweep_ari, sweep_assignment, sweep_identical_partitions],
}


def run_suite(suite: str, trials: int, seed: int) -> list[PropertyResult]:
    if suite == "all":
        names = ["lemmas", "theorem", "gradients", "metrics"]
    elif suite in SUITES:
        names = [suite]
    else:
        raise KeyError(suite)
    out = []
    for name in names:
        for i, fn in enumerate(SUITES[name]):
            out.append(fn(trials, seed + 1000 * i))
    return out
