import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcr2 import rates, synth, theory
from mcr2.errors import InvalidInputError, InvalidMembershipError
from mcr2.rates import RateParams
from mcr2.theory import ScalarProgram
from mcr2.verify import grid_max, in_candidate_family

NATS = RateParams(0.5, "nats")


def orthogonal_blocks(rng, d=9, sizes=(3, 4), dims=(2, 3)):
    Q, _ = np.linalg.qr(rng.standard_normal((d, sum(dims))))
    parts, off = [], 0
    for n, r in zip(sizes, dims):
        parts.append(Q[:, off:off + r] @ rng.standard_normal((r, n)))
        off += r
    return parts


def test_lower_bound_tight_for_identical_parts():
    Z = np.random.default_rng(0).standard_normal((4, 5))
    lower, upper = theory.check_rate_bounds([Z, Z], NATS)
    assert lower.equality_expected and abs(lower.slack) < 1e-6
    assert upper.holds


def test_upper_bound_tight_for_orthogonal_blocks():
    lower, upper = theory.check_rate_bounds(orthogonal_blocks(np.random.default_rng(1)), NATS)
    assert upper.equality_expected and abs(upper.slack) < 1e-6
    assert lower.holds


def test_random_part_pairs_satisfy_bounds():
    rng = np.random.default_rng(2)
    for _ in range(100):
        d = int(rng.integers(1, 8))
        parts = [rng.standard_normal((d, int(rng.integers(1, 6)))) for _ in range(2)]
        lower, upper = theory.check_rate_bounds(parts, RateParams(float(rng.uniform(0.1, 2)), "bits"))
        assert lower.slack >= -1e-9 and upper.slack >= -1e-9


def test_lower_bound_equality_flag_matches_covariances():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 4))
    lower, _ = theory.check_rate_bounds([A, np.hstack([A, A])], NATS)
    assert lower.equality_expected and abs(lower.slack) < 1e-6
    lower, _ = theory.check_rate_bounds([A, rng.standard_normal((3, 4))], NATS)
    assert not lower.equality_expected and lower.slack > 1e-6


def test_reduction_upper_bound_examples():
    rng = np.random.default_rng(4)
    parts = orthogonal_blocks(rng)
    Z = np.hstack(parts)
    pi = synth.membership_from_labels(np.repeat([0, 1], [3, 4]), 2)
    rep = theory.check_reduction_upper_bound(Z, pi, NATS)
    assert abs(rep.slack) < 1e-6
    Z1 = rng.standard_normal((4, 3))
    same = theory.check_reduction_upper_bound(np.hstack([Z1, Z1]), synth.membership_from_labels([0] * 3 + [1] * 3, 2), NATS)
    assert same.slack > 1e-3


def test_reduction_upper_bound_needs_hard_membership():
    with pytest.raises(InvalidMembershipError):
        theory.check_reduction_upper_bound(np.eye(2), np.full((2, 2), 0.5), NATS)


def test_random_reduction_upper_bound():
    rng = np.random.default_rng(5)
    for _ in range(100):
        d, m, k = int(rng.integers(1, 8)), int(rng.integers(2, 12)), int(rng.integers(1, 4))
        Z = rng.standard_normal((d, m))
        pi = synth.membership_from_labels(rng.integers(0, k, m), k)
        assert theory.check_reduction_upper_bound(Z, pi, NATS).slack >= -1e-9


def test_concavity_in_pi_examples():
    rng = np.random.default_rng(6)
    Z = rng.standard_normal((3, 6))
    pa = rng.dirichlet(np.ones(2), size=6)
    assert abs(theory.check_concavity_in_pi(Z, pa, pa, 0.3, NATS).slack) < 1e-9
    pb = rng.dirichlet(np.ones(2), size=6)
    slacks = [theory.check_concavity_in_pi(Z, pa, pb, a, NATS).slack for a in (1e-2, 1e-4, 1e-6)]
    assert all(s >= -1e-12 for s in slacks)
    assert slacks[2] < slacks[1] < slacks[0]
    with pytest.raises(InvalidInputError):
        theory.check_concavity_in_pi(Z, pa, pb, 1.0, NATS)


def test_logdet_strict_concavity():
    rng = np.random.default_rng(7)
    for _ in range(50):
        A, B = (M @ M.T + 0.1 * np.eye(4) for M in rng.standard_normal((2, 4, 4)))
        assert theory.logdet_concavity_gap(A, B, float(rng.uniform(0.05, 0.95))) > 0


# ---------------------------------------------------------------------------
# scalar program


def test_program_validation():
    with pytest.raises(InvalidInputError):
        ScalarProgram(5, 4.0, 3, 8.0, 0.5)
    with pytest.raises(InvalidInputError):
        ScalarProgram(2, 10.0, 3, 8.0, 0.5)


def test_single_variable_program():
    sig, obj = theory.optimal_singular_values(ScalarProgram(1, 7.0, 5, 20.0, 0.5))
    assert sig == pytest.approx([np.sqrt(7.0)])


def test_equal_split_under_diversity_for_theorem_instance():
    # d = 16, two classes of 4 samples: eps^4 = 0.25 < (4/8)(16/4)^2
    prog = ScalarProgram(4, 4.0, 16, 8.0, 0.5)
    assert prog.diversity_condition
    sig, _ = theory.optimal_singular_values(prog)
    np.testing.assert_allclose(sig, np.ones(4), rtol=1e-9)


def test_two_variable_program_matches_grid():
    prog = ScalarProgram(2, 5.0, 6, 11.0, 0.8)
    _, obj = theory.optimal_singular_values(prog)
    g = grid_max(prog)
    assert g - 1e-12 <= obj <= g + 1e-6


def test_equal_split_not_guaranteed_by_diversity():
    # precision condition holds, yet five equal directions beat all eight
    prog = ScalarProgram(8, 39.0, 16, 212.0, 0.6447396144807259)
    assert prog.diversity_condition
    sig, obj = theory.optimal_singular_values(prog)
    assert obj > prog.objective(np.full(8, 39.0 / 8)) + 1.0
    assert np.count_nonzero(sig > 1e-9) == 5
    assert in_candidate_family(sig)


def test_turning_point_separates_convex_and_concave():
    prog = ScalarProgram(3, 6.0, 8, 20.0, 0.4)
    xt = prog.x_turn
    h = 1e-4 * xt
    second = lambda x: (prog.f(x + h) - 2 * prog.f(x) + prog.f(x - h)) / h**2
    assert second(0.5 * xt) > 0 > second(2 * xt)


@given(st.integers(1, 4), st.integers(4, 40), st.integers(1, 80), st.floats(0.01, 3.0), st.integers(0, 10_000))
def test_solver_beats_random_feasible_points(r, c, extra, eps_sq, seed):
    d = r + extra % 20
    prog = ScalarProgram(r, float(max(c, r)), d, float(max(c, r) + extra), eps_sq)
    sig, obj = theory.optimal_singular_values(prog)
    assert np.sum(sig**2) == pytest.approx(prog.c, rel=1e-9)
    assert obj == pytest.approx(prog.objective(sig**2), rel=1e-9, abs=1e-9)
    X = np.random.default_rng(seed).dirichlet(np.ones(r), size=500) * prog.c
    assert obj >= np.max(np.sum(prog.f(X), axis=1)) - 1e-9
    assert in_candidate_family(sig)


# ---------------------------------------------------------------------------
# diagnostics


def test_diagnose_hand_built_optimum():
    Z = np.eye(16)[:, :8]
    pi = synth.membership_from_labels(np.repeat([0, 1], 4), 2)
    diag = theory.diagnose_optimum(Z, pi, NATS)
    assert diag.max_interclass_cosine < 1e-9
    for s in diag.per_class_singular_values:
        np.testing.assert_allclose(s, 1.0, atol=1e-12)
    assert diag.per_class_rank_estimate == [4, 4]
    assert diag.diversity_condition_satisfied


def test_interclass_cosine_matches_double_loop():
    rng = np.random.default_rng(8)
    Z = rng.standard_normal((5, 12))
    labels = rng.integers(0, 3, 12)
    best = 0.0
    for i in range(12):
        for j in range(12):
            if labels[i] != labels[j]:
                c = abs(Z[:, i] @ Z[:, j]) / np.linalg.norm(Z[:, i]) / np.linalg.norm(Z[:, j])
                best = max(best, c)
    diag = theory.diagnose_optimum(Z, synth.membership_from_labels(labels, 3), NATS)
    assert diag.max_interclass_cosine == pytest.approx(best, rel=1e-12)


@pytest.mark.parametrize("rank", [1, 2, 5])
def test_rank_estimate_of_noise_free_class(rank):
    rng = np.random.default_rng(rank)
    Z = rng.standard_normal((8, rank)) @ rng.standard_normal((rank, 10))
    diag = theory.diagnose_optimum(Z, np.ones((10, 1)), NATS)
    assert diag.per_class_rank_estimate == [rank]


def test_optimal_rate_reduction_matches_construction():
    Z = np.eye(16)[:, :8]
    pi = synth.membership_from_labels(np.repeat([0, 1], 4), 2)
    dr = rates.rate_reduction(Z, pi, NATS).reduction
    assert theory.optimal_rate_reduction([4, 4], 16, NATS) == pytest.approx(dr, rel=1e-9)
