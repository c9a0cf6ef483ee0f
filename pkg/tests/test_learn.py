import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcr2 import learn, rates, synth, theory
from mcr2.errors import DegenerateFeatureError, InvalidInputError
from mcr2.learn import OptimizerConfig
from mcr2.rates import RateParams
from mcr2.verify import network_gradient_error

NATS = RateParams(0.5, "nats")


def two_class_pi(n=4):
    return synth.membership_from_labels(np.repeat([0, 1], n), 2)


def test_optimum_is_a_fixed_point():
    Z0 = np.eye(16)[:, :8]
    Z, trace = learn.optimize_representation(Z0, two_class_pi(), NATS, OptimizerConfig(step_size=0.5))
    assert np.max(np.abs(Z - Z0)) < 1e-6
    obj = trace.column("objective")
    assert obj[-1] - obj[0] < 1e-8


def test_single_class_stops_immediately():
    Z0 = synth.random_sphere(5, 6, seed=0)
    Z, trace = learn.optimize_representation(Z0, np.ones((6, 1)), NATS)
    assert len(trace) <= 2
    assert np.allclose(trace.column("DeltaR"), 0.0, atol=1e-12)


def test_emergence_on_small_instance():
    Z0 = synth.random_sphere(16, 8, seed=3)
    pi = two_class_pi()
    Z, trace = learn.optimize_representation(Z0, pi, NATS, OptimizerConfig(step_size=0.5, tol=1e-10))
    diag = theory.diagnose_optimum(Z, pi, NATS)
    sig, _ = theory.optimal_singular_values(theory.ScalarProgram(4, 4.0, 16, 8.0, 0.5))
    assert diag.max_interclass_cosine < 1e-2
    for s in diag.per_class_singular_values:
        np.testing.assert_allclose(s, sig, rtol=1e-2)
    best = theory.optimal_rate_reduction([4, 4], 16, NATS)
    assert abs(trace.records[-1].DeltaR - best) / best < 5e-3


@pytest.mark.parametrize("mode", ["unit_sphere", "per_class_frobenius"])
@given(seed=st.integers(0, 10_000), iters=st.integers(0, 6))
@settings(max_examples=15)
def test_ascent_and_constraints(mode, seed, iters):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, 9)
    pi = synth.membership_from_labels(labels, 3)
    Z0 = rng.standard_normal((5, 9))
    Z, trace = learn.optimize_representation(Z0, pi, NATS, OptimizerConfig(step_size=1.0, max_iters=iters, normalization=mode))
    assert np.all(np.diff(trace.column("objective")) >= -1e-12)
    if mode == "unit_sphere":
        np.testing.assert_allclose(np.linalg.norm(Z, axis=0), 1.0, atol=1e-9)
    else:
        for j in np.unique(labels):
            assert np.sum(Z[:, labels == j] ** 2) == pytest.approx(np.sum(labels == j), abs=1e-6)


def test_zero_iterations_echo_input():
    Z0 = synth.random_sphere(4, 6, seed=1)
    Z, trace = learn.optimize_representation(Z0, two_class_pi(3), NATS, OptimizerConfig(max_iters=0))
    np.testing.assert_array_equal(Z, Z0)
    assert len(trace) == 1


def test_config_validation():
    with pytest.raises(InvalidInputError):
        OptimizerConfig(step_size=-1.0)
    with pytest.raises(InvalidInputError):
        OptimizerConfig(normalization="ball")
    with pytest.raises(InvalidInputError):
        OptimizerConfig(gamma1=0.0)


def test_trace_csv_layout():
    trace = learn.OptTrace()
    trace.append(0, 1.0, 0.5, 0.5, 0.1, 0.5)
    assert trace.to_csv() == "iter,R,Rc,DeltaR,grad_norm\n0,1,0.5,0.5,0.10000000000000001\n"


# ---------------------------------------------------------------------------
# feature map


def test_init_is_deterministic_and_scaled():
    a = learn.init_feature_map([64, 128, 8], seed=4)
    b = learn.init_feature_map([64, 128, 8], seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert np.std(a.weights[0]) == pytest.approx(1 / np.sqrt(64), rel=0.1)
    assert np.std(a.weights[1]) == pytest.approx(1 / np.sqrt(128), rel=0.1)
    assert all(np.all(bias == 0) for bias in a.biases)
    with pytest.raises(InvalidInputError):
        learn.init_feature_map([3, 0, 2])


def test_identity_layer_is_identity_on_unit_columns():
    params = learn.FeatureMapParams([4, 4], [np.eye(4)], [np.zeros(4)])
    X = synth.random_sphere(4, 5, seed=2)
    np.testing.assert_allclose(learn.feature_map_forward(params, X), X, atol=1e-15)


def test_outputs_unit_norm_and_zero_norm_rejected():
    params = learn.init_feature_map([3, 6, 4], seed=0)
    X = np.random.default_rng(0).standard_normal((3, 10))
    np.testing.assert_allclose(np.linalg.norm(learn.feature_map_forward(params, X), axis=0), 1.0, atol=1e-9)
    dead = learn.FeatureMapParams([2, 2], [np.zeros((2, 2))], [np.zeros(2)])
    with pytest.raises(DegenerateFeatureError):
        learn.feature_map_forward(dead, np.ones((2, 3)))


def test_zero_learning_rate_keeps_params():
    params = learn.init_feature_map([3, 5, 4], seed=1)
    X = np.random.default_rng(1).standard_normal((3, 8))
    out, trace = learn.train_feature_map(params, X, two_class_pi(), NATS, OptimizerConfig(step_size=0.0, max_iters=5))
    assert np.array_equal(out.flat(), params.flat())
    assert np.ptp(trace.column("DeltaR")) == 0.0


@pytest.mark.parametrize("use_ctrl,gammas", [(False, (1.0, 1.0)), (True, (2.0, 0.5))])
def test_parameter_gradient_matches_finite_differences(use_ctrl, gammas):
    assert network_gradient_error([3, 5, 4], 8, seed=0, use_ctrl=use_ctrl, gammas=gammas) < 1e-4


def test_ctrl_with_unit_gammas_reproduces_plain_training():
    X, y = synth.two_circles(20, seed=1)
    pi = synth.membership_from_labels(y, 2)
    net = learn.init_feature_map([3, 8, 4], seed=1)
    plain = learn.train_feature_map(net, X, pi, NATS, OptimizerConfig(step_size=0.1, max_iters=30))
    ctrl = learn.train_feature_map(net, X, pi, NATS, OptimizerConfig(step_size=0.1, max_iters=30, use_ctrl=True))
    assert plain[1].to_csv() == ctrl[1].to_csv()
    assert np.array_equal(plain[0].flat(), ctrl[0].flat())


def test_training_ascends():
    X, y = synth.two_circles(30, seed=2)
    _, trace = learn.train_feature_map(learn.init_feature_map([3, 8, 4], seed=2), X,
                                       synth.membership_from_labels(y, 2), NATS,
                                       OptimizerConfig(step_size=0.1, max_iters=50))
    obj = trace.column("objective")
    assert np.all(np.diff(obj) >= -1e-12) and obj[-1] > obj[0]
