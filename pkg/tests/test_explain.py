import numpy as np
import pytest

from egbench import (
    ExplainerConfig,
    ExplanationVector,
    SingularRegressionError,
    exact_shapley,
    kernel_explain,
    shapley_from_mask_values,
)
from egbench.explain import _weighted_least_squares
from egbench.models import Layer, ModelHandle, batch_probabilities
from egbench.rng import make_rng

from conftest import small_net


def linear_two_class(theta):
    theta = np.asarray(theta, dtype=float)
    w = np.vstack([np.zeros_like(theta), theta])
    return ModelHandle((Layer(w, np.zeros(2), "identity"),))


# ------------------------------------------------------------- kernel_explain

def test_constant_model_explains_to_zero(constant_model):
    ev = kernel_explain(constant_model, [0.2, 0.4, 0.6, 0.8], 1, ExplainerConfig())
    assert np.allclose(ev.weights, 0.0, atol=1e-8)


def test_linear_model_signs_match_theta_times_x():
    theta = np.array([1.5, -2.0, 0.7, -0.3])
    x = np.array([0.8, 0.6, 0.5, 0.9])
    ev = kernel_explain(linear_two_class(theta), x, 1, ExplainerConfig())
    assert np.array_equal(np.sign(ev.weights), np.sign(theta * x))


def test_linear_model_weights_near_proportional_in_flat_regime():
    # with tiny logits the class probability is nearly linear, so the
    # attribution of feature i approaches a constant times theta_i * x_i
    theta = 0.05 * np.array([1.0, -2.0, 0.5, 1.5])
    x = np.array([0.9, 0.8, 0.7, 0.6])
    ev = kernel_explain(linear_two_class(theta), x, 1, ExplainerConfig())
    ratios = ev.weights / (theta * x)
    assert ratios.std() / ratios.mean() < 0.02


@pytest.mark.parametrize("seed", range(5))
def test_full_enumeration_matches_exact_shapley(seed):
    m = small_net(4, 3, seed=200 + seed, hidden=(8,))
    x = make_rng("enum-x", seed).uniform(0, 1, 4)
    kernel = kernel_explain(m, x, 1, ExplainerConfig())
    exact = exact_shapley(m, x, 1)
    assert np.abs(kernel.weights - exact.weights).max() < 1e-6
    assert kernel.intercept == pytest.approx(exact.intercept, abs=1e-5)


@pytest.mark.parametrize("d", [6, 10])
def test_sign_agreement_on_salient_features(d):
    for seed in range(3):
        m = small_net(d, 2, seed=300 + seed, hidden=(8,))
        x = make_rng("sign-x", d, seed).uniform(0, 1, d)
        cfg = ExplainerConfig(num_coalitions=2 ** d)
        kernel = kernel_explain(m, x, 0, cfg)
        exact = exact_shapley(m, x, 0)
        salient = np.abs(exact.weights) > 0.05 * np.abs(exact.weights).max()
        assert np.array_equal(np.sign(kernel.weights[salient]),
                              np.sign(exact.weights[salient]))


def test_sampled_mode_is_deterministic_and_sane():
    m = small_net(16, 3, seed=77)
    x = make_rng("sampled-x").uniform(0, 1, 16)
    cfg = ExplainerConfig(num_coalitions=256, seed=5)
    a = kernel_explain(m, x, 2, cfg)
    b = kernel_explain(m, x, 2, cfg)
    assert np.array_equal(a.weights, b.weights)
    c = kernel_explain(m, x, 2, ExplainerConfig(num_coalitions=256, seed=6))
    assert not np.array_equal(a.weights, c.weights)


def test_sampled_mode_approximates_exact_signs():
    # d small enough for the oracle, budget too small for enumeration
    m = small_net(10, 2, seed=42, hidden=(8,))
    x = make_rng("approx-x").uniform(0, 1, 10)
    exact = exact_shapley(m, x, 0)
    cfg = ExplainerConfig(num_coalitions=512, seed=1)
    kernel = kernel_explain(m, x, 0, cfg)
    salient = np.abs(exact.weights) > 0.2 * np.abs(exact.weights).max()
    assert np.array_equal(np.sign(kernel.weights[salient]),
                          np.sign(exact.weights[salient]))


def test_lime_kernel_variant_runs():
    theta = np.array([1.0, -1.0, 0.5])
    x = np.array([0.9, 0.9, 0.9])
    cfg = ExplainerConfig(num_coalitions=64, kernel="lime_exponential", seed=2)
    ev = kernel_explain(linear_two_class(theta), x, 1, cfg)
    assert np.array_equal(np.sign(ev.weights), np.sign(theta * x))


def test_masking_baseline_shifts_reference():
    theta = np.array([2.0, 1.0])
    m = linear_two_class(theta)
    x = np.array([0.5, 0.5])
    at_zero = kernel_explain(m, x, 1, ExplainerConfig(masking_baseline=0.0))
    at_x = kernel_explain(m, x, 1, ExplainerConfig(masking_baseline=0.5))
    # masking with the sample's own values makes every coalition identical
    assert np.abs(at_x.weights).max() < 1e-8
    assert np.abs(at_zero.weights).max() > 1e-3


def test_num_coalitions_floor_enforced():
    m = small_net(6, 2, seed=1)
    with pytest.raises(ValueError, match="d \\+ 2"):
        kernel_explain(m, np.full(6, 0.5), 0, ExplainerConfig(num_coalitions=7))


def test_unknown_kernel_rejected():
    with pytest.raises(ValueError, match="kernel"):
        ExplainerConfig(kernel="gradient")


def test_singular_system_reported():
    # duplicated coalition rows cannot identify d+1 coefficients
    A = np.array([[1.0, 1.0, 0.0]] * 5)
    with pytest.raises(SingularRegressionError, match="num_coalitions"):
        _weighted_least_squares(A, np.ones(5), np.ones(5))


# ------------------------------------------------------------- exact oracle

def test_additive_game_recovers_per_player_terms():
    c = np.array([0.3, -0.2, 0.5])
    d = 3
    vals = np.array([sum(c[i] for i in range(d) if mask >> i & 1)
                     for mask in range(1 << d)])
    phi, empty = shapley_from_mask_values(vals, d)
    assert np.allclose(phi, c, atol=1e-12)
    assert empty == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_exact_oracle_efficiency(seed):
    d = 6
    m = small_net(d, 3, seed=400 + seed)
    x = make_rng("eff-x", seed).uniform(0, 1, d)
    ev = exact_shapley(m, x, 2)
    full = batch_probabilities(m, x[None, :])[0, 2]
    assert abs(ev.weights.sum() + ev.intercept - full) < 1e-9


def test_symmetric_features_get_equal_attribution():
    # identical weight columns and identical values
    w = np.array([[0.0, 0.0, 0.0], [1.2, 1.2, -0.5]])
    m = ModelHandle((Layer(w, np.zeros(2), "identity"),))
    ev = exact_shapley(m, np.array([0.7, 0.7, 0.4]), 1)
    assert ev.weights[0] == pytest.approx(ev.weights[1], abs=1e-12)


def test_exact_oracle_rejects_large_d():
    m = small_net(13, 2, seed=0)
    with pytest.raises(ValueError, match="d <= 12"):
        exact_shapley(m, np.full(13, 0.5), 0)


# ------------------------------------------------------------- types

def test_explanation_vector_top_features_tie_break():
    ev = ExplanationVector([0.5, -0.5, 0.2, 0.5], 0)
    assert ev.top_features(2) == frozenset({0, 1})
    assert ev.top_features(3) == frozenset({0, 1, 3})


def test_explanation_vector_requires_finite():
    with pytest.raises(ValueError, match="finite"):
        ExplanationVector([np.inf, 0.0], 0)
