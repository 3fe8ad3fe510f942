"""Attribute a prediction to its features and validate against the
exact Shapley oracle.

The kernel explainer queries the model on masked inputs and fits a
weighted linear model over coalition indicators; on small inputs it can
be compared with exact enumeration. Positive weights support the
predicted label, negative weights oppose it.
"""

import numpy as np

from egbench import (
    ExplainerConfig,
    FixtureSpec,
    exact_shapley,
    kernel_explain,
    make_synthetic,
    predict,
    train_fixture,
)

dataset = make_synthetic(seed=3, d=8, n_per_class=50, classes=2, separation=6.0)
model = train_fixture(FixtureSpec(8, 2, (16,)), dataset, epochs=100, lr=0.3, seed=0)

x = dataset.sample(0)
y = predict(model, x)

# d=8 fits the default budget, so the explainer enumerates all 256
# coalitions and should agree with the oracle almost exactly.
explanation = kernel_explain(model, x, y, ExplainerConfig(seed=0))
oracle = exact_shapley(model, x, y)

print(f"explaining sample 0 toward label {y}")
print(f"{'feature':>8} {'kernel':>10} {'exact':>10} {'direction':>10}")
for i in range(x.dim):
    direction = "positive" if explanation.weights[i] > 0 else "negative"
    print(f"{i:>8} {explanation.weights[i]:>10.5f} {oracle.weights[i]:>10.5f} {direction:>10}")

print("\nmax |kernel - exact|:", float(np.abs(explanation.weights - oracle.weights).max()))

# Efficiency: attribution plus the empty-coalition value reconstructs
# the full prediction probability.
total = oracle.weights.sum() + oracle.intercept
print("sum(weights) + intercept:", round(total, 6))

# With a sampling budget below 2^d the result is an estimate, but the
# signs of salient features are stable.
sampled = kernel_explain(model, x, y, ExplainerConfig(num_coalitions=128, seed=1))
salient = np.abs(oracle.weights) > 0.1 * np.abs(oracle.weights).max()
agree = np.sign(sampled.weights[salient]) == np.sign(oracle.weights[salient])
print(f"salient-feature sign agreement at 128 coalitions: {agree.sum()}/{agree.size}")
