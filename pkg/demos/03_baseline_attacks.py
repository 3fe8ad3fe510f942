"""Run every baseline attack against one trained fixture.

White-box attacks use analytic gradients; black-box attacks only query
the model (they receive a handle with gradient access disabled). Each
result records the perturbation norm, query count, and whether the
prediction actually flipped.
"""

from egbench import ATTACKS, AttackConfig, FixtureSpec, make_synthetic, predict, train_fixture

dataset = make_synthetic(seed=9, d=10, n_per_class=40, classes=3, separation=6.0)
model = train_fixture(FixtureSpec(10, 3, (24,)), dataset, epochs=200, lr=0.2, seed=2)

# keep the black-box attacks cheap for a demo
config = AttackConfig(
    norm="linf",
    eps=0.3,
    seed=0,
    spsa_samples=64,
    hsja_init_evals=50,
    hsja_max_evals=500,
    hsja_iterations=10,
)

index = next(i for i in range(dataset.n) if predict(model, dataset.sample(i)) == dataset.label(i))
x = dataset.sample(index)
y = dataset.label(index)

print(f"attacking sample {index} (label {y}) under linf, eps=0.3\n")
print(f"{'attack':>6} {'success':>8} {'|delta|':>9} {'coords':>7} {'queries':>8}")
for name, attack in sorted(ATTACKS.items()):
    result = attack(model, x, y, config)
    print(f"{name:>6} {str(result.success):>8} {result.delta_norm:>9.4f} "
          f"{result.perturbed_count:>7} {result.queries:>8}")

print("\nNotes: fgs perturbs every coordinate by exactly eps;")
print("cw minimizes the L2 norm first and is projected into the budget;")
print("hsja walks the decision boundary with label queries only.")
