"""Explanation-guided boosting of ML evasion attacks.

A robustness-evaluation toolkit: craft baseline adversarial examples
with standard white-box and black-box attacks, refine them with signed
feature-attribution weights, and report evasion-rate, perturbation-change,
and stability metrics.
"""

from .attacks import (
    ATTACKS,
    AttackConfig,
    AttackResult,
    bim,
    boundary_bisect,
    cw,
    fgs,
    hsja,
    lp_norm,
    mim,
    pgd,
    project_and_clip,
    spsa,
)
from .boost import BoostConfig, BoostRecord, eg_boost, get_delta, reduce_delta
from .data import Dataset, load_csv, load_idx, make_synthetic
from .explain import (
    ExplainerConfig,
    ExplanationVector,
    SingularRegressionError,
    exact_shapley,
    kernel_explain,
    shapley_from_mask_values,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    load_config,
    parse_config,
    run_experiment,
)
from .metrics import (
    RunTrace,
    avg_perturbation_change,
    dice,
    evasion_rate,
    k_stability,
    kl_stability,
)
from .models import (
    FeatureVector,
    FixtureSpec,
    Layer,
    ModelHandle,
    TrainingDiverged,
    cross_entropy_loss,
    evaluate_accuracy,
    forward_logits,
    init_model,
    input_gradient,
    load_weights,
    predict,
    predict_batch,
    save_weights,
    train_fixture,
)

__version__ = "0.1.0"
