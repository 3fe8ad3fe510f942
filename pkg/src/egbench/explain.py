"""Signed per-feature attributions for a model prediction.

The explainer treats the model as a black box: it queries the softmax
probability of the target label on masked variants of the input (masked
coordinates are replaced by a constant baseline value) and fits a
weighted linear model over the binary coalition indicators. The fitted
coefficients are the attribution weights; only their signs feed the
booster, positive meaning the feature supports the target label.

An exact enumeration oracle over all coalitions is provided for small
inputs and used to validate the regression path.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .models import ModelHandle, FeatureVector, batch_probabilities
from .rng import make_rng

ENDPOINT_WEIGHT = 1e6
LIME_SIGMA = 0.25
EXACT_MAX_DIM = 12
KERNELS = ("shap_kernel", "lime_exponential")

# Above this design-matrix size the solver switches from SVD-based least
# squares to weighted normal equations (much faster on wide problems).
_LSTSQ_SIZE_LIMIT = 250_000


class SingularRegressionError(ValueError):
    """The coalition regression system is rank-deficient."""


@dataclass(frozen=True)
class ExplanationVector:
    """Per-feature signed weights for one (sample, label) pair."""

    weights: np.ndarray
    target_label: int
    intercept: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError(f"weights must be 1-D, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("explanation weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])

    def top_features(self, l: int) -> frozenset[int]:
        """Indices of the ``l`` largest |weight| features, ties broken
        toward lower index."""
        if l < 1:
            raise ValueError("l must be >= 1")
        order = np.argsort(-np.abs(self.weights), kind="stable")
        return frozenset(int(i) for i in order[:l])


@dataclass(frozen=True)
class ExplainerConfig:
    """Sampling parameters for the coalition regression.

    ``num_coalitions=None`` resolves to min(2^d, 2048) per sample (never
    below d + 2, the minimum for a solvable regression with intercept).
    """

    num_coalitions: int | None = None
    masking_baseline: float = 0.0
    seed: int = 0
    kernel: str = "shap_kernel"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}, expected one of {KERNELS}")
        if not np.isfinite(self.masking_baseline):
            raise ValueError("masking_baseline must be finite")

    def resolve_coalitions(self, d: int) -> int:
        if self.num_coalitions is None:
            return max(d + 2, min(2 ** d, 2048))
        if self.num_coalitions < d + 2:
            raise ValueError(
                f"num_coalitions {self.num_coalitions} < d + 2 = {d + 2}; "
                "regression with intercept is unsolvable"
            )
        return self.num_coalitions


def _shap_kernel_weight(d: int, s: int) -> float:
    # Singular at s = 0 and s = d; callers pin those rows to ENDPOINT_WEIGHT.
    return (d - 1) / (comb(d, s) * s * (d - s))


def _lime_weight(d: int, s: int) -> float:
    masked_fraction = (d - s) / d
    return float(np.exp(-(masked_fraction ** 2) / LIME_SIGMA ** 2))


def _all_coalitions(d: int) -> np.ndarray:
    n = 1 << d
    return ((np.arange(n)[:, None] >> np.arange(d)) & 1).astype(bool)


def _enumerated_design(d: int, kernel: str):
    Z = _all_coalitions(d)
    sizes = Z.sum(axis=1)
    weight_of = _shap_kernel_weight if kernel == "shap_kernel" else _lime_weight
    w = np.array([
        ENDPOINT_WEIGHT if s in (0, d) else weight_of(d, int(s)) for s in sizes
    ])
    return Z, w


def _sampled_design(d: int, l: int, kernel: str, rng: np.random.Generator):
    rows = [np.zeros(d, dtype=bool), np.ones(d, dtype=bool)]
    weights = [ENDPOINT_WEIGHT, ENDPOINT_WEIGHT]
    need = l - 2

    if kernel == "shap_kernel":
        # Coalition sizes are drawn from the kernel distribution itself
        # (p(s) proportional to 1/(s(d-s))), which makes every sampled
        # row carry unit regression weight; rows are drawn in
        # complementary pairs to reduce estimator variance.
        support = np.arange(1, d)
        p = 1.0 / (support * (d - support))
        p /= p.sum()
        sizes = rng.choice(support, size=(need + 1) // 2, p=p)
        for s in sizes:
            z = np.zeros(d, dtype=bool)
            z[rng.permutation(d)[:int(s)]] = True
            rows.append(z)
            weights.append(1.0)
            if len(rows) < l:
                rows.append(~z)
                weights.append(1.0)
    else:
        Z = rng.integers(0, 2, size=(need, d)).astype(bool)
        for z in Z:
            rows.append(z)
            weights.append(_lime_weight(d, int(z.sum())))

    return np.array(rows[:l]), np.array(weights[:l])


def _weighted_least_squares(A: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    if A.shape[0] * A.shape[1] <= _LSTSQ_SIZE_LIMIT:
        sw = np.sqrt(w)
        sol, _, rank, _ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
        if rank < A.shape[1]:
            raise SingularRegressionError(
                f"coalition regression is singular (rank {rank} < {A.shape[1]}); "
                "raise num_coalitions"
            )
        return sol
    Aw = A * w[:, None]
    G = A.T @ Aw
    try:
        np.linalg.cholesky(G)  # positive-definiteness check
        sol = np.linalg.solve(G, Aw.T @ b)
    except np.linalg.LinAlgError as exc:
        raise SingularRegressionError(
            f"coalition regression is singular ({exc}); raise num_coalitions"
        ) from exc
    return sol


def _masked_values(model: ModelHandle, values: np.ndarray, y: int,
                   Z: np.ndarray, baseline: float) -> np.ndarray:
    masked = np.where(Z, values, baseline)
    return batch_probabilities(model, masked)[:, y]


def _validated(model: ModelHandle, x, y_true: int) -> tuple[np.ndarray, int]:
    values = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=float)
    if values.shape != (model.input_dim,):
        raise ValueError(f"input has shape {values.shape}, model expects ({model.input_dim},)")
    y = int(y_true)
    if not (0 <= y < model.num_classes):
        raise ValueError(f"label {y_true!r} out of range [0, {model.num_classes})")
    return values, y


def kernel_explain(model: ModelHandle, x, y_true: int,
                   cfg: ExplainerConfig = ExplainerConfig()) -> ExplanationVector:
    """Attribution weights via kernel-weighted coalition regression.

    Enumerates all coalitions when the budget allows (2^d <= l),
    otherwise samples them; the full and empty coalitions are always
    present with a large finite weight. Deterministic given ``cfg.seed``.
    """
    values, y = _validated(model, x, y_true)
    d = values.shape[0]
    l = cfg.resolve_coalitions(d)

    if d < 31 and (1 << d) <= l:
        Z, w = _enumerated_design(d, cfg.kernel)
    else:
        rng = make_rng("kernel-explain", cfg.seed, cfg.kernel, l)
        Z, w = _sampled_design(d, l, cfg.kernel, rng)

    vals = _masked_values(model, values, y, Z, cfg.masking_baseline)
    A = np.hstack([np.ones((Z.shape[0], 1)), Z.astype(float)])
    sol = _weighted_least_squares(A, vals, w)
    return ExplanationVector(sol[1:], y, float(sol[0]))


def shapley_from_mask_values(vals: np.ndarray, d: int) -> tuple[np.ndarray, float]:
    """Exact Shapley attribution of an arbitrary coalition game.

    ``vals[mask]`` is the game value of the coalition whose members are
    the set bits of ``mask``. Returns (per-player values, empty-coalition
    value); their sum equals the full-coalition value by construction.
    """
    vals = np.asarray(vals, dtype=float)
    if vals.shape != (1 << d,):
        raise ValueError(f"need 2^{d} coalition values, got shape {vals.shape}")
    sizes = _all_coalitions(d).sum(axis=1)
    coef = np.array([factorial(s) * factorial(d - 1 - s) / factorial(d) for s in range(d)])
    masks = np.arange(1 << d)
    phi = np.empty(d)
    for i in range(d):
        without = masks[(masks >> i) & 1 == 0]
        phi[i] = np.sum(coef[sizes[without]] * (vals[without | (1 << i)] - vals[without]))
    return phi, float(vals[0])


def exact_shapley(model: ModelHandle, x, y_true: int,
                  masking_baseline: float = 0.0) -> ExplanationVector:
    """Exact Shapley values of the masking game by full enumeration.

    The game value of a coalition S is the model's probability of
    ``y_true`` with features outside S masked to the baseline. Cost is
    2^d model queries, so d is capped at 12. The intercept is the empty
    coalition's value, making efficiency read
    ``sum(weights) + intercept == v(full)``.
    """
    values, y = _validated(model, x, y_true)
    d = values.shape[0]
    if d > EXACT_MAX_DIM:
        raise ValueError(f"exact enumeration needs d <= {EXACT_MAX_DIM}, got {d}")

    Z = _all_coalitions(d)
    vals = _masked_values(model, values, y, Z, masking_baseline)
    phi, empty_value = shapley_from_mask_values(vals, d)
    return ExplanationVector(phi, y, empty_value)
