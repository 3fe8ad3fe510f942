"""Explanation-guided refinement of baseline adversarial examples.

Given a clean input, a baseline adversarial candidate, and signed
attribution weights of the clean input toward its true label, the
booster works in two phases. It first restores coordinates whose weight
is negative (such features point away from the true label, so perturbing
them is non-consequential); when the baseline already evades, each
restoration is kept only if evasion survives it. If the candidate still
fails, it then pushes positive-weight coordinates (the features that
support the true label) one at a time: a bounded perturbation is chosen
by a single loss probe, geometrically reduced while the p-norm budget is
violated, and reverted if the budget cannot be met. A second pass grows
perturbations the baseline already placed on positive features. Scanning
stops the moment the model's prediction flips.

The refined candidate never loses a baseline evasion and never exceeds
the budget the baseline respected; zero-weight coordinates are never
touched.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .attacks import _Queries, _norm_order, lp_norm
from .explain import ExplanationVector
from .models import FeatureVector, ModelHandle, cross_entropy_loss, softmax
from .rng import make_rng

SCAN_ORDERS = ("magnitude", "index")
DELTA_POLICIES = ("probed", "random")


@dataclass(frozen=True)
class BoostConfig:
    """Budget and search parameters; norm and eps are inherited from the
    baseline attack so both stages share one feasible set.

    ``scan_order="magnitude"`` visits features by decreasing |weight|
    (most influential first, fewer queries); ``"index"`` is available for
    ablation. ``delta_policy="probed"`` picks the perturbation direction
    by a one-query loss probe; ``"random"`` picks a feasible direction
    at random.
    """

    norm: float = np.inf
    eps: float = 0.3
    max_iter: int = 20
    delta_scale: float = 0.5
    reduction_factor: float = 0.5
    seed: int = 0
    scan_order: str = "magnitude"
    delta_policy: str = "probed"

    def __post_init__(self):
        object.__setattr__(self, "norm", _norm_order(self.norm))
        if self.eps <= 0:
            raise ValueError("budget eps must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0 < self.reduction_factor < 1):
            raise ValueError("reduction_factor must be in (0, 1)")
        if self.delta_scale <= 0:
            raise ValueError("delta_scale must be > 0")
        if self.scan_order not in SCAN_ORDERS:
            raise ValueError(f"scan_order must be one of {SCAN_ORDERS}")
        if self.delta_policy not in DELTA_POLICIES:
            raise ValueError(f"delta_policy must be one of {DELTA_POLICIES}")


@dataclass(frozen=True)
class BoostRecord:
    """Refined candidate plus bookkeeping.

    ``n_eliminated`` counts coordinates finally restored to their clean
    value; ``n_added`` counts positive-weight coordinates finally
    carrying an added or grown perturbation. Both are recoverable from
    the coordinate diff of (x, x_baseline, x_boost).
    """

    x_boost: FeatureVector
    n_eliminated: int
    n_added: int
    success: bool
    queries: int
    elapsed_seconds: float


def reduce_delta(delta: float, cfg: BoostConfig) -> float:
    """Shrink a proposed perturbation geometrically, preserving its sign."""
    return delta * cfg.reduction_factor


def _choose_delta(loss_fn, values: np.ndarray, lb: float, ub: float, i: int,
                  cfg: BoostConfig, rng: np.random.Generator,
                  base_loss: float) -> float:
    """Pick a bounded perturbation for coordinate ``i`` of ``values``.

    Magnitude is ``delta_scale * (ub - lb)``; among the feasible
    directions the one that raises the loss under a single probe wins
    (ties and the random policy fall back to the seeded stream).
    """
    magnitude = cfg.delta_scale * (ub - lb)
    if magnitude == 0.0:
        return 0.0
    up_ok = values[i] + magnitude <= ub
    down_ok = values[i] - magnitude >= lb
    if not up_ok and not down_ok:
        return 0.0
    if up_ok != down_ok:
        return magnitude if up_ok else -magnitude
    if cfg.delta_policy == "random":
        return magnitude if rng.random() < 0.5 else -magnitude
    probe = values.copy()
    probe[i] = values[i] + magnitude
    probe_loss = loss_fn(probe)
    if probe_loss > base_loss:
        return magnitude
    if probe_loss < base_loss:
        return -magnitude
    return magnitude if rng.random() < 0.5 else -magnitude


def get_delta(model: ModelHandle, x: FeatureVector, y_true: int, i: int,
              cfg: BoostConfig, rng: np.random.Generator | None = None,
              base_loss: float | None = None) -> float:
    """Standalone perturbation proposal for coordinate ``i`` of ``x``;
    the result keeps ``x[i] + delta`` inside the feature bounds. Frozen
    bounds (lb == ub) yield 0."""
    if not (0 <= i < x.dim):
        raise ValueError(f"coordinate {i} out of range for dim {x.dim}")
    if rng is None:
        rng = make_rng("get-delta", cfg.seed, i)
    needs_probe = cfg.delta_policy == "probed"
    if base_loss is None and needs_probe:
        base_loss = cross_entropy_loss(model, x, y_true)
    return _choose_delta(lambda v: cross_entropy_loss(model, x.with_values(v), y_true),
                         x.values, x.lb, x.ub, i, cfg, rng,
                         base_loss if base_loss is not None else 0.0)


def eg_boost(model: ModelHandle, x: FeatureVector, x_baseline: FeatureVector,
             W: ExplanationVector, cfg: BoostConfig) -> BoostRecord:
    """Refine ``x_baseline`` using the attribution signs of ``x``.

    Phase 1 restores perturbed negative-weight coordinates (guarded so a
    baseline evasion is never lost); phase 2, entered only while the
    candidate is still classified correctly, adds budget-respecting
    perturbations on positive-weight coordinates, visiting fresh
    coordinates first and then growing ones the baseline had already
    perturbed.
    """
    if W.dim != x.dim:
        raise ValueError(f"explanation has dim {W.dim}, sample has dim {x.dim}")
    if x_baseline.dim != x.dim:
        raise ValueError(f"baseline has dim {x_baseline.dim}, sample has dim {x.dim}")

    started = time.perf_counter()
    q = _Queries(model)
    p = cfg.norm
    xv = x.values
    y_true = q.predict(xv)

    xb = np.array(x_baseline.values)
    current_label = q.predict(xb)
    baseline_evasive = current_label != y_true

    weights = W.weights
    if cfg.scan_order == "magnitude":
        order = np.argsort(-np.abs(weights), kind="stable")
    else:
        order = np.arange(x.dim)
    negative = [int(i) for i in order if weights[i] < 0]
    positive = [int(i) for i in order if weights[i] > 0]

    # Phase 1: drop non-consequential perturbations. Unconditional when
    # the baseline failed; guarded against losing evasion otherwise.
    for i in negative:
        if xb[i] == xv[i]:
            continue
        previous = xb[i]
        xb[i] = xv[i]
        if baseline_evasive:
            label = q.predict(xb)
            if label == y_true:
                xb[i] = previous
            else:
                current_label = label

    if not baseline_evasive:
        rng = make_rng("boost", cfg.seed)

        def state(v):
            logits = q.logits(v)
            probs = softmax(logits)
            return int(np.argmax(logits)), float(-np.log(max(probs[y_true], 1e-12)))

        def probe_loss(v) -> float:
            return state(v)[1]

        current_label, current_loss = state(xb)

        def addition_scan(indices):
            nonlocal current_label, current_loss
            for i in indices:
                if current_label != y_true:
                    return
                delta = _choose_delta(probe_loss, xb, x.lb, x.ub, i, cfg, rng, current_loss)
                if delta == 0.0:
                    continue
                before = xb[i]
                xb[i] = before + delta
                reductions = 0
                while lp_norm(xb - xv, p) > cfg.eps and reductions < cfg.max_iter:
                    delta = reduce_delta(delta, cfg)
                    xb[i] = before + delta
                    reductions += 1
                if lp_norm(xb - xv, p) > cfg.eps or xb[i] == before:
                    xb[i] = before  # budget not met (or numeric no-op): revert
                else:
                    current_label, current_loss = state(xb)

        addition_scan(positive)
        if current_label == y_true:
            addition_scan([i for i in positive if x_baseline.values[i] != xv[i]])

    final_label = q.predict(xb)
    n_eliminated = int(np.sum((weights < 0) & (x_baseline.values != xv) & (xb == xv)))
    n_added = int(np.sum((weights > 0) & (xb != x_baseline.values)))
    return BoostRecord(
        x_boost=x.with_values(xb),
        n_eliminated=n_eliminated,
        n_added=n_added,
        success=(final_label != y_true),
        queries=q.count,
        elapsed_seconds=time.perf_counter() - started,
    )
