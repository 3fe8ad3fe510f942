"""Baseline evasion attacks under an L2/Linf budget with box constraints.

White-box attacks (fgs, bim, pgd, cw) consume analytic input gradients;
black-box attacks (mim in estimated mode, spsa, hsja) only query model
outputs and run against a gradient-disabled model handle, so a capability
leak is a hard error. Every attack is untargeted, deterministic given its
config seed, and returns a result whose success flag is re-checked
against the model and whose perturbation respects both the p-norm budget
and the feature bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import (
    FeatureVector,
    ModelHandle,
    batch_cross_entropy,
    batch_logits,
    input_gradient,
    logits_vjp,
    predict_batch,
    softmax,
)
from .rng import make_rng

SPSA_SIGMA = 0.01  # finite-difference radius of the gradient estimator

_BIM_ITERS = 10
_PGD_ITERS = 100
_PGD_STEP = 0.5
_MIM_STEP = 0.06
_MIM_ITERS = 10
_SPSA_ITERS = 10
_CW_ITERS = 200
_CW_LR = 0.01


def _norm_order(p) -> float:
    if p in (2, 2.0, "2", "l2", "L2"):
        return 2.0
    if p in (np.inf, float("inf"), "inf", "linf", "Linf", "LINF"):
        return np.inf
    raise ValueError(f"unsupported norm {p!r}: use 2 or inf")


def norm_name(p) -> str:
    return "linf" if _norm_order(p) == np.inf else "l2"


def lp_norm(v, p) -> float:
    v = np.asarray(v, dtype=float)
    if _norm_order(p) == np.inf:
        return float(np.max(np.abs(v)))
    return float(np.linalg.norm(v))


@dataclass(frozen=True)
class AttackConfig:
    """Shared hyper-parameters; fields not used by an attack are ignored.

    ``step_size`` and ``iterations`` default per attack when left None
    (bim: 0.5/10, pgd: 0.5/100, mim: 0.06/10, spsa uses ``spsa_lr``/10,
    cw: 0.01/200). ``bim_clip`` is the per-iterate clip radius and
    defaults to ``eps``.
    """

    norm: float = np.inf
    eps: float = 0.3
    step_size: float | None = None
    iterations: int | None = None
    bim_clip: float | None = None
    mim_decay: float = 1.0
    mim_gradient_mode: str = "analytic"
    cw_constant: float = 10.0
    spsa_samples: int = 128
    spsa_lr: float = 0.01
    hsja_init_evals: int = 100
    hsja_max_evals: int = 10000
    hsja_iterations: int = 64
    hsja_gamma: float = 1.0
    pgd_restarts: int = 1
    pgd_rand_init: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "norm", _norm_order(self.norm))
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.bim_clip is not None and self.bim_clip < 0:
            raise ValueError("bim_clip must be >= 0")
        if self.mim_decay < 0:
            raise ValueError("mim_decay must be >= 0")
        if self.mim_gradient_mode not in ("analytic", "estimated"):
            raise ValueError(f"unknown mim_gradient_mode {self.mim_gradient_mode!r}")
        if self.cw_constant < 0:
            raise ValueError("cw_constant must be >= 0")
        if self.spsa_samples < 1 or self.spsa_lr <= 0:
            raise ValueError("spsa_samples must be >= 1 and spsa_lr > 0")
        if min(self.hsja_init_evals, self.hsja_max_evals, self.hsja_iterations) < 1:
            raise ValueError("hsja_* counts must be >= 1")
        if self.hsja_gamma <= 0:
            raise ValueError("hsja_gamma must be > 0")
        if self.pgd_restarts < 1 or self.pgd_rand_init < 0:
            raise ValueError("pgd_restarts must be >= 1 and pgd_rand_init >= 0")


@dataclass(frozen=True)
class AttackResult:
    """Outcome of one attack on one sample.

    ``perturbed_count`` is the number of coordinates where the
    adversarial candidate differs from the input; ``queries`` counts
    model evaluations (one per sample forward or gradient).
    """

    x_adv: FeatureVector
    delta_norm: float
    success: bool
    queries: int
    perturbed_count: int
    note: str | None = None


def project_and_clip(x, candidate, p, eps, lb, ub) -> np.ndarray:
    """Pull ``candidate`` into the p-ball of radius ``eps`` around ``x``
    intersected with the [lb, ub] box.

    For p=inf this is an exact coordinatewise clamp. For p=2 the radial
    rescale and the box clamp are interleaved twice; since ``x`` lies in
    the box, clamping never increases the distance to ``x``, so the
    result satisfies both constraints.
    """
    p = _norm_order(p)
    xv = np.asarray(x, dtype=float)
    z = np.array(candidate, dtype=float)
    if p == np.inf:
        if np.isfinite(eps):
            z = np.clip(z, xv - eps, xv + eps)
        return np.clip(z, lb, ub)
    for _ in range(2):
        delta = z - xv
        n = np.linalg.norm(delta)
        if np.isfinite(eps) and n > eps > 0:
            z = xv + delta * (eps / n)
        elif np.isfinite(eps) and eps == 0:
            z = xv.copy()
        z = np.clip(z, lb, ub)
    return z


def _signed_step(g, size, p) -> np.ndarray:
    """sign(g) scaled to Linf-length (p=inf) or L2-length (p=2) ``size``;
    sign(0) is 0, so zero gradients produce zero steps."""
    s = np.sign(np.asarray(g, dtype=float))
    if _norm_order(p) == np.inf:
        return size * s
    n = np.linalg.norm(s)
    return (size / n) * s if n > 0 else s


class _Queries:
    """Per-invocation model access wrapper that counts evaluations."""

    __slots__ = ("model", "count")

    def __init__(self, model: ModelHandle):
        self.model = model
        self.count = 0

    def logits(self, v) -> np.ndarray:
        self.count += 1
        return batch_logits(self.model, np.asarray(v, float)[None, :])[0]

    def predict(self, v) -> int:
        return int(np.argmax(self.logits(v)))

    def loss(self, v, y) -> float:
        p = softmax(self.logits(v))
        return float(-np.log(max(p[y], 1e-12)))

    def batch_losses(self, V, y) -> np.ndarray:
        self.count += len(V)
        return batch_cross_entropy(self.model, V, y)

    def batch_predictions(self, V) -> np.ndarray:
        self.count += len(V)
        return predict_batch(self.model, V)

    def gradient(self, v, y) -> np.ndarray:
        self.count += 1
        return input_gradient(self.model, v, y)

    def vjp(self, v, cotangent) -> np.ndarray:
        self.count += 1
        return logits_vjp(self.model, v, cotangent)


def _check_inputs(model: ModelHandle, x: FeatureVector, y_true: int):
    if not isinstance(x, FeatureVector):
        raise TypeError("x must be a FeatureVector")
    if x.dim != model.input_dim:
        raise ValueError(f"sample dim {x.dim} != model input_dim {model.input_dim}")
    if not (0 <= int(y_true) < model.num_classes):
        raise ValueError(f"label {y_true!r} out of range [0, {model.num_classes})")


def _finalize(q: _Queries, x: FeatureVector, adv_values, y_true: int, p,
              note: str | None = None, known_label: int | None = None) -> AttackResult:
    adv = np.asarray(adv_values, dtype=float)
    label = q.predict(adv) if known_label is None else known_label
    return AttackResult(
        x_adv=x.with_values(adv),
        delta_norm=lp_norm(adv - x.values, p),
        success=(label != int(y_true)),
        queries=q.count,
        perturbed_count=int(np.sum(adv != x.values)),
        note=note,
    )


def fgs(model: ModelHandle, x: FeatureVector, y_true: int, cfg: AttackConfig) -> AttackResult:
    """One signed gradient-ascent step of size eps, clipped feasible.

    For p=2 the signed step is rescaled to L2-length eps before clipping.
    A zero gradient leaves the input untouched.
    """
    _check_inputs(model, x, y_true)
    q = _Queries(model)
    g = q.gradient(x.values, y_true)
    adv = project_and_clip(x.values, x.values + _signed_step(g, cfg.eps, cfg.norm),
                           cfg.norm, cfg.eps, x.lb, x.ub)
    return _finalize(q, x, adv, y_true, cfg.norm)


def _iterated_signed_ascent(q: _Queries, x: FeatureVector, y_true: int, start,
                            p, radius, step_size, iterations):
    """Shared bim/pgd driver. Returns (iterate, last label or None);
    the label is known whenever a prediction was made after the last step."""
    cur = np.array(start, dtype=float)
    label = None
    for t in range(iterations):
        g = q.gradient(cur, y_true)
        cur = project_and_clip(x.values, cur + _signed_step(g, step_size, p),
                               p, radius, x.lb, x.ub)
        if t + 1 < iterations:
            label = q.predict(cur)
            if label != y_true:
                return cur, label
            label = None
    return cur, label


def bim(model: ModelHandle, x: FeatureVector, y_true: int, cfg: AttackConfig) -> AttackResult:
    """Iterated signed ascent from the input itself, clipped after every
    step into the bim_clip-ball around the input (never wider than eps)
    and the feature box; stops as soon as an iterate evades."""
    _check_inputs(model, x, y_true)
    q = _Queries(model)
    radius = min(cfg.bim_clip if cfg.bim_clip is not None else cfg.eps, cfg.eps)
    step = cfg.step_size if cfg.step_size is not None else _PGD_STEP
    iters = cfg.iterations if cfg.iterations is not None else _BIM_ITERS
    adv, label = _iterated_signed_ascent(q, x, y_true, x.values, cfg.norm, radius, step, iters)
    return _finalize(q, x, adv, y_true, cfg.norm, known_label=label)


def _random_ball_point(rng: np.random.Generator, d: int, p, radius: float) -> np.ndarray:
    if _norm_order(p) == np.inf:
        return rng.uniform(-radius, radius, d)
    direction = rng.standard_normal(d)
    n = np.linalg.norm(direction)
    if n == 0:
        return np.zeros(d)
    return direction / n * radius * rng.uniform() ** (1.0 / d)


def pgd(model: ModelHandle, x: FeatureVector, y_true: int, cfg: AttackConfig) -> AttackResult:
    """Signed ascent from a uniformly random feasible start, repeated for
    ``pgd_restarts`` restarts; returns the first evading run, else the
    run with the highest final loss. ``pgd_rand_init=0`` reduces exactly
    to bim."""
    _check_inputs(model, x, y_true)
    q = _Queries(model)
    p, eps = cfg.norm, cfg.eps
    step = cfg.step_size if cfg.step_size is not None else _PGD_STEP
    iters = cfg.iterations if cfg.iterations is not None else _PGD_ITERS
    rng = make_rng("pgd", cfg.seed)

    best, best_loss = None, -np.inf
    for _ in range(cfg.pgd_restarts):
        if cfg.pgd_rand_init > 0:
            noise = _random_ball_point(rng, x.dim, p, eps * cfg.pgd_rand_init)
            start = project_and_clip(x.values, x.values + noise, p, eps, x.lb, x.ub)
        else:
            start = x.values
        adv, label = _iterated_signed_ascent(q, x, y_true, start, p, eps, step, iters)
        if label is not None and label != y_true:
            return _finalize(q, x, adv, y_true, p, known_label=label)
        if cfg.pgd_restarts == 1:
            return _finalize(q, x, adv, y_true, p, known_label=label)
        loss = q.loss(adv, y_true)
        if loss > best_loss:
            best, best_loss = adv, loss
    return _finalize(q, x, best, y_true, p)


def cw(model: ModelHandle, x: FeatureVector, y_true: int, cfg: AttackConfig) -> AttackResult:
    """Penalty-form margin attack: minimize ||delta||_2^2 + c * max(g, 0)
    with g the logit margin of the true class over the runner-up, so
    g < 0 exactly when the candidate evades. Iterates are box-clipped;
    the returned delta is additionally projected into the eps-ball so the
    budget matches the other attacks (reported as ``cw_projected``)."""
    _check_inputs(model, x, y_true)
    q = _Queries(model)
    p, eps, c = cfg.norm, cfg.eps, cfg.cw_constant
    lr = cfg.step_size if cfg.step_size is not None else _CW_LR
    iters = cfg.iterations if cfg.iterations is not None else _CW_ITERS

    logits = q.logits(x.values)
    if int(np.argmax(logits)) != y_true:
        # objective is minimized at the origin
        return _finalize(q, x, x.values, y_true, p)

    d = x.dim
    delta = np.zeros(d)
    m = np.zeros(d)
    v = np.zeros(d)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    best, best_l2 = None, np.inf

    for t in range(1, iters + 1):
        z = x.values + delta
        logits = q.logits(z)
        others = np.delete(logits, y_true)
        runner_up = int(np.argmax(others))
        runner_up += runner_up >= y_true
        margin = float(logits[y_true] - logits[runner_up])

        if margin < 0:
            l2 = float(np.linalg.norm(delta))
            if l2 < best_l2:
                best, best_l2 = delta.copy(), l2

        grad = 2.0 * delta
        if margin > 0 and c > 0:
            cot = np.zeros(model.num_classes)
            cot[y_true] = 1.0
            cot[runner_up] = -1.0
            grad = grad + c * q.vjp(z, cot)

        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        delta = delta - lr * m_hat / (np.sqrt(v_hat) + adam_eps)
        delta = project_and_clip(x.values, x.values + delta, p, np.inf, x.lb, x.ub) - x.values

    note = None
    if best is None:
        best = delta
        note = "max_iterations reached without a feasible evasion"
    adv = project_and_clip(x.values, x.values + best, p, eps, x.lb, x.ub)
    return _finalize(q, x, adv, y_true, p, note=note)


def _spsa_gradient(q: _Queries, v: np.ndarray, y: int, samples: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Simultaneous-perturbation estimate of the loss gradient: average of
    central differences along Rademacher directions."""
    R = rng.integers(0, 2, size=(samples, v.shape[0])) * 2.0 - 1.0
    plus = q.batch_losses(v + SPSA_SIGMA * R, y)
    minus = q.batch_losses(v - SPSA_SIGMA * R, y)
    return np.mean(((plus - minus) / (2.0 * SPSA_SIGMA))[:, None] * R, axis=0)


def mim(model: ModelHandle, x: FeatureVector, y_true: int, cfg: AttackConfig) -> AttackResult:
    """Momentum-accumulated signed ascent: the L1-normalized gradient is
    folded into a decaying velocity whose sign drives each step.

    ``mim_gradient_mode`` selects analytic gradients or the black-box
    simultaneous-perturbation estimate; a zero-L1 gradient contributes
    nothing to the velocity. With decay 0 and one iteration this is
    exactly fgs at the same step size.
    """
    _check_inputs(model, x, y_true)
    estimated = cfg.mim_gradient_mode == "estimated"
    q = _Queries(model.black_box() if estimated else model)
    rng = make_rng("mim", cfg.seed) if estimated else None
    p, eps = cfg.norm, cfg.eps
    step = cfg.step_size if cfg.step_size is not None else _MIM_STEP
    iters = cfg.iterations if cfg.iterations is not None else _MIM_ITERS

    velocity = np.zeros(x.dim)
    cur = x.values
    label = None
    for t in range(iters):
        g = (_spsa_gradient(q, cur, y_true, cfg.spsa_samples, rng) if estimated
             else q.gradient(cur, y_true))
        l1 = float(np.abs(g).sum())
        velocity = cfg.mim_decay * velocity + (g / l1 if l1 > 0 else 0.0)
        cur = project_and_clip(x.values, cur + _signed_step(velocity, step, p),
                               p, eps, x.lb, x.ub)
        if t + 1 < iters:
            label = q.predict(cur)
            if label != y_true:
                return _finalize(q, x, cur, y_true, p, known_label=label)
            label = None
    return _finalize(q, x, cur, y_true, p, known_label=label)


def spsa(model: ModelHandle, x: FeatureVector, y_true: int, cfg: AttackConfig) -> AttackResult:
    """Gradient-free ascent: each iteration estimates the loss gradient by
    simultaneous perturbation (loss queries only) and takes a projected
    signed step of size ``spsa_lr``."""
    _check_inputs(model, x, y_true)
    q = _Queries(model.black_box())
    rng = make_rng("spsa", cfg.seed)
    p, eps = cfg.norm, cfg.eps
    iters = cfg.iterations if cfg.iterations is not None else _SPSA_ITERS

    cur = x.values
    label = None
    for t in range(iters):
        g = _spsa_gradient(q, cur, y_true, cfg.spsa_samples, rng)
        cur = project_and_clip(x.values, cur + _signed_step(g, cfg.spsa_lr, p),
                               p, eps, x.lb, x.ub)
        if t + 1 < iters:
            label = q.predict(cur)
            if label != y_true:
                return _finalize(q, x, cur, y_true, p, known_label=label)
            label = None
    return _finalize(q, x, cur, y_true, p, known_label=label)


def boundary_bisect(is_adversarial: Callable[[np.ndarray], bool], x_values,
                    adv_values, tol: float) -> np.ndarray:
    """Binary-search the segment from ``x_values`` (not adversarial) to
    ``adv_values`` (adversarial) for the decision boundary; returns the
    adversarial endpoint of the final bracket. ``tol`` bounds the
    interpolation parameter, so the distance to the boundary is at most
    ``tol * ||adv - x||``."""
    xv = np.asarray(x_values, dtype=float)
    av = np.asarray(adv_values, dtype=float)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if is_adversarial((1 - mid) * xv + mid * av):
            hi = mid
        else:
            lo = mid
    return (1 - hi) * xv + hi * av


def hsja(model: ModelHandle, x: FeatureVector, y_true: int, cfg: AttackConfig) -> AttackResult:
    """Decision-only boundary walk: find any adversarial point by random
    box sampling, bisect it onto the decision boundary, then alternate
    Monte-Carlo direction estimation (Rademacher probes of the decision
    function), a geometric-progression step, and re-bisection. The final
    point is projected into the eps-ball, which may sacrifice success."""
    _check_inputs(model, x, y_true)
    q = _Queries(model.black_box())
    p, eps = cfg.norm, cfg.eps
    d = x.dim

    label = q.predict(x.values)
    if label != y_true:
        return _finalize(q, x, x.values, y_true, p, known_label=label)

    rng = make_rng("hsja", cfg.seed)
    adv = None
    for _ in range(cfg.hsja_init_evals):
        candidate = rng.uniform(x.lb, x.ub, d)
        if q.predict(candidate) != y_true:
            adv = candidate
            break
    if adv is None:
        return _finalize(q, x, x.values, y_true, p,
                         note="no adversarial initialization found", known_label=label)

    def is_adv(v) -> bool:
        return q.predict(v) != y_true

    theta = cfg.hsja_gamma / d ** 1.5 if p == 2.0 else cfg.hsja_gamma / d ** 2
    tol = max(theta, 1e-12)
    adv = boundary_bisect(is_adv, x.values, adv, tol)

    for t in range(1, cfg.hsja_iterations + 1):
        dist = lp_norm(adv - x.values, p)
        if dist == 0:
            break
        n_probes = int(min(cfg.hsja_init_evals * np.sqrt(t), cfg.hsja_max_evals))
        probe_radius = (np.sqrt(d) * theta * dist) if p == 2.0 else (d * theta * dist)
        U = rng.integers(0, 2, size=(n_probes, d)) * 2.0 - 1.0
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        probes = np.clip(adv + probe_radius * U, x.lb, x.ub)
        signs = np.where(q.batch_predictions(probes) != y_true, 1.0, -1.0)

        if np.all(signs == 1.0):
            direction = U.mean(axis=0)
        elif np.all(signs == -1.0):
            direction = -U.mean(axis=0)
        else:
            direction = ((signs - signs.mean())[:, None] * U).mean(axis=0)
        n = np.linalg.norm(direction)
        if n == 0:
            continue
        direction = np.sign(direction) if p == np.inf else direction / n

        step = dist / np.sqrt(t)
        moved = None
        while step > 1e-12:
            candidate = np.clip(adv + step * direction, x.lb, x.ub)
            if is_adv(candidate):
                moved = candidate
                break
            step /= 2.0
        if moved is None:
            continue
        adv = boundary_bisect(is_adv, x.values, moved, tol)

    final = project_and_clip(x.values, adv, p, eps, x.lb, x.ub)
    return _finalize(q, x, final, y_true, p)


ATTACKS: dict[str, Callable[..., AttackResult]] = {
    "fgs": fgs,
    "bim": bim,
    "pgd": pgd,
    "cw": cw,
    "mim": mim,
    "spsa": spsa,
    "hsja": hsja,
}

BLACK_BOX_ATTACKS = ("mim", "spsa", "hsja")
