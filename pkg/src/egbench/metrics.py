"""Aggregate evaluation metrics.

Evasion rate, average perturbation change (net added minus eliminated
perturbations relative to the baseline's count), and two run-to-run
stability scores: prediction agreement across repeated boosted runs, and
Dice similarity of top-l attribution feature sets across repeated
explanation runs. All pairwise scores average over ordered run pairs, so
they are invariant under run permutation and equal 1.0 for identical runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boost import BoostRecord
from .explain import ExplanationVector


@dataclass(frozen=True)
class RunTrace:
    """Per-run outcome over a shared sample set."""

    run_id: int
    predictions: tuple[int, ...]
    boost_records: tuple[BoostRecord, ...] = ()
    explanations: tuple[ExplanationVector, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "predictions", tuple(int(p) for p in self.predictions))
        object.__setattr__(self, "boost_records", tuple(self.boost_records))
        object.__setattr__(self, "explanations", tuple(self.explanations))
        n = len(self.predictions)
        for field_value in (self.boost_records, self.explanations):
            if field_value and len(field_value) != n:
                raise ValueError("all RunTrace lists must share one length")


def evasion_rate(predictions: Sequence[int], y_true_list: Sequence[int]) -> float:
    """Fraction of samples whose prediction differs from the true label."""
    if len(predictions) != len(y_true_list):
        raise ValueError(f"{len(predictions)} predictions vs {len(y_true_list)} labels")
    if len(predictions) == 0:
        raise ValueError("evasion rate of an empty sample set is undefined")
    p = np.asarray(predictions, dtype=int)
    y = np.asarray(y_true_list, dtype=int)
    return float((p != y).mean())


def avg_perturbation_change(records: Sequence[BoostRecord],
                            n_baseline: Sequence[int]) -> float:
    """Mean of (added - eliminated) / baseline-perturbation-count.

    Positive means the booster added more perturbations than it removed.
    Samples whose baseline perturbed nothing are skipped (callers report
    the skip count separately); if every sample is skipped this is
    undefined and raises.
    """
    if len(records) != len(n_baseline):
        raise ValueError(f"{len(records)} records vs {len(n_baseline)} baseline counts")
    terms = [(r.n_added - r.n_eliminated) / nb
             for r, nb in zip(records, n_baseline) if nb > 0]
    if not terms:
        raise ValueError("every sample has a zero-perturbation baseline")
    return float(np.mean(terms))


def k_stability(runs: Sequence[RunTrace]) -> float:
    """Mean pairwise fraction of samples with identical predicted labels."""
    k = len(runs)
    if k < 2:
        raise ValueError("k_stability needs at least 2 runs")
    preds = [np.asarray(r.predictions, dtype=int) for r in runs]
    n = preds[0].shape[0]
    if n == 0 or any(q.shape[0] != n for q in preds):
        raise ValueError("runs must share one non-empty sample set")
    total = 0.0
    for i in range(k):
        for j in range(k):
            if i != j:
                total += float((preds[i] == preds[j]).mean())
    return total / (k * (k - 1))


def dice(a, b) -> float:
    """Dice set similarity 2|A & B| / (|A| + |B|); two empty sets count
    as identical."""
    a, b = frozenset(a), frozenset(b)
    if not a and not b:
        return 1.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def kl_stability(explanation_runs, k: int | None = None, l: int = 10) -> float:
    """Mean pairwise Dice similarity of top-l |weight| feature sets,
    averaged per sample first and then across samples.

    ``explanation_runs`` holds one sequence of ExplanationVector per run
    (RunTrace instances are accepted too).
    """
    runs = [r.explanations if isinstance(r, RunTrace) else tuple(r)
            for r in explanation_runs]
    if k is None:
        k = len(runs)
    if k != len(runs):
        raise ValueError(f"k={k} but {len(runs)} runs given")
    if k < 2:
        raise ValueError("kl_stability needs at least 2 runs")
    if l < 1:
        raise ValueError("l must be >= 1")
    n = len(runs[0])
    if n == 0 or any(len(run) != n for run in runs):
        raise ValueError("runs must share one non-empty sample set")
    d = runs[0][0].dim
    if l > d:
        raise ValueError(f"l={l} exceeds feature count {d}")

    per_sample = np.empty(n)
    for s in range(n):
        tops = [run[s].top_features(l) for run in runs]
        total = 0.0
        for i in range(k):
            for j in range(k):
                if i != j:
                    total += dice(tops[i], tops[j])
        per_sample[s] = total / (k * (k - 1))
    return float(per_sample.mean())
