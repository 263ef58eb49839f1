"""AUROC, F1 and per-state Jaccard with micro/macro/weighted aggregation.

AUROC is the Mann-Whitney statistic with ties counted 0.5, computed via
sorted cumulative counts so it equals the O(n^2) pair-counting definition
exactly (integer and half-integer arithmetic until the final division).
Kinds with a degenerate truth column have no defined AUROC; they are
reported as absent and skipped by macro/weighted averages.

Four-state labels binarize as positive=1, everything else 0; the optimistic
variant maps uncertain to 1 as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..synthcorpus.findings import KINDS
from .labeler import STATES, LabelVector


def auroc(scores, truth) -> float | None:
    """Rank-based AUROC; None when truth has a single class."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have equal length")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    neg = np.sort(scores[~truth])
    pos = scores[truth]
    below = np.searchsorted(neg, pos, side="left")
    equal = np.searchsorted(neg, pos, side="right") - below
    u = float(below.sum()) + 0.5 * float(equal.sum())
    return u / (n_pos * n_neg)


def f1(pred, truth) -> float:
    """2PR/(P+R); returns 0.0 when the denominator is 0."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    tp = int((pred & truth).sum())
    fp = int((pred & ~truth).sum())
    fn = int((~pred & truth).sum())
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


@dataclass
class AggregateResult:
    micro: float | None
    macro: float | None
    weighted: float | None
    per_kind: dict[str, float | None]
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "micro": self.micro,
            "macro": self.macro,
            "weighted": self.weighted,
            "per_kind": dict(self.per_kind),
            "skipped": list(self.skipped),
        }


def _aggregate(per_kind: dict, weights: dict, micro_value) -> AggregateResult:
    defined = {k: v for k, v in per_kind.items() if v is not None}
    skipped = [k for k, v in per_kind.items() if v is None]
    macro = float(np.mean(list(defined.values()))) if defined else None
    wsum = sum(weights[k] for k in defined)
    weighted = (
        sum(defined[k] * weights[k] for k in defined) / wsum if defined and wsum else None
    )
    return AggregateResult(micro_value, macro, weighted, per_kind, skipped)


def auroc_by_kind(scores: dict[str, np.ndarray], truth: dict[str, np.ndarray]) -> AggregateResult:
    """Per-kind AUROC plus pooled micro and support-weighted averages."""
    per_kind = {k: auroc(scores[k], truth[k]) for k in scores}
    weights = {k: int(np.asarray(truth[k]).astype(bool).sum()) for k in scores}
    all_scores = np.concatenate([np.asarray(scores[k], dtype=np.float64) for k in scores])
    all_truth = np.concatenate([np.asarray(truth[k]).astype(bool) for k in scores])
    return _aggregate(per_kind, weights, auroc(all_scores, all_truth))


def f1_by_kind(pred: dict[str, np.ndarray], truth: dict[str, np.ndarray]) -> AggregateResult:
    per_kind = {k: f1(pred[k], truth[k]) for k in pred}
    weights = {k: int(np.asarray(truth[k]).astype(bool).sum()) for k in pred}
    all_pred = np.concatenate([np.asarray(pred[k]).astype(bool) for k in pred])
    all_truth = np.concatenate([np.asarray(truth[k]).astype(bool) for k in pred])
    return _aggregate(per_kind, weights, f1(all_pred, all_truth))


def binarize_state(state: str, uncertain_positive: bool = False) -> int:
    if state == "positive":
        return 1
    if state == "uncertain":
        return int(uncertain_positive)
    return 0


def label_matrix(vectors: list[LabelVector], uncertain_positive: bool = False) -> dict[str, np.ndarray]:
    """Per-kind binary columns from a list of label vectors."""
    return {
        kind: np.array(
            [binarize_state(v.state(kind), uncertain_positive) for v in vectors], dtype=np.int64
        )
        for kind in KINDS
    }


@dataclass
class JaccardResult:
    micro: float
    macro: float
    weighted: float
    per_state: dict[str, float]
    empty_states: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "micro": self.micro,
            "macro": self.macro,
            "weighted": self.weighted,
            "per_state": dict(self.per_state),
            "empty_states": list(self.empty_states),
        }


def jaccard(pred: list[LabelVector], truth: list[LabelVector]) -> JaccardResult:
    """Per-state intersection-over-union across all (example, kind) cells.

    Micro pools all four states; macro averages the per-state values;
    weighted weights them by true-state support. A state absent from both
    sides scores 1.0 (identity) and is flagged.
    """
    if len(pred) != len(truth):
        raise ValueError("pred and truth lists must align")
    inter = dict.fromkeys(STATES, 0)
    union = dict.fromkeys(STATES, 0)
    support = dict.fromkeys(STATES, 0)
    for p, t in zip(pred, truth):
        for kind in KINDS:
            ps, ts = p.state(kind), t.state(kind)
            support[ts] += 1
            if ps == ts:
                inter[ps] += 1
                union[ps] += 1
            else:
                union[ps] += 1
                union[ts] += 1
    per_state = {}
    empty = []
    for s in STATES:
        if union[s] == 0:
            per_state[s] = 1.0
            empty.append(s)
        else:
            per_state[s] = inter[s] / union[s]
    micro = sum(inter.values()) / sum(union.values()) if sum(union.values()) else 1.0
    macro = float(np.mean([per_state[s] for s in STATES]))
    wsum = sum(support.values())
    weighted = sum(per_state[s] * support[s] for s in STATES) / wsum if wsum else 1.0
    return JaccardResult(micro, macro, weighted, per_state, empty)
