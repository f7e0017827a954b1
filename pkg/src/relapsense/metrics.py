"""Ranking metrics: ROC-AUC, PR-AUC (average precision), per-subject
harmonic means, cross-subject aggregation, and the awake-score fallback
alignment for days without sleep coverage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


def roc_auc(scores, labels) -> float:
    """Mann-Whitney ROC-AUC: P(random positive outranks random negative),
    ties counted 1/2. Requires both classes present."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes")
    ranks = rankdata(scores)  # average ranks on ties
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Average precision with equal scores grouped into one threshold."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("pr_auc needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    # group boundaries where the (descending) score changes
    boundary = np.flatnonzero(np.diff(s) != 0)
    ends = np.concatenate([boundary, [s.size - 1]])
    tp = np.cumsum(y)[ends]
    n_at = ends + 1
    precision = tp / n_at
    prev_tp = np.concatenate([[0], tp[:-1]])
    return float(np.sum((tp - prev_tp) * precision) / n_pos)


def hmean(a: float, b: float) -> float:
    if a + b <= 0:
        return 0.0
    return 2.0 * a * b / (a + b)


@dataclass
class SubjectMetrics:
    roc_auc: float
    pr_auc: float

    @property
    def hmean(self) -> float:
        return hmean(self.roc_auc, self.pr_auc)


@dataclass
class EvalReport:
    """Per-subject and aggregate scores for one experiment cell."""

    cell: str
    per_subject: dict[str, SubjectMetrics] = field(default_factory=dict)
    aggregate_hmean: float = float("nan")
    relapse_days: int = 0
    normal_days: int = 0
    unscoreable_days: int = 0
    skipped_subjects: int = 0  # single-class or empty label sets
    fallback_days: int = 0

    def to_dict(self) -> dict:
        return {
            "cell": self.cell,
            "aggregate_hmean": self.aggregate_hmean,
            "per_subject": {
                k: {"roc_auc": v.roc_auc, "pr_auc": v.pr_auc, "hmean": v.hmean}
                for k, v in sorted(self.per_subject.items())
            },
            "counts": {
                "relapse_days": self.relapse_days,
                "normal_days": self.normal_days,
                "unscoreable_days": self.unscoreable_days,
                "skipped_subjects": self.skipped_subjects,
                "fallback_days": self.fallback_days,
            },
        }


def harmonic_aggregate(
    per_subject: dict[str, SubjectMetrics], mode: str = "mean_of_hmeans"
) -> float:
    """Combine per-subject (ROC, PR) harmonic means across subjects.

    Default: arithmetic mean of per-subject harmonic means. The
    alternative parse, a harmonic mean across subjects, is available as
    mode='hmean_of_hmeans'.
    """
    values = [m.hmean for m in per_subject.values()]
    if not values:
        raise ValueError("no subject has both metrics defined")
    if mode == "mean_of_hmeans":
        return float(np.mean(values))
    if mode == "hmean_of_hmeans":
        v = np.asarray(values, dtype=float)
        if np.any(v <= 0):
            return 0.0
        return float(len(v) / np.sum(1.0 / v))
    raise ValueError(f"unknown aggregate mode: {mode}")


def youden_threshold(scores, labels) -> float:
    """Score threshold maximizing Youden's J = TPR - FPR.

    A day is called positive when score >= threshold; candidate
    thresholds are the distinct observed scores.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("youden_threshold needs both classes")
    best_t, best_j = float(scores.max()), -np.inf
    for t in np.unique(scores):
        called = scores >= t
        j = (labels[called].sum() / n_pos) - ((called.sum() - labels[called].sum()) / n_neg)
        if j > best_j:
            best_j, best_t = j, float(t)
    return best_t


def awake_fallback_threshold(
    sleep_scores: dict,
    sleep_labels: dict,
    awake_scores: dict,
) -> tuple[dict, bool]:
    """Affinely align awake day scores to the sleep score scale.

    Finds the sleep-score threshold maximizing Youden's J on labeled
    days, the matching threshold on awake scores, and maps awake scores
    so that (awake median, awake threshold) land on (sleep median, sleep
    threshold). Returns (adjusted awake scores, aligned flag); when no
    labeled sleep day exists the input passes through with aligned=False.
    """
    labeled = [d for d in sleep_scores if d in sleep_labels]
    if not labeled or len({sleep_labels[d] for d in labeled}) < 2:
        return dict(awake_scores), False
    t_sleep = youden_threshold(
        [sleep_scores[d] for d in labeled], [sleep_labels[d] for d in labeled]
    )
    m_sleep = float(np.median(list(sleep_scores.values())))

    awake_labeled = [d for d in awake_scores if d in sleep_labels]
    if not awake_labeled or len({sleep_labels[d] for d in awake_labeled}) < 2:
        return dict(awake_scores), False
    t_awake = youden_threshold(
        [awake_scores[d] for d in awake_labeled], [sleep_labels[d] for d in awake_labeled]
    )
    m_awake = float(np.median(list(awake_scores.values())))

    if abs(t_awake - m_awake) < 1e-12:
        scale = 1.0
    else:
        scale = (t_sleep - m_sleep) / (t_awake - m_awake)
    adjusted = {d: m_sleep + (s - m_awake) * scale for d, s in awake_scores.items()}
    return adjusted, True


def evaluate_day_scores(
    day_scores,
    cell: str,
    unscoreable_days: int = 0,
    aggregate_mode: str = "mean_of_hmeans",
    fallback_days: int = 0,
) -> EvalReport:
    """Build an EvalReport from a day-score frame.

    `day_scores` is a DataFrame with subject_id, date, label, score;
    only labeled (normal/relapse) days enter the metrics.
    """
    report = EvalReport(cell=cell, unscoreable_days=unscoreable_days, fallback_days=fallback_days)
    labeled = day_scores[day_scores["label"].isin(["normal", "relapse"])]
    report.relapse_days = int((labeled["label"] == "relapse").sum())
    report.normal_days = int((labeled["label"] == "normal").sum())
    for sid, grp in labeled.groupby("subject_id"):
        y = (grp["label"] == "relapse").astype(int).to_numpy()
        if y.sum() == 0 or y.sum() == len(y):
            report.skipped_subjects += 1
            continue
        s = grp["score"].to_numpy(dtype=float)
        report.per_subject[str(sid)] = SubjectMetrics(roc_auc(s, y), pr_auc(s, y))
    report.aggregate_hmean = harmonic_aggregate(report.per_subject, aggregate_mode)
    return report
