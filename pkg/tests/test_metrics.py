"""Ranking-metric tests against independent brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relapsense import metrics


def roc_auc_pair_oracle(scores, labels):
    """Mann-Whitney pair counting: P(pos > neg) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = ties = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                ties += 1.0
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def pr_auc_sweep_oracle(scores, labels):
    """Average precision by sweeping thresholds over distinct scores.

    Predictions at threshold t are score >= t; tied scores enter as a
    block, and each recall increment is weighted by the precision at
    that threshold.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = labels.sum()
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(set(scores), reverse=True):
        called = scores >= t
        tp = labels[called].sum()
        precision = tp / called.sum()
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def _random_instance(rng):
    n = rng.integers(2, 51)
    labels = rng.integers(0, 2, n)
    if labels.sum() == 0:
        labels[rng.integers(n)] = 1
    if labels.sum() == n:
        labels[rng.integers(n)] = 0
    if rng.random() < 0.5:
        # integer scores force ties
        scores = rng.integers(0, 6, n).astype(float)
    else:
        scores = rng.normal(size=n)
    return scores, labels


def test_auc_oracle_equivalence_200_instances():
    import time

    t0 = time.monotonic()
    rng = np.random.default_rng(20240817)
    for _ in range(200):
        scores, labels = _random_instance(rng)
        assert metrics.roc_auc(scores, labels) == pytest.approx(
            roc_auc_pair_oracle(scores, labels), abs=1e-12
        )
        assert metrics.pr_auc(scores, labels) == pytest.approx(
            pr_auc_sweep_oracle(scores, labels), abs=1e-12
        )
    assert time.monotonic() - t0 < 5.0


def test_roc_auc_known_values():
    assert metrics.roc_auc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0
    assert metrics.roc_auc([4, 3, 2, 1], [0, 0, 1, 1]) == 0.0
    assert metrics.roc_auc([1, 1, 1, 1], [0, 1, 0, 1]) == 0.5


def test_pr_auc_perfect_and_constant():
    assert metrics.pr_auc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0
    # constant scores: one threshold, precision = prevalence
    assert metrics.pr_auc([1, 1, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.5, abs=1e-12)


def test_single_class_rejected():
    with pytest.raises(ValueError):
        metrics.roc_auc([1, 2, 3], [1, 1, 1])
    with pytest.raises(ValueError):
        metrics.pr_auc([1, 2, 3], [0, 0, 0])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(-100, 100), min_size=4, max_size=30),
    st.floats(0.1, 5.0),
    st.floats(-10, 10),
)
def test_roc_auc_invariant_under_monotone_transform(vals, a, b):
    rng = np.random.default_rng(len(vals))
    labels = rng.integers(0, 2, len(vals))
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    scores = np.asarray(vals)
    base = metrics.roc_auc(scores, labels)
    assert metrics.roc_auc(a * scores + b, labels) == pytest.approx(base, abs=1e-12)


def test_hmean():
    assert metrics.hmean(1.0, 1.0) == 1.0
    assert metrics.hmean(0.0, 0.9) == 0.0
    assert metrics.hmean(0.5, 1.0) == pytest.approx(2 / 3, abs=1e-12)


def test_harmonic_aggregate_modes():
    per = {
        "a": metrics.SubjectMetrics(1.0, 1.0),
        "b": metrics.SubjectMetrics(0.5, 0.5),
    }
    assert metrics.harmonic_aggregate(per, "mean_of_hmeans") == pytest.approx(0.75)
    assert metrics.harmonic_aggregate(per, "hmean_of_hmeans") == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        metrics.harmonic_aggregate({}, "mean_of_hmeans")
    with pytest.raises(ValueError):
        metrics.harmonic_aggregate(per, "geometric")


def test_youden_threshold_separable():
    scores = [0.1, 0.2, 0.3, 0.8, 0.9]
    labels = [0, 0, 0, 1, 1]
    # any t in (0.3, 0.8] achieves J=1; candidates are observed scores
    assert metrics.youden_threshold(scores, labels) == 0.8


def test_youden_threshold_brute_force_oracle():
    rng = np.random.default_rng(99)
    for _ in range(50):
        scores, labels = _random_instance(rng)
        t = metrics.youden_threshold(scores, labels)
        n_pos, n_neg = labels.sum(), len(labels) - labels.sum()

        def j(thr):
            called = scores >= thr
            return labels[called].sum() / n_pos - (called.sum() - labels[called].sum()) / n_neg

        best = max(j(c) for c in np.unique(scores))
        assert j(t) == pytest.approx(best, abs=1e-12)


def test_awake_fallback_affine_mapping():
    sleep = {f"d{i}": s for i, s in enumerate([0.1, 0.2, 0.3, 0.7, 0.9])}
    labels = {f"d{i}": y for i, y in enumerate([0, 0, 0, 1, 1])}
    awake = {f"d{i}": s for i, s in enumerate([1.0, 2.0, 3.0, 8.0, 9.0])}
    adjusted, aligned = metrics.awake_fallback_threshold(sleep, labels, awake)
    assert aligned
    t_s = metrics.youden_threshold(list(sleep.values()), list(labels.values()))
    t_a = metrics.youden_threshold(list(awake.values()), list(labels.values()))
    m_s = np.median(list(sleep.values()))
    m_a = np.median(list(awake.values()))
    # the awake threshold and median must land on their sleep counterparts
    assert adjusted[f"d3"] == pytest.approx(
        m_s + (awake["d3"] - m_a) * (t_s - m_s) / (t_a - m_a), abs=1e-12
    )
    mapped_t = m_s + (t_a - m_a) * (t_s - m_s) / (t_a - m_a)
    assert mapped_t == pytest.approx(t_s, abs=1e-12)
    mapped_m = m_s + (m_a - m_a) * (t_s - m_s) / (t_a - m_a)
    assert mapped_m == pytest.approx(m_s, abs=1e-12)


def test_awake_fallback_single_class_passthrough():
    sleep = {"a": 0.1, "b": 0.2}
    labels = {"a": 0, "b": 0}
    awake = {"a": 5.0, "b": 6.0, "c": 7.0}
    adjusted, aligned = metrics.awake_fallback_threshold(sleep, labels, awake)
    assert not aligned
    assert adjusted == awake


def test_awake_fallback_preserves_order():
    rng = np.random.default_rng(5)
    sleep = {f"d{i}": float(s) for i, s in enumerate(rng.normal(size=20))}
    labels = {k: int(v > 0) for k, v in sleep.items()}
    awake = {f"d{i}": float(s) for i, s in enumerate(rng.normal(size=20))}
    adjusted, aligned = metrics.awake_fallback_threshold(sleep, labels, awake)
    if aligned:
        keys = sorted(awake, key=awake.get)
        mapped = [adjusted[k] for k in keys]
        diffs = np.diff(mapped)
        assert np.all(diffs >= 0) or np.all(diffs <= 0)
