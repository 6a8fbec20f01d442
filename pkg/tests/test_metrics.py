import math

import numpy as np
import pytest

from mgkd.errors import MetricError
from mgkd.metrics import auc, evaluate, ks, recall_at_k


def pairwise_auc(scores, labels):
    """Brute-force oracle: count positive-over-negative pairs, ties half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = ties = 0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1
            elif sp == sn:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def scan_ks(scores, labels):
    """Oracle: evaluate both empirical CDFs at every observed score."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    best = 0.0
    for t in scores:
        f1 = np.mean(pos <= t)
        f0 = np.mean(neg <= t)
        best = max(best, abs(f1 - f0))
    return best


def naive_recall(scores, labels, k_percent):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    m = math.ceil(k_percent / 100.0 * len(scores))
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    top = order[:m]
    return sum(labels[i] == 1 for i in top) / np.sum(labels == 1)


class TestAuc:
    def test_perfect_ranking(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_equal_scores(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5

    def test_hand_count(self):
        # Pairwise oracle: 3 wins of 4 positive/negative pairs.
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_single_class(self):
        with pytest.raises(MetricError):
            auc([0.1, 0.2], [1, 1])

    def test_monotone_invariance(self):
        rng = np.random.default_rng(0)
        scores = rng.standard_normal(80)
        labels = rng.integers(0, 2, 80)
        base = auc(scores, labels)
        assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert auc(3.0 * scores + 7.0, labels) == pytest.approx(base,
                                                                abs=1e-12)

    def test_reversal_without_ties(self):
        rng = np.random.default_rng(1)
        scores = rng.permutation(50).astype(float)
        labels = rng.integers(0, 2, 50)
        labels[0], labels[1] = 0, 1
        assert auc(-scores, labels) == pytest.approx(1.0 - auc(scores, labels))


class TestKs:
    def test_identical_distributions(self):
        assert ks([0.1, 0.2, 0.1, 0.2], [0, 0, 1, 1]) == 0.0

    def test_perfect_separation(self):
        assert ks([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_hand_value(self):
        assert ks([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(MetricError):
            ks([0.1, 0.2], [0, 0])


class TestRecallAtK:
    def test_k_100(self):
        assert recall_at_k([0.3, 0.1, 0.9], [1, 0, 1], 100.0) == 1.0

    def test_top_positive(self):
        scores = np.linspace(1.0, 0.1, 10)
        labels = np.zeros(10, dtype=int)
        labels[0] = 1
        assert recall_at_k(scores, labels, 10.0) == 1.0

    def test_half_captured(self):
        scores = np.linspace(1.0, 0.05, 20)
        labels = np.zeros(20, dtype=int)
        labels[0] = 1   # rank 1
        labels[4] = 1   # rank 5, outside top 2
        assert recall_at_k(scores, labels, 10.0) == 0.5

    def test_ceiling_cutoff(self):
        # 10% of 11 rows -> top 2 by the ceiling rule.
        scores = np.linspace(1.0, 0.0, 11)
        labels = np.zeros(11, dtype=int)
        labels[1] = 1
        assert recall_at_k(scores, labels, 10.0) == 1.0

    def test_no_positives(self):
        with pytest.raises(MetricError):
            recall_at_k([0.1, 0.2], [0, 0], 10.0)

    def test_bad_k(self):
        with pytest.raises(MetricError):
            recall_at_k([0.1], [1], 0.0)


class TestOracleAgreement:
    def test_random_scored_sets(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(4, 60))
            if rng.random() < 0.5:
                scores = rng.integers(0, 6, n).astype(float)  # many ties
            else:
                scores = rng.standard_normal(n)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            k = float(rng.uniform(5.0, 100.0))
            assert auc(scores, labels) == pytest.approx(
                pairwise_auc(scores, labels), abs=1e-12)
            assert ks(scores, labels) == scan_ks(scores, labels)
            assert recall_at_k(scores, labels, k) == \
                naive_recall(scores, labels, k)


class TestEvaluate:
    def test_report_fields(self):
        report = evaluate([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1],
                          split="test", seed=3, mode="full")
        assert report.auc == 0.75
        assert report.ks == 0.5
        assert report.n_pos == 2 and report.n_neg == 2
        assert report.split == "test" and report.seed == 3
        assert 0.0 <= report.recall_at_k <= 1.0
