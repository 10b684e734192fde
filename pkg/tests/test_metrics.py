import numpy as np
import pytest

from momentrl.metrics import acc_at, oos_metrics, recall_at_k
from momentrl.timeline import Interval, Verdict


def _pairs(tious):
    """Build (pred, gt) pairs whose IoUs equal the given values."""
    out = []
    for v in tious:
        gt = Interval(0.0, 0.5)
        if v == 1.0:
            out.append((gt, gt))
        else:
            # pred [d, 0.5 + d] against gt [0, 0.5]: iou = (0.5 - d) / (0.5 + d)
            d = 0.5 * (1.0 - v) / (1.0 + v)
            out.append((Interval(d, 0.5 + d), gt))
    return out


class TestAccAt:
    def test_two_of_three(self):
        pairs = _pairs([0.6, 0.4, 0.8])
        assert acc_at(pairs, 0.5) == pytest.approx(100.0 * 2 / 3, abs=1e-6)

    def test_perfect(self):
        pairs = _pairs([1.0, 1.0])
        assert acc_at(pairs, 0.5) == 100.0
        assert acc_at(pairs, 0.7) == 100.0

    def test_tie_at_threshold_excluded(self):
        # iou([0.25, 0.5], [0, 0.5]) = 0.25 / 0.5, exact in floats
        pairs = [(Interval(0.25, 0.5), Interval(0.0, 0.5))]
        assert acc_at(pairs, 0.5) == 0.0
        assert acc_at(pairs, 0.49) == 100.0

    def test_07_never_exceeds_05(self, rng):
        pairs = _pairs(rng.uniform(0, 1, 50))
        assert acc_at(pairs, 0.7) <= acc_at(pairs, 0.5)

    def test_order_invariant(self, rng):
        vals = rng.uniform(0, 1, 20)
        pairs = _pairs(vals)
        shuffled = [pairs[i] for i in rng.permutation(20)]
        assert acc_at(pairs, 0.5) == pytest.approx(acc_at(shuffled, 0.5), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            acc_at([], 0.5)


class TestOosMetrics:
    def test_all_correct(self):
        decisions = [(Verdict.OOS, Verdict.OOS), (Verdict.MATCH, Verdict.MATCH)]
        assert oos_metrics(decisions) == (100.0, 100.0)

    def test_all_match_predictions_half_oos(self):
        decisions = [(Verdict.MATCH, Verdict.OOS), (Verdict.MATCH, Verdict.MATCH)] * 5
        accuracy, f1 = oos_metrics(decisions)
        assert accuracy == 50.0
        assert f1 == 0.0

    def test_f1_from_counts(self):
        # TP=2, FP=1, FN=1 -> F1 = 4/6
        decisions = [
            (Verdict.OOS, Verdict.OOS),
            (Verdict.OOS, Verdict.OOS),
            (Verdict.OOS, Verdict.MATCH),
            (Verdict.MATCH, Verdict.OOS),
        ]
        accuracy, f1 = oos_metrics(decisions)
        assert f1 == pytest.approx(100.0 * 2 * 2 / (2 * 2 + 1 + 1), abs=1e-9)
        assert accuracy == 50.0

    def test_order_invariant(self, rng):
        opts = [Verdict.OOS, Verdict.MATCH]
        decisions = [(opts[rng.integers(2)], opts[rng.integers(2)]) for _ in range(30)]
        shuffled = [decisions[i] for i in rng.permutation(30)]
        assert oos_metrics(decisions) == oos_metrics(shuffled)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            oos_metrics([])


class TestRecallAtK:
    def test_k_covers_pool(self):
        rankings = {"q": ["a", "b", "c"]}
        assert recall_at_k(rankings, {"q": "c"}, 3) == 100.0
        assert recall_at_k(rankings, {"q": "c"}, 10) == 100.0

    def test_true_first(self):
        rankings = {"q1": ["a", "b"], "q2": ["c", "d"]}
        truth = {"q1": "a", "q2": "c"}
        assert recall_at_k(rankings, truth, 1) == 100.0

    def test_rank_eleven(self):
        ranked = [f"v{i}" for i in range(20)]
        rankings = {"q": ranked}
        truth = {"q": "v10"}  # rank 11
        assert recall_at_k(rankings, truth, 10) == 0.0
        assert recall_at_k(rankings, truth, 100) == 100.0

    def test_bad_k(self):
        with pytest.raises(ValueError):
            recall_at_k({"q": ["a"]}, {"q": "a"}, 0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            recall_at_k({}, {}, 1)
