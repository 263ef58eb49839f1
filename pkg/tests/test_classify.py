import numpy as np
import pytest

from mmvq.evalsuite.classify import (
    auroc,
    auroc_by_kind,
    binarize_state,
    f1,
    f1_by_kind,
    jaccard,
    label_matrix,
)
from mmvq.evalsuite.labeler import LabelEntry, LabelVector
from mmvq.synthcorpus.findings import KINDS


def pair_counting_auroc(scores, truth):
    """O(n^2) oracle: P(score_pos > score_neg) + 0.5 P(equal)."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    pos = scores[truth]
    neg = scores[~truth]
    if len(pos) == 0 or len(neg) == 0:
        return None
    u = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                u += 1.0
            elif p == n:
                u += 0.5
    return u / (len(pos) * len(neg))


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert auroc([0.5] * 10, [0, 1] * 5) == 0.5

    def test_matches_pair_oracle_exactly(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            n = int(rng.integers(5, 40))
            # discrete scores force plenty of ties
            scores = rng.integers(0, 4, size=n).astype(float)
            truth = rng.integers(0, 2, size=n)
            if truth.sum() in (0, n):
                truth[0] = 1 - truth[0]
            assert auroc(scores, truth) == pair_counting_auroc(scores, truth), trial

    def test_degenerate_truth_is_none(self):
        assert auroc([0.1, 0.9], [1, 1]) is None
        assert auroc([0.1, 0.9], [0, 0]) is None

    def test_aggregations(self):
        scores = {"a": np.array([0.9, 0.1]), "b": np.array([0.8, 0.7, 0.2]), "c": np.array([0.5, 0.5])}
        truth = {"a": np.array([1, 0]), "b": np.array([1, 0, 0]), "c": np.array([1, 1])}
        res = auroc_by_kind(scores, truth)
        assert res.per_kind["a"] == 1.0
        assert res.per_kind["b"] == 1.0
        assert res.per_kind["c"] is None
        assert res.skipped == ["c"]
        assert res.macro == 1.0
        # weighted: same values, weights by positive support (1, 1)
        assert res.weighted == 1.0
        pooled = auroc(np.concatenate(list(scores.values())), np.concatenate(list(truth.values())))
        assert res.micro == pooled


class TestF1:
    def test_exact_match(self):
        assert f1([1, 0, 1], [1, 0, 1]) == 1.0

    def test_no_predictions_with_positives(self):
        assert f1([0, 0, 0], [1, 1, 0]) == 0.0

    def test_empty_everything(self):
        assert f1([0, 0], [0, 0]) == 0.0

    def test_hand_counted_cases(self):
        # tp=2 fp=1 fn=1 -> P=2/3 R=2/3 F1=2/3
        assert f1([1, 1, 1, 0, 0], [1, 1, 0, 1, 0]) == pytest.approx(2 / 3)
        # tp=1 fp=0 fn=3 -> P=1 R=1/4, F1 = 2*1*(1/4)/(1+1/4) = 0.4
        assert f1([1, 0, 0, 0], [1, 1, 1, 1]) == pytest.approx(0.4)
        # 14-case set: tp=4 fp=2 fn=3 -> F1 = 8/(8+2+3)
        pred = [1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]
        true = [1, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0]
        assert f1(pred, true) == pytest.approx(8 / 13)

    def test_aggregations(self):
        pred = {"a": np.array([1, 0]), "b": np.array([0, 1])}
        truth = {"a": np.array([1, 0]), "b": np.array([1, 1])}
        res = f1_by_kind(pred, truth)
        assert res.per_kind["a"] == 1.0
        assert res.per_kind["b"] == pytest.approx(2 / 3)
        assert res.macro == pytest.approx((1.0 + 2 / 3) / 2)
        assert res.weighted == pytest.approx((1.0 * 1 + (2 / 3) * 2) / 3)
        assert res.micro == pytest.approx(f1([1, 0, 0, 1], [1, 0, 1, 1]))


def _vec(assignments):
    vec = LabelVector()
    for kind, state in assignments.items():
        vec.entries[kind] = LabelEntry(state)
    return vec


class TestJaccard:
    def test_identical_all_ones(self):
        vecs = [_vec({"opacity": "positive"}), _vec({})]
        res = jaccard(vecs, vecs)
        assert res.micro == 1.0 and res.macro == 1.0 and res.weighted == 1.0
        assert all(v == 1.0 for v in res.per_state.values())

    def test_fully_disjoint_states(self):
        pred = [_vec({k: "positive" for k in KINDS})]
        true = [_vec({k: "negative" for k in KINDS})]
        res = jaccard(pred, true)
        assert res.per_state["positive"] == 0.0
        assert res.per_state["negative"] == 0.0
        assert res.micro == 0.0

    def test_constructed_case_matches_set_oracle(self):
        rng = np.random.default_rng(1)
        states = ["no_mention", "positive", "negative", "uncertain"]
        pred, true = [], []
        for _ in range(10):
            pred.append(_vec({k: states[rng.integers(4)] for k in KINDS}))
            true.append(_vec({k: states[rng.integers(4)] for k in KINDS}))
        res = jaccard(pred, true)
        for s in states:
            inter = sum(
                1
                for p, t in zip(pred, true)
                for k in KINDS
                if p.state(k) == s and t.state(k) == s
            )
            union = sum(
                1
                for p, t in zip(pred, true)
                for k in KINDS
                if p.state(k) == s or t.state(k) == s
            )
            expected = 1.0 if union == 0 else inter / union
            assert res.per_state[s] == pytest.approx(expected)

    def test_empty_state_flagged(self):
        vecs = [_vec({})]  # everything no_mention
        res = jaccard(vecs, vecs)
        assert set(res.empty_states) == {"positive", "negative", "uncertain"}
        assert res.per_state["uncertain"] == 1.0

    def test_misaligned_lists_rejected(self):
        with pytest.raises(ValueError):
            jaccard([_vec({})], [])


def test_binarize_mapping():
    assert binarize_state("positive") == 1
    assert binarize_state("negative") == 0
    assert binarize_state("no_mention") == 0
    assert binarize_state("uncertain") == 0  # pessimistic default
    assert binarize_state("uncertain", uncertain_positive=True) == 1


def test_label_matrix_shape():
    vecs = [_vec({"edema": "positive"}), _vec({"edema": "uncertain"})]
    mat = label_matrix(vecs)
    assert set(mat) == set(KINDS)
    assert mat["edema"].tolist() == [1, 0]
    assert label_matrix(vecs, uncertain_positive=True)["edema"].tolist() == [1, 1]
