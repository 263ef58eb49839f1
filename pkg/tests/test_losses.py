import math

import numpy as np
import pytest
import torch

from mmvq.instructset.build import PromptRecord, batch_nll, build_example, instruct_loss, joint_loss
from mmvq.numcore import softmax_cross_entropy
from mmvq.vqtok.model import ImageTokens


def _records():
    return [
        PromptRecord("NL_IF", "Repeat exactly: mild left opacity", "", "mild left opacity"),
        PromptRecord(
            "CXR_TO_REPORT",
            "Generate a radiology report for the entered chest image.",
            ImageTokens(np.arange(6) % 16),
            "There is mild cardiomegaly.",
            source_study="s1",
        ),
        PromptRecord(
            "REPORT_TO_CXR",
            "Create a chest image that matches the entered radiology report.",
            "No acute findings.",
            ImageTokens((np.arange(6) * 3) % 16),
            source_study="s2",
        ),
    ]


@pytest.fixture(scope="module")
def examples(tiny_lm_and_vocab):
    _, vocab = tiny_lm_and_vocab
    return [build_example(r, vocab, 320) for r in _records()]


def _uniform_model(tiny_lm_and_vocab):
    import copy

    model, _ = tiny_lm_and_vocab
    uniform = copy.deepcopy(model)
    with torch.no_grad():
        uniform.head.weight.zero_()
    return uniform


def test_uniform_model_mean_is_log_vocab(tiny_lm_and_vocab, examples):
    _, vocab = tiny_lm_and_vocab
    uniform = _uniform_model(tiny_lm_and_vocab)
    mean, total, count = instruct_loss(uniform, examples, vocab)
    assert abs(mean - math.log(vocab.total)) < 1e-10
    mean_j, _, _ = joint_loss(uniform, examples, vocab)
    assert abs(mean_j - math.log(vocab.total)) < 1e-10


def test_joint_dominates_instruct(tiny_lm_and_vocab, examples):
    model, vocab = tiny_lm_and_vocab
    for ex in examples:
        _, s_i, c_i = instruct_loss(model, ex, vocab)
        _, s_j, c_j = joint_loss(model, ex, vocab)
        assert s_j >= s_i
        assert c_j > c_i


def test_joint_minus_instruct_is_complement_nll(tiny_lm_and_vocab, examples):
    """Decomposition oracle: the difference equals the NLL summed over the
    positions the instruct mask excludes (prompt + end boilerplate),
    computed by an independent per-position log-softmax loop."""
    model, vocab = tiny_lm_and_vocab
    for ex in examples:
        _, s_i, _ = instruct_loss(model, ex, vocab)
        _, s_j, _ = joint_loss(model, ex, vocab)
        ids = torch.tensor(ex.ids)[None]
        with torch.no_grad():
            logits = model(ids[:, :-1])[0]
        complement = 0.0
        for t in range(len(ex.ids) - 1):
            if ex.mask[t + 1] == 0:
                row = logits[t].numpy()
                p = np.exp(row - row.max())
                p = p / p.sum()
                complement += -math.log(p[ex.ids[t + 1]])
        assert abs((s_j - s_i) - complement) < 1e-10


def test_matches_naive_per_token_loop(tiny_lm_and_vocab, examples):
    model, vocab = tiny_lm_and_vocab
    sums, counts = batch_nll(model, examples, vocab, "instruct")
    for b, ex in enumerate(examples):
        ids = torch.tensor(ex.ids)[None]
        with torch.no_grad():
            logits = model(ids[:, :-1])[0].numpy()
        naive = 0.0
        n = 0
        for t in range(len(ex.ids) - 1):
            if ex.mask[t + 1] == 1:
                row = logits[t]
                p = np.exp(row - row.max())
                p = p / p.sum()
                naive += -math.log(p[ex.ids[t + 1]])
                n += 1
        assert abs(float(sums[b]) - naive) < 1e-10
        assert int(counts[b]) == n == sum(ex.mask)


def test_unmasked_target_relabeling_invariance(tiny_lm_and_vocab, examples):
    model, vocab = tiny_lm_and_vocab
    ex = examples[1]
    ids = torch.tensor(ex.ids)[None]
    with torch.no_grad():
        logits = model(ids[:, :-1])
    targets = ids[:, 1:].clone()
    mask = torch.tensor(ex.mask)[None][:, 1:]
    base, base_count = softmax_cross_entropy(logits, targets, mask)
    scrambled = targets.clone()
    rng = np.random.default_rng(0)
    for t in range(scrambled.shape[1]):
        if mask[0, t] == 0:
            scrambled[0, t] = int(rng.integers(0, vocab.total))
    redo, redo_count = softmax_cross_entropy(logits, scrambled, mask)
    assert base_count == redo_count
    assert float(base) == float(redo)


def test_padding_beyond_example_is_inert(tiny_lm_and_vocab, examples):
    model, vocab = tiny_lm_and_vocab
    one = [examples[0]]
    sums_alone, counts_alone = batch_nll(model, one, vocab, "instruct")
    # batched with a longer example forces padding on the short one
    sums_mixed, counts_mixed = batch_nll(model, [examples[0], examples[2]], vocab, "instruct")
    assert abs(float(sums_alone[0]) - float(sums_mixed[0])) < 1e-9
    assert int(counts_alone[0]) == int(counts_mixed[0])


def test_unknown_objective_rejected(tiny_lm_and_vocab, examples):
    model, vocab = tiny_lm_and_vocab
    with pytest.raises(ValueError, match="objective"):
        batch_nll(model, examples, vocab, "marginal")
