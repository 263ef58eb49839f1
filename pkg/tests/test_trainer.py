import math

import numpy as np
import pytest
import torch

from mmvq.instructset.mixing import MixSchedule, MixStream, build_pools
from mmvq.lmcore.model import LmConfig, build_lm, expand_vocab
from mmvq.trainer.loop import TrainConfig, load_train_state, save_train_state, train_stage
import mmvq.pipeline as P


@pytest.fixture(scope="module")
def setup(small_corpus):
    vocab = P.build_vocab()
    tokens = {
        r.study_id: (np.arange(16) * (i + 1)) % 16
        for i, r in enumerate(small_corpus.records)
    }
    def fresh_model():
        cfg = LmConfig(k_text=vocab.k_text, d_e=32, n_layers=1, n_heads=2, context_length=320)
        model = build_lm(cfg, seed=31)
        return expand_vocab(model, 16, seed=32)
    return small_corpus, vocab.with_images(16), tokens, fresh_model


def _stream(corpus, tokens, seed=1):
    pools = build_pools(corpus, tokens, 1)
    return MixStream(pools, MixSchedule.for_stage(1), seed=seed)


def test_two_runs_bit_identical(setup):
    corpus, vocab, tokens, fresh_model = setup
    def run():
        model = fresh_model()
        stream = _stream(corpus, tokens, seed=5)
        train_stage(model, stream, vocab, TrainConfig(steps=8, batch_size=4, seed=5))
        return model
    a, b = run(), run()
    for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert na == nb and torch.equal(pa, pb)


def test_joint_sum_dominates_instruct_on_frozen_batch(setup):
    corpus, vocab, tokens, fresh_model = setup
    from mmvq.instructset.build import batch_nll, build_example

    model = fresh_model()
    stream = _stream(corpus, tokens, seed=9)
    examples = [build_example(next(stream), vocab, 320) for _ in range(12)]
    s_i, _ = batch_nll(model, examples, vocab, "instruct")
    s_j, _ = batch_nll(model, examples, vocab, "joint")
    assert float(s_j.sum()) >= float(s_i.sum())


def test_log_invariant_sum_equals_mean_times_tokens(setup):
    corpus, vocab, tokens, fresh_model = setup
    model = fresh_model()
    log = train_stage(model, _stream(corpus, tokens, seed=3), vocab,
                      TrainConfig(steps=5, batch_size=4, seed=3))
    assert log.rows
    for row in log.rows:
        assert math.isclose(row["loss_sum"], row["loss_mean"] * row["tokens"], rel_tol=1e-12)
        assert row["tokens"] > 0


def test_resume_reproduces_uninterrupted(tmp_path, setup):
    corpus, vocab, tokens, fresh_model = setup
    config = TrainConfig(steps=10, batch_size=4, seed=7, ckpt_interval=5)
    model_full = fresh_model()
    train_stage(model_full, _stream(corpus, tokens, seed=7), vocab, config, out_dir=tmp_path)

    ckpt = tmp_path / "train_state_000005.ckpt"
    assert ckpt.exists()
    model_resumed, vocab_r, opt_state, config_r, stream_state, next_step = load_train_state(ckpt)
    assert next_step == 5
    stream = _stream(corpus, tokens, seed=7)
    stream.restore(stream_state)
    train_stage(model_resumed, stream, vocab_r, config_r,
                opt_state=opt_state, start_step=next_step)
    for (na, pa), (nb, pb) in zip(
        model_full.state_dict().items(), model_resumed.state_dict().items()
    ):
        assert na == nb and torch.equal(pa, pb), na


def test_train_state_round_trip_bytes(tmp_path, setup):
    corpus, vocab, tokens, fresh_model = setup
    from mmvq.numcore import AdamWHyper, init_adamw

    model = fresh_model()
    opt = init_adamw(model.params_dict(), AdamWHyper(lr=1e-3))
    stream = _stream(corpus, tokens, seed=2)
    next(stream)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_train_state(p1, model, vocab, opt, TrainConfig(steps=3), stream.state(), 1)
    loaded = load_train_state(p1)
    save_train_state(p2, loaded[0], loaded[1], loaded[2], loaded[3], loaded[4], loaded[5])
    assert p1.read_bytes() == p2.read_bytes()


def test_non_finite_loss_aborts_with_context(setup):
    corpus, vocab, tokens, fresh_model = setup
    model = fresh_model()
    with torch.no_grad():
        model.embed.weight[0, 0] = float("nan")
    with pytest.raises(RuntimeError, match="non-finite loss at step 1"):
        train_stage(model, _stream(corpus, tokens, seed=4), vocab,
                    TrainConfig(steps=2, batch_size=4, seed=4))


def test_validation_rows_logged(setup):
    corpus, vocab, tokens, fresh_model = setup
    from mmvq.instructset.build import build_example

    model = fresh_model()
    stream = _stream(corpus, tokens, seed=6)
    vals = {"NL_IF": [build_example(next(_stream(corpus, tokens, 8)), vocab, 320)]}
    config = TrainConfig(steps=4, batch_size=4, seed=6, eval_interval=2)
    log = train_stage(model, stream, vocab, config, val_sets=vals)
    steps = [r["step"] for r in log.val_rows]
    assert 2 in steps and 4 in steps


def test_objective_config_validated():
    with pytest.raises(ValueError, match="objective"):
        TrainConfig(objective="bad")
